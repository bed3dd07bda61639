import json

import numpy as np
import pytest
import torch
from numpy.lib.stride_tricks import sliding_window_view

from mdfloss import checkpoint
from mdfloss.mdf import (
    DiscriminatorStack, extract_features, load_stack, mdf_loss, mdf_loss_subset, mdf_loss_terms, save_stack,
)
from mdfloss.networks import PatchDiscriminator, receptive_field

from conftest import random_image, random_stack
from gradcheck import fd_relative_error


def numpy_taps(disc: PatchDiscriminator, img: np.ndarray) -> list[np.ndarray]:
    """Valid cross-correlation + leaky ReLU written directly in numpy."""
    h = img.transpose(2, 0, 1).astype(np.float64)
    taps = []
    n = len(disc.convs)
    for i, conv in enumerate(disc.convs):
        w = conv.weight.detach().double().numpy()
        b = conv.bias.detach().double().numpy()
        win = sliding_window_view(h, w.shape[-2:], axis=(1, 2))  # C, H', W', kh, kw
        h = np.einsum("cyxij,ocij->oyx", win, w) + b[:, None, None]
        if i < n - 1:
            h = np.where(h > 0, h, 0.2 * h)
        else:
            h = 1.0 / (1.0 + np.exp(-h))
        taps.append(h)
    return taps


def brute_force_mdf(stack, x, y):
    total = 0.0
    for k in range(stack.scales):
        for a, b in zip(numpy_taps(stack[k], x), numpy_taps(stack[k], y)):
            total += float(((a - b) ** 2).sum())
    return total


def test_identity_is_exactly_zero(stack):
    x = random_image(32, 40)
    assert mdf_loss(stack, x, x).item() == 0.0


@pytest.mark.parametrize("seed", range(5))
def test_matches_brute_force(seed):
    stack = random_stack(seed=seed, dtype=torch.float64)
    x = random_image(24, 30, seed=seed)
    y = random_image(24, 30, seed=seed + 100)
    got = mdf_loss(stack, x, y).item()
    want = brute_force_mdf(stack, x, y)
    assert abs(got - want) <= 1e-9 * abs(want)


def test_terms_shape_and_layout(stack):
    x, y = random_image(20, 20), random_image(20, 20, seed=1)
    t = mdf_loss_terms(stack, x, y)
    assert t.shape == (3, 5)
    np.testing.assert_allclose(t[1].sum().item(), mdf_loss_subset(stack, x, y, [2]).item(), rtol=1e-6)
    assert mdf_loss_subset(stack, x, y, []).item() == 0.0


def test_full_resolution_at_every_scale(stack):
    fs = extract_features(stack, random_image(30, 25))
    assert fs.scales == 3 and fs.layers == 5
    for taps in fs.features:
        assert [t.shape[-2:] for t in taps] == [(28 - 2 * i, 23 - 2 * i) for i in range(5)]


def test_batch_average():
    stack = random_stack(dtype=torch.float64)
    x = torch.rand(2, 1, 16, 16, dtype=torch.float64)
    y = torch.rand(2, 1, 16, 16, dtype=torch.float64)
    single = [mdf_loss(stack, x[i], y[i]).item() for i in range(2)]
    assert mdf_loss(stack, x, y).item() == pytest.approx(np.mean(single), rel=1e-12)


def test_gradient_finite_difference():
    stack = random_stack(dtype=torch.float64)
    x = torch.rand(1, 1, 16, 16, dtype=torch.float64, generator=torch.Generator().manual_seed(0))
    y = torch.rand(1, 1, 16, 16, dtype=torch.float64, generator=torch.Generator().manual_seed(1))
    assert fd_relative_error(lambda t: mdf_loss(stack, x, t), y) < 1e-3


def test_only_test_branch_carries_gradient(stack):
    x = torch.rand(1, 1, 16, 16, requires_grad=True)
    y = torch.rand(1, 1, 16, 16, requires_grad=True)
    mdf_loss(stack, x, y).backward()
    assert x.grad is None and y.grad is not None
    assert all(p.grad is None for d in stack.discriminators for p in d.parameters())


def test_errors(stack):
    with pytest.raises(ValueError, match="receptive field"):
        mdf_loss(stack, random_image(10, 10), random_image(10, 10))
    with pytest.raises(ValueError, match="shape mismatch"):
        mdf_loss(stack, random_image(16, 16), random_image(16, 17))
    with pytest.raises(ValueError, match="1-channel"):
        mdf_loss(stack, random_image(16, 16, 3), random_image(16, 16, 3))
    with pytest.raises(ValueError, match="outside"):
        mdf_loss_terms(stack, random_image(16, 16), random_image(16, 16), [4])


def test_receptive_field_arithmetic():
    assert receptive_field(5, 3) == 11
    assert PatchDiscriminator(1, 4).receptive_field == 11
    with pytest.raises(ValueError, match="11x11"):
        PatchDiscriminator(1, 4, depth=4)
    # one output pixel depends on exactly an 11x11 input patch
    d = PatchDiscriminator(1, 4, generator=torch.Generator().manual_seed(0)).double()
    x = torch.zeros(1, 1, 21, 21, dtype=torch.float64, requires_grad=True)
    d.critic(x)[0, 0, 5, 5].backward()
    rows, cols = np.nonzero(x.grad[0, 0].numpy())
    assert rows.max() - rows.min() + 1 <= 11 and cols.max() - cols.min() + 1 <= 11


def test_stack_is_frozen_and_meta_read_only(stack):
    assert all(not p.requires_grad for d in stack.discriminators for p in d.parameters())
    with pytest.raises(TypeError):
        stack.meta["task"] = "x"


def test_round_trip(tmp_path, stack):
    save_stack(stack, tmp_path / "s")
    again = load_stack(tmp_path / "s")
    x, y = random_image(20, 20), random_image(20, 20, seed=4)
    assert mdf_loss(stack, x, y).item() == mdf_loss(again, x, y).item()
    assert again.meta["task"] == {"task": "denoise"}


def test_corrupt_checkpoint_is_reported(tmp_path, stack):
    path = save_stack(stack, tmp_path / "s")
    manifest = tmp_path / "s" / checkpoint.MANIFEST
    data = json.loads(manifest.read_text())
    data["kind"] = "something-else"
    manifest.write_text(json.dumps(data))
    with pytest.raises(checkpoint.CheckpointError):
        load_stack(tmp_path / "s")
    with pytest.raises(checkpoint.CheckpointError):
        load_stack(tmp_path / "missing")


def test_mixed_stacks_rejected():
    with pytest.raises(ValueError):
        DiscriminatorStack([PatchDiscriminator(1, 4), PatchDiscriminator(3, 4)])
    with pytest.raises(ValueError):
        DiscriminatorStack([])
