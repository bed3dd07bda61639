import numpy as np
import pytest
import torch

from mdfloss import losses
from mdfloss.losses import (
    ExternalWeightsRequired, RandomFeatureNet, composite_feature_loss, l1_loss, l2_loss, lambda_grid,
    ms_ssim, ms_ssim_l1_loss, ms_ssim_loss, parse_loss, ssim, ssim_loss,
)
from mdfloss.mdf import mdf_loss, save_stack

from conftest import random_image, random_stack, smooth_image
from gradcheck import fd_relative_error
from ssim_oracle import ssim_scalar


def _pair16(seed=0):
    g = torch.Generator().manual_seed(seed)
    x = torch.rand(1, 1, 16, 16, dtype=torch.float64, generator=g)
    y = (x + 0.2 * torch.rand(1, 1, 16, 16, dtype=torch.float64, generator=g)).clamp(0, 1)
    return x, y


def test_pixel_losses_closed_form():
    x = np.zeros((8, 8, 1))
    y = np.full((8, 8, 1), 0.5)
    assert l2_loss(x, y).item() == pytest.approx(0.25)
    assert l1_loss(x, y).item() == pytest.approx(0.5)


def test_pixel_losses_match_loop():
    x, y = random_image(7, 9, 3), random_image(7, 9, 3, seed=1)
    flat = list(zip(x.ravel(), y.ravel()))
    assert l2_loss(x, y).item() == pytest.approx(sum((a - b) ** 2 for a, b in flat) / len(flat), rel=1e-12)
    assert l1_loss(x, y).item() == pytest.approx(sum(abs(a - b) for a, b in flat) / len(flat), rel=1e-12)


@pytest.mark.parametrize("channels", [1, 3])
def test_ssim_matches_scalar_oracle(channels):
    x = smooth_image(18, 21, channels, seed=2)
    y = np.clip(x + 0.1 * random_image(18, 21, channels, seed=3) - 0.05, 0, 1)
    assert abs(ssim(x, y).item() - ssim_scalar(x, y)) < 1e-6


def test_ssim_and_ms_ssim_of_identical_images():
    x = smooth_image(64, 64, 3)
    assert ssim(x, x).item() == pytest.approx(1.0, abs=1e-12)
    assert ms_ssim(x, x).item() == pytest.approx(1.0, abs=1e-12)
    assert ms_ssim_l1_loss(x, x).item() == pytest.approx(0.0, abs=1e-12)


def test_ms_ssim_weights_and_window():
    assert losses.MS_SSIM_WEIGHTS == (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
    assert losses.SSIM_WINDOW == 11 and losses.SSIM_SIGMA == 1.5
    assert losses.MS_SSIM_L1_MIX == 0.84


def test_ssim_invariant_to_constant_shift_of_both():
    x = smooth_image(32, 32)
    y = np.clip(x + 0.05 * random_image(32, 32, seed=1), 0, 1)
    # structure/contrast terms ignore a common offset; luminance changes only slightly
    assert abs(ssim(x, y).item() - ssim(x + 0.5, y + 0.5).item()) < 0.01


def test_ssim_decreases_with_noise():
    x = smooth_image(48, 48)
    rng = np.random.default_rng(0)
    vals = [ssim(x, x + s * rng.standard_normal(x.shape)).item() for s in (0.01, 0.05, 0.2)]
    assert vals[0] > vals[1] > vals[2]


def test_size_errors():
    with pytest.raises(ValueError, match="11x11"):
        ssim(random_image(10, 20), random_image(10, 20))
    with pytest.raises(ValueError, match="16x16"):
        ms_ssim(random_image(15, 40), random_image(15, 40))
    with pytest.raises(ValueError, match="shape mismatch"):
        l2_loss(random_image(8, 8), random_image(8, 9))


def test_ms_ssim_l1_is_affine_in_mix():
    x, y = _pair16()
    a = ms_ssim_l1_loss(x, y, 0.0).item()
    b = ms_ssim_l1_loss(x, y, 1.0).item()
    assert b == pytest.approx(ms_ssim_loss(x, y).item())
    for mix in (0.25, 0.84):
        assert ms_ssim_l1_loss(x, y, mix).item() == pytest.approx(mix * b + (1 - mix) * a, rel=1e-12)
    with pytest.raises(ValueError):
        ms_ssim_l1_loss(x, y, 1.5)


@pytest.mark.parametrize("fn", [l1_loss, l2_loss, ssim_loss, ms_ssim_loss, ms_ssim_l1_loss],
                         ids=lambda f: f.__name__)
def test_gradient_finite_difference(fn):
    x, y = _pair16()
    assert fd_relative_error(lambda t: fn(x, t), y) < 1e-3


def test_composite_and_lambda_grid():
    base = losses.BUILTIN["l2"]
    feat = losses.feature_distance(RandomFeatureNet(1), "rand")
    x, y = _pair16()
    assert composite_feature_loss(base, feat, 0.0) is base
    c = composite_feature_loss(base, feat, 10.0)
    assert c(x, y).item() == pytest.approx(base(x, y).item() + 10 * feat(x, y).item())
    assert c.external_weights
    with pytest.raises(ValueError):
        composite_feature_loss(base, feat, -1)
    assert lambda_grid() == [1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0, 1000.0]


def test_external_loss_needs_registration():
    with pytest.raises(ExternalWeightsRequired, match="lpips"):
        parse_loss("mse+0.1*ext:lpips")
    losses.register_feature_extractor("toy", lambda: RandomFeatureNet(1, seed=3))
    try:
        loss = parse_loss("mse+0.1*ext:toy")
        x, y = _pair16()
        want = losses.BUILTIN["mse"](x, y).item() + 0.1 * losses.external_feature_loss("toy")(x, y).item()
        assert loss(x, y).item() == pytest.approx(want)
        assert loss.name == "mse+0.1*ext:toy"
    finally:
        losses.unregister_feature_extractor("toy")


def test_parse_builtin_and_mdf(tmp_path):
    assert parse_loss("l1") is losses.BUILTIN["l1"]
    stack = random_stack()
    save_stack(stack, tmp_path / "stack")
    x, y = _pair16()
    full = parse_loss(f"mdf:{tmp_path / 'stack'}")
    assert full(x, y).item() == pytest.approx(mdf_loss(stack, x, y).item(), rel=1e-6)
    sub = parse_loss(f"mdf:{tmp_path / 'stack'}?scales=1,3")
    assert sub.name == "mdf[1,3]"
    with pytest.raises(ValueError, match="unknown loss"):
        parse_loss("vgg")
    with pytest.raises(ValueError):
        parse_loss("")


def test_loss_accepts_numpy_and_tensors():
    x = random_image(20, 20)
    assert losses.BUILTIN["ssim"](x, x).item() == pytest.approx(0.0, abs=1e-12)
    assert losses.BUILTIN["ssim"](torch.from_numpy(x.transpose(2, 0, 1)), x).item() == pytest.approx(0.0, abs=1e-12)
