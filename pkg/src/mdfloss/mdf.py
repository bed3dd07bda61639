"""Frozen discriminator stacks used as a multi-scale feature loss.

Every discriminator in the stack sees the image at its native resolution,
never a rescaled copy: a stack trained on a seed pyramid is applied to the
full-size training image at every scale.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass
from types import MappingProxyType

import numpy as np
import torch

from . import checkpoint
from .imaging import RECEPTIVE_FIELD, to_tensor
from .networks import LEAKY_SLOPE, PatchDiscriminator

STACK_KIND = "mdf_stack"


class DiscriminatorStack:
    """K frozen discriminators, coarse -> fine, plus provenance metadata."""

    def __init__(self, discriminators, meta: dict | None = None):
        discs = []
        for d in discriminators:
            d = d.eval()
            for p in d.parameters():
                p.requires_grad_(False)
            discs.append(d)
        if not discs:
            raise ValueError("a stack needs at least one discriminator")
        channels = {d.in_channels for d in discs}
        layers = {d.layers for d in discs}
        if len(channels) != 1 or len(layers) != 1:
            raise ValueError("all discriminators must share input channels and depth")
        self._discs = tuple(discs)
        self.meta = MappingProxyType(copy.deepcopy(dict(meta or {})))

    def __len__(self) -> int:
        return len(self._discs)

    def __getitem__(self, k: int) -> PatchDiscriminator:
        return self._discs[k]

    @property
    def discriminators(self) -> tuple[PatchDiscriminator, ...]:
        return self._discs

    @property
    def scales(self) -> int:
        return len(self._discs)

    @property
    def layers(self) -> int:
        return self._discs[0].layers

    @property
    def channels(self) -> int:
        return self._discs[0].in_channels

    @property
    def dtype(self) -> torch.dtype:
        return self._discs[0].convs[0].weight.dtype

    def to(self, dtype: torch.dtype) -> "DiscriminatorStack":
        """Copy of the stack in another precision (e.g. float64 for gradient checks)."""
        return DiscriminatorStack([copy.deepcopy(d).to(dtype) for d in self._discs], dict(self.meta))

    def architecture(self) -> dict:
        return {
            "channels": self.channels,
            "depth": self._discs[0].depth,
            "kernel": self._discs[0].kernel,
            "widths": [d.width for d in self._discs],
            "leaky_slope": LEAKY_SLOPE,
            "taps": "leaky-relu hidden activations, then sigmoid terminal map",
        }


@dataclass
class FeatureSet:
    """features[k][l] is the l-th tap of the k-th scale, shape (N, C, h, w)."""

    features: list[list[torch.Tensor]]

    def __post_init__(self):
        counts = {len(f) for f in self.features}
        if len(counts) > 1:
            raise ValueError("every scale must expose the same number of layers")

    @property
    def scales(self) -> int:
        return len(self.features)

    @property
    def layers(self) -> int:
        return len(self.features[0]) if self.features else 0


def _as_batch(img, dtype: torch.dtype) -> torch.Tensor:
    if isinstance(img, torch.Tensor):
        t = img if img.ndim == 4 else img[None]
        return t.to(dtype)
    return to_tensor(np.asarray(img), dtype)


def _check_input(stack: DiscriminatorStack, x: torch.Tensor) -> None:
    if x.shape[1] != stack.channels:
        raise ValueError(f"stack expects {stack.channels}-channel images, got {x.shape[1]}")
    if x.shape[-2] < RECEPTIVE_FIELD or x.shape[-1] < RECEPTIVE_FIELD:
        raise ValueError(
            f"image {x.shape[-2]}x{x.shape[-1]} is smaller than the "
            f"{RECEPTIVE_FIELD}x{RECEPTIVE_FIELD} receptive field"
        )


def _resolve_scales(stack: DiscriminatorStack, scales) -> list[int]:
    if scales is None:
        return list(range(1, stack.scales + 1))
    out = sorted(set(int(s) for s in scales))
    bad = [s for s in out if not 1 <= s <= stack.scales]
    if bad:
        raise ValueError(f"scales {bad} outside 1..{stack.scales}")
    return out


def extract_features(stack: DiscriminatorStack, img, scales=None) -> FeatureSet:
    x = _as_batch(img, stack.dtype)
    _check_input(stack, x)
    return FeatureSet([stack[k - 1].features(x) for k in _resolve_scales(stack, scales)])


def mdf_loss_terms(stack: DiscriminatorStack, x, x_hat, scales=None) -> torch.Tensor:
    """(len(scales), L) tensor of squared feature distances, summed over
    channels and positions and divided by the batch size."""
    ref = _as_batch(x, stack.dtype)
    test = _as_batch(x_hat, stack.dtype)
    if ref.shape != test.shape:
        raise ValueError(f"shape mismatch: {tuple(ref.shape)} vs {tuple(test.shape)}")
    _check_input(stack, ref)
    n = ref.shape[0]
    rows = []
    for k in _resolve_scales(stack, scales):
        d = stack[k - 1]
        with torch.no_grad():
            fr = d.features(ref)
        ft = d.features(test)
        rows.append(torch.stack([((a - b) ** 2).sum() / n for a, b in zip(fr, ft)]))
    if not rows:
        return torch.zeros((0, stack.layers), dtype=stack.dtype)
    return torch.stack(rows)


def mdf_loss(stack: DiscriminatorStack, x, x_hat) -> torch.Tensor:
    """Sum over scales and layers of squared feature differences.

    Differentiable with respect to ``x_hat`` only; the reference branch is
    evaluated without autograd.
    """
    return mdf_loss_terms(stack, x, x_hat).sum()


def mdf_loss_subset(stack: DiscriminatorStack, x, x_hat, scales) -> torch.Tensor:
    scales = list(scales)
    if not scales:
        ref = _as_batch(x, stack.dtype)
        test = _as_batch(x_hat, stack.dtype)
        if ref.shape != test.shape:
            raise ValueError(f"shape mismatch: {tuple(ref.shape)} vs {tuple(test.shape)}")
        return test.sum() * 0.0
    return mdf_loss_terms(stack, x, x_hat, scales).sum()


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def save_stack(stack: DiscriminatorStack, path):
    tensors = {}
    for k, d in enumerate(stack.discriminators, start=1):
        for name, p in d.state_dict().items():
            tensors[f"scale{k:02d}/{name}"] = p
    meta = dict(stack.meta)
    meta["architecture"] = stack.architecture()
    meta["scales"] = stack.scales
    meta["layers"] = stack.layers
    return checkpoint.save_container(path, STACK_KIND, tensors, meta)


def load_stack(path) -> DiscriminatorStack:
    tensors, meta = checkpoint.load_container(path, STACK_KIND)
    try:
        arch = meta["architecture"]
        discs = []
        for k, width in enumerate(arch["widths"], start=1):
            d = PatchDiscriminator(arch["channels"], width, arch["depth"], arch["kernel"], strict=False)
            prefix = f"scale{k:02d}/"
            state = {name[len(prefix):]: t for name, t in tensors.items() if name.startswith(prefix)}
            d.load_state_dict(state)
            discs.append(d)
    except (KeyError, RuntimeError, TypeError) as e:
        raise checkpoint.CheckpointError(f"stack manifest in {path} is inconsistent: {e}") from e
    return DiscriminatorStack(discs, meta)
