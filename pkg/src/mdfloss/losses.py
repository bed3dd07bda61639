"""Baseline image losses behind one contract, plus weighted mixtures.

Every loss maps ``(reference, test)`` to a differentiable scalar. Inputs are
(N, C, H, W) tensors or (H, W, C) numpy images; the gradient is taken with
respect to ``test``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
# dynamic range L = 1 for every caller, losses and metrics alike
C1 = 0.01 ** 2
C2 = 0.03 ** 2
MS_SSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
MS_SSIM_L1_MIX = 0.84


class ExternalWeightsRequired(RuntimeError):
    pass


def as_batch(img, dtype: torch.dtype | None = None) -> torch.Tensor:
    if isinstance(img, torch.Tensor):
        t = img if img.ndim == 4 else img[None]
    else:
        arr = np.asarray(img, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        t = torch.from_numpy(np.ascontiguousarray(arr.transpose(2, 0, 1)[None]))
    return t if dtype is None else t.to(dtype)


def _pair(x, y):
    x = as_batch(x)
    y = as_batch(y)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {tuple(x.shape)} vs {tuple(y.shape)}")
    if x.dtype != y.dtype:
        x = x.to(y.dtype)
    return x, y


@dataclass(frozen=True)
class LossFunction:
    name: str
    fn: Callable[[torch.Tensor, torch.Tensor], torch.Tensor] = field(repr=False)
    multi_scale: bool = False
    external_weights: bool = False
    distance: bool = True

    def __call__(self, reference, test) -> torch.Tensor:
        return self.fn(*_pair(reference, test))

    evaluate = __call__


# ---------------------------------------------------------------------------
# pixel losses
# ---------------------------------------------------------------------------


def l2_loss(x, x_hat) -> torch.Tensor:
    x, x_hat = _pair(x, x_hat)
    return ((x - x_hat) ** 2).mean()


def l1_loss(x, x_hat) -> torch.Tensor:
    x, x_hat = _pair(x, x_hat)
    return (x - x_hat).abs().mean()


# ---------------------------------------------------------------------------
# SSIM family
# ---------------------------------------------------------------------------


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA,
                    dtype: torch.dtype = torch.float64) -> torch.Tensor:
    coords = torch.arange(size, dtype=dtype) - (size - 1) / 2
    g = torch.exp(-(coords ** 2) / (2 * sigma ** 2))
    g = g / g.sum()
    return torch.outer(g, g)


def _filter(x, win):
    c = x.shape[1]
    w = win.to(x.dtype).expand(c, 1, *win.shape)
    return F.conv2d(x, w, groups=c)


def _ssim_maps(x, y, win):
    mu_x = _filter(x, win)
    mu_y = _filter(y, win)
    sxx = _filter(x * x, win) - mu_x ** 2
    syy = _filter(y * y, win) - mu_y ** 2
    sxy = _filter(x * y, win) - mu_x * mu_y
    cs = (2 * sxy + C2) / (sxx + syy + C2)
    lum = (2 * mu_x * mu_y + C1) / (mu_x ** 2 + mu_y ** 2 + C1)
    return lum * cs, cs


def _fit_window(h: int, w: int) -> int:
    size = min(SSIM_WINDOW, h, w)
    return size if size % 2 else size - 1


def ssim(x, y) -> torch.Tensor:
    """Per-image SSIM with an 11x11 Gaussian window (sigma 1.5), valid positions only.

    Colour images are scored per channel and averaged.
    """
    x, y = _pair(x, y)
    if min(x.shape[-2:]) < SSIM_WINDOW:
        raise ValueError(f"SSIM needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {tuple(x.shape[-2:])}")
    s, _ = _ssim_maps(x, y, gaussian_window(dtype=x.dtype))
    return s.mean(dim=(1, 2, 3))


def ms_ssim(x, y, weights=MS_SSIM_WEIGHTS) -> torch.Tensor:
    """Five-scale MS-SSIM with dyadic 2x2 average-pool downsampling.

    When a scale is smaller than the 11x11 window, the window is truncated
    to the largest odd size that fits; images of 176 px or more use the
    canonical window at every scale.
    """
    x, y = _pair(x, y)
    levels = len(weights)
    need = 2 ** (levels - 1)
    if min(x.shape[-2:]) < need:
        raise ValueError(f"MS-SSIM with {levels} scales needs images of at least {need}x{need}")
    w = torch.as_tensor(weights, dtype=x.dtype)
    terms = []
    for i in range(levels):
        size = _fit_window(*x.shape[-2:])
        s, cs = _ssim_maps(x, y, gaussian_window(size, dtype=x.dtype))
        if i < levels - 1:
            terms.append(F.relu(cs.mean(dim=(1, 2, 3))))
            x = F.avg_pool2d(x, 2)
            y = F.avg_pool2d(y, 2)
        else:
            terms.append(F.relu(s.mean(dim=(1, 2, 3))))
    vals = torch.stack(terms, dim=1)
    return torch.prod(vals ** w, dim=1)


def ssim_loss(x, x_hat) -> torch.Tensor:
    return 1.0 - ssim(x, x_hat).mean()


def ms_ssim_loss(x, x_hat) -> torch.Tensor:
    return 1.0 - ms_ssim(x, x_hat).mean()


def gaussian_l1(x, x_hat) -> torch.Tensor:
    """L1 distance weighted by the SSIM Gaussian window."""
    x, x_hat = _pair(x, x_hat)
    size = _fit_window(*x.shape[-2:])
    return _filter((x - x_hat).abs(), gaussian_window(size, dtype=x.dtype)).mean()


def ms_ssim_l1_loss(x, x_hat, mix: float = MS_SSIM_L1_MIX) -> torch.Tensor:
    if not 0.0 <= mix <= 1.0:
        raise ValueError(f"mix must lie in [0, 1], got {mix}")
    return mix * ms_ssim_loss(x, x_hat) + (1.0 - mix) * gaussian_l1(x, x_hat)


# ---------------------------------------------------------------------------
# feature-wise losses from external networks
# ---------------------------------------------------------------------------

# name -> zero-argument factory returning a callable image batch -> list of feature maps
_EXTRACTORS: dict[str, Callable[[], Callable[[torch.Tensor], list[torch.Tensor]]]] = {}


def register_feature_extractor(name: str, factory) -> None:
    """Make ``ext:<name>`` available, e.g. a wrapper around pretrained VGG or LPIPS."""
    _EXTRACTORS[name] = factory


def unregister_feature_extractor(name: str) -> None:
    _EXTRACTORS.pop(name, None)


def feature_distance(extractor, name: str = "features") -> LossFunction:
    """Sum over layers of the mean squared feature difference."""

    def fn(x, y):
        with torch.no_grad():
            fx = extractor(x)
        fy = extractor(y)
        return sum(((a - b) ** 2).mean() for a, b in zip(fx, fy))

    return LossFunction(name, fn, external_weights=True)


def external_feature_loss(name: str) -> LossFunction:
    if name not in _EXTRACTORS:
        raise ExternalWeightsRequired(
            f"feature loss {name!r} needs external pretrained weights; register an adapter "
            f"with register_feature_extractor({name!r}, factory) first"
        )
    return feature_distance(_EXTRACTORS[name](), f"ext:{name}")


class RandomFeatureNet(nn.Module):
    """Small random-weight conv net exposing per-layer features.

    A stand-in for pretrained feature extractors where none is available.
    """

    def __init__(self, channels: int = 3, width: int = 8, depth: int = 3, seed: int = 0):
        super().__init__()
        g = torch.Generator().manual_seed(seed)
        chans = [channels] + [width] * depth
        self.convs = nn.ModuleList(nn.Conv2d(chans[i], chans[i + 1], 3, padding=1) for i in range(depth))
        for conv in self.convs:
            nn.init.normal_(conv.weight, 0.0, math.sqrt(2.0 / (9 * conv.in_channels)), generator=g)
            nn.init.zeros_(conv.bias)
        for p in self.parameters():
            p.requires_grad_(False)

    def forward(self, x):
        feats = []
        h = x.to(self.convs[0].weight.dtype)
        for conv in self.convs:
            h = F.relu(conv(h))
            feats.append(h)
        return feats


# ---------------------------------------------------------------------------
# composition and registry
# ---------------------------------------------------------------------------


def composite_feature_loss(base: LossFunction, feat: LossFunction, lam: float) -> LossFunction:
    """``base + lam * feat``, the usual way VGG/LPIPS losses are regularized."""
    if lam < 0:
        raise ValueError(f"lambda must be non-negative, got {lam}")
    if lam == 0:
        return base

    def fn(x, y):
        return base.fn(x, y) + lam * feat.fn(x, y)

    return LossFunction(f"{base.name}+{lam:g}*{feat.name}", fn,
                        multi_scale=base.multi_scale or feat.multi_scale,
                        external_weights=base.external_weights or feat.external_weights)


def weighted_sum(terms: list[tuple[float, LossFunction]]) -> LossFunction:
    if len(terms) == 1 and terms[0][0] == 1.0:
        return terms[0][1]

    def fn(x, y):
        return sum(w * loss.fn(x, y) for w, loss in terms)

    name = "+".join(loss.name if w == 1.0 else f"{w:g}*{loss.name}" for w, loss in terms)
    return LossFunction(name, fn, multi_scale=any(l.multi_scale for _, l in terms),
                        external_weights=any(l.external_weights for _, l in terms))


def lambda_grid() -> list[float]:
    """Feature-loss weights searched for VGG/LPIPS mixtures: 10^k, k = -3..3."""
    return [10.0 ** k for k in range(-3, 4)]


BUILTIN = {
    "l1": LossFunction("l1", lambda x, y: (x - y).abs().mean()),
    "l2": LossFunction("l2", lambda x, y: ((x - y) ** 2).mean()),
    "ssim": LossFunction("ssim", lambda x, y: 1.0 - ssim(x, y).mean()),
    "ms_ssim": LossFunction("ms_ssim", lambda x, y: 1.0 - ms_ssim(x, y).mean(), multi_scale=True),
    "ms_ssim_l1": LossFunction("ms_ssim_l1", lambda x, y: ms_ssim_l1_loss(x, y), multi_scale=True),
}
BUILTIN["mse"] = LossFunction("mse", BUILTIN["l2"].fn)


def mdf_loss_function(stack, scales=None) -> LossFunction:
    from .mdf import mdf_loss_terms

    scales = None if scales is None else sorted(set(int(s) for s in scales))
    name = "mdf" if scales is None else "mdf[" + ",".join(map(str, scales)) + "]"

    def fn(x, y):
        return mdf_loss_terms(stack, x, y, scales).sum()

    return LossFunction(name, fn, multi_scale=True)


def _parse_term(term: str) -> tuple[float, LossFunction]:
    weight = 1.0
    if "*" in term:
        coef, term = term.split("*", 1)
        weight = float(coef)
    term = term.strip()
    if term in BUILTIN:
        return weight, BUILTIN[term]
    if term.startswith("ext:"):
        return weight, external_feature_loss(term[4:])
    if term.startswith("mdf:"):
        from .mdf import load_stack

        path, _, query = term[4:].partition("?")
        scales = None
        if query:
            key, _, val = query.partition("=")
            if key != "scales":
                raise ValueError(f"unknown mdf option {key!r}")
            scales = [int(v) for v in val.split(",") if v]
        return weight, mdf_loss_function(load_stack(path), scales)
    raise ValueError(f"unknown loss {term!r}; builtins are {sorted(BUILTIN)}, or mdf:<stack>, ext:<name>")


def parse_loss(spec: str) -> LossFunction:
    """Build a loss from a string such as ``mse+0.1*ext:lpips`` or ``mdf:runs/stack``."""
    terms = [t for t in spec.split("+") if t.strip()]
    if not terms:
        raise ValueError("empty loss specification")
    return weighted_sum([_parse_term(t) for t in terms])
