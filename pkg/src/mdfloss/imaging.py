"""Image plumbing: resampling, scale pyramids and distortion generators.

Images are numpy arrays of shape (H, W, C) with C in {1, 3} and nominal
range [0, 1]. Values may leave that range inside model outputs; call
:func:`clamp` before encoding.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any

import numpy as np
import PIL
import torch
from PIL import Image as PILImage
from PIL import features as pil_features

RECEPTIVE_FIELD = 11

FILTERS = ("lanczos", "bicubic", "bilinear")
DISTORTION_KINDS = (
    "gaussian_noise",
    "jpeg",
    "blur_downup",
    "sinusoid",
    "contrast",
    "brightness",
    "pyramid_permute",
)
# kinds with a scalar severity that can be tuned to a PSNR target
SEVERITY_KINDS = ("gaussian_noise", "blur_downup", "sinusoid", "contrast", "brightness")
SEVERITY_BOUNDS = {
    "gaussian_noise": (0.0, 55.0),
    "brightness": (0.0, 1.0),
    "contrast": (0.0, 1.0),
    "sinusoid": (0.0, 1.0),
}
SINUSOID_CYCLES = 8
BLUR_FACTOR = 4.0


# ---------------------------------------------------------------------------
# representation
# ---------------------------------------------------------------------------


def as_image(arr: Any) -> np.ndarray:
    """Validate and return ``arr`` as a float64 (H, W, C) image."""
    img = np.asarray(arr, dtype=np.float64)
    if img.ndim == 2:
        img = img[:, :, None]
    if img.ndim != 3 or img.shape[2] not in (1, 3):
        raise ValueError(f"expected an (H, W, C) image with C in {{1, 3}}, got shape {img.shape}")
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise ValueError(f"empty image of shape {img.shape}")
    if not np.all(np.isfinite(img)):
        raise ValueError("image contains non-finite values")
    return img


def clamp(img: np.ndarray) -> np.ndarray:
    return np.clip(img, 0.0, 1.0)


def to_uint8(img: np.ndarray) -> np.ndarray:
    """Quantize to 8 bits with round-half-up after clamping."""
    return np.floor(clamp(img) * 255.0 + 0.5).astype(np.uint8)


def from_uint8(arr: np.ndarray) -> np.ndarray:
    return as_image(np.asarray(arr, dtype=np.float64) / 255.0)


def to_gray(img: np.ndarray) -> np.ndarray:
    """ITU-R BT.601 luma, the same weights PIL uses for mode 'L'."""
    img = as_image(img)
    if img.shape[2] == 1:
        return img
    w = np.array([0.299, 0.587, 0.114])
    return (img @ w)[:, :, None]


def to_tensor(img: np.ndarray, dtype: torch.dtype = torch.float32) -> torch.Tensor:
    """(H, W, C) image -> (1, C, H, W) tensor."""
    img = as_image(img)
    return torch.from_numpy(np.ascontiguousarray(img.transpose(2, 0, 1)[None])).to(dtype)


def to_image(t: torch.Tensor) -> np.ndarray:
    """(1, C, H, W) or (C, H, W) tensor -> (H, W, C) float64 image."""
    t = t.detach().cpu()
    if t.ndim == 4:
        if t.shape[0] != 1:
            raise ValueError("to_image expects a batch of one")
        t = t[0]
    return t.double().numpy().transpose(1, 2, 0).copy()


def load_image(path, channels: int | None = None) -> np.ndarray:
    with PILImage.open(path) as im:
        if channels == 1:
            im = im.convert("L")
        elif channels == 3 or im.mode not in ("L", "RGB"):
            im = im.convert("RGB")
        arr = np.asarray(im)
    return from_uint8(arr)


def save_image(path, img: np.ndarray) -> None:
    u8 = to_uint8(as_image(img))
    mode = "L" if u8.shape[2] == 1 else "RGB"
    PILImage.fromarray(u8[:, :, 0] if mode == "L" else u8, mode=mode).save(path)


def mse(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.mean((np.asarray(a, np.float64) - np.asarray(b, np.float64)) ** 2))


def _psnr(a: np.ndarray, b: np.ndarray) -> float:
    m = mse(a, b)
    return math.inf if m == 0 else 10.0 * math.log10(1.0 / m)


# ---------------------------------------------------------------------------
# resampling
# ---------------------------------------------------------------------------


def _bilinear(x):
    return np.maximum(0.0, 1.0 - np.abs(x))


def _bicubic(x, a=-0.5):
    x = np.abs(x)
    out = np.zeros_like(x)
    near = x < 1
    far = (x >= 1) & (x < 2)
    out[near] = ((a + 2) * x[near] - (a + 3)) * x[near] ** 2 + 1
    out[far] = ((x[far] - 5) * x[far] + 8) * x[far] * a - 4 * a
    return out


def _lanczos(x, a=3):
    return np.where(np.abs(x) < a, np.sinc(x) * np.sinc(x / a), 0.0)


KERNELS = {"bilinear": (_bilinear, 1.0), "bicubic": (_bicubic, 2.0), "lanczos": (_lanczos, 3.0)}


@lru_cache(maxsize=256)
def resample_matrix(n_in: int, n_out: int, filter: str = "lanczos") -> np.ndarray:
    """Row-stochastic (n_out, n_in) matrix resampling one axis.

    Pixel centres sit at half-integers. On downsampling the kernel is
    stretched by the scale factor (antialiasing); taps falling outside the
    input are dropped and the remaining weights renormalized.
    """
    if filter not in KERNELS:
        raise ValueError(f"unknown filter {filter!r}; choose from {FILTERS}")
    if n_in < 1 or n_out < 1:
        raise ValueError(f"resample sizes must be positive, got {n_in} -> {n_out}")
    kernel, radius = KERNELS[filter]
    scale = n_in / n_out
    stretch = max(scale, 1.0)
    centers = (np.arange(n_out) + 0.5) * scale
    offsets = (np.arange(n_in) + 0.5)[None, :] - centers[:, None]
    w = kernel(offsets / stretch)
    w[np.abs(offsets) >= radius * stretch] = 0.0
    w /= w.sum(axis=1, keepdims=True)
    w.setflags(write=False)
    return w


def resize(img: np.ndarray, out_h: int, out_w: int, filter: str = "lanczos") -> np.ndarray:
    img = as_image(img)
    if out_h < 1 or out_w < 1:
        raise ValueError(f"target dimensions must be positive, got {out_h}x{out_w}")
    h, w, _ = img.shape
    mh = resample_matrix(h, out_h, filter)
    mw = resample_matrix(w, out_w, filter)
    return np.einsum("ij,jkc,lk->ilc", mh, img, mw, optimize=True)


def resize_tensor(x: torch.Tensor, out_h: int, out_w: int, filter: str = "bilinear") -> torch.Tensor:
    """Same resampling as :func:`resize` for (N, C, H, W) tensors."""
    mh = torch.tensor(resample_matrix(x.shape[-2], out_h, filter), dtype=x.dtype, device=x.device)
    mw = torch.tensor(resample_matrix(x.shape[-1], out_w, filter), dtype=x.dtype, device=x.device)
    return torch.einsum("ij,ncjk,lk->ncil", mh, x, mw)


# ---------------------------------------------------------------------------
# scale pyramids
# ---------------------------------------------------------------------------


def _round_half_up(v: float) -> int:
    return int(math.floor(v + 0.5))


@dataclass(frozen=True)
class PyramidSpec:
    scales: int = 8
    rho: float = 2.0
    rounding: str = "half_up"
    filter: str = "lanczos"
    min_size: int = RECEPTIVE_FIELD

    def __post_init__(self):
        if self.scales < 1:
            raise ValueError("a pyramid needs at least one scale")
        if not self.rho > 1:
            raise ValueError(f"rho must exceed 1, got {self.rho}")
        if self.rounding not in ("half_up", "floor", "ceil"):
            raise ValueError(f"unknown rounding rule {self.rounding!r}")

    def _round(self, v: float) -> int:
        if self.rounding == "floor":
            return int(math.floor(v + 1e-9))
        if self.rounding == "ceil":
            return int(math.ceil(v - 1e-9))
        return _round_half_up(v)

    def level_shapes(self, h: int, w: int) -> list[tuple[int, int]]:
        """Dimensions of levels 1..K (coarse -> fine), each from the original size."""
        shapes = []
        for k in range(1, self.scales + 1):
            f = self.rho ** (k - self.scales)
            shapes.append((max(1, self._round(h * f)), max(1, self._round(w * f))))
        return shapes

    def to_dict(self) -> dict:
        return {"scales": self.scales, "rho": self.rho, "rounding": self.rounding,
                "filter": self.filter, "min_size": self.min_size}


def build_pyramid(img: np.ndarray, spec: PyramidSpec = PyramidSpec()) -> list[np.ndarray]:
    """Seed pyramid, coarse -> fine; the last element is ``img`` itself."""
    img = as_image(img)
    shapes = spec.level_shapes(img.shape[0], img.shape[1])
    ch, cw = shapes[0]
    if min(ch, cw) < spec.min_size:
        raise ValueError(
            f"coarsest level {ch}x{cw} is smaller than the {spec.min_size}x{spec.min_size} "
            f"discriminator receptive field; use fewer scales or a larger seed "
            f"(need at least {math.ceil(spec.min_size * spec.rho ** (spec.scales - 1))} px)"
        )
    levels = [resize(img, h, w, spec.filter) for h, w in shapes[:-1]]
    levels.append(img.copy())
    return levels


# ---------------------------------------------------------------------------
# task corruptions
# ---------------------------------------------------------------------------


def add_gaussian_noise(img: np.ndarray, sigma255: float, rng: np.random.Generator) -> np.ndarray:
    """Additive white Gaussian noise, sigma on the 0-255 scale, no clamping."""
    if sigma255 < 0:
        raise ValueError(f"noise sigma must be non-negative, got {sigma255}")
    img = as_image(img)
    if sigma255 == 0:
        return img.copy()
    return img + rng.standard_normal(img.shape) * (sigma255 / 255.0)


def codec_identity() -> str:
    return f"Pillow {PIL.__version__} / libjpeg {pil_features.version('jpg')}"


def jpeg_roundtrip(img: np.ndarray, quality: int) -> np.ndarray:
    """decode(encode(clamp(img))) with the baseline JPEG codec."""
    if isinstance(quality, bool) or int(quality) != quality or not 1 <= quality <= 100:
        raise ValueError(f"JPEG quality must be an integer in [1, 100], got {quality!r}")
    img = as_image(img)
    u8 = to_uint8(img)
    if u8.shape[2] == 1:
        pil = PILImage.fromarray(u8[:, :, 0], mode="L")
    else:
        pil = PILImage.fromarray(u8, mode="RGB")
    buf = io.BytesIO()
    pil.save(buf, format="JPEG", quality=int(quality))
    buf.seek(0)
    with PILImage.open(buf) as dec:
        arr = np.asarray(dec.convert(pil.mode))
    return from_uint8(arr)


# ---------------------------------------------------------------------------
# Laplacian pyramid permutation
# ---------------------------------------------------------------------------


def laplacian_pyramid(img: np.ndarray, levels: int = 4) -> list[np.ndarray]:
    """Band-pass levels fine -> coarse; the last entry is the low-pass residual."""
    img = as_image(img)
    if levels < 1:
        raise ValueError("levels must be >= 1")
    h, w, _ = img.shape
    if min(h, w) < 2 ** (levels - 1) * 2 and levels > 1:
        raise ValueError(f"{h}x{w} image is too small for a {levels}-level pyramid")
    bands = []
    cur = img
    for _ in range(levels - 1):
        ch, cw = cur.shape[:2]
        low = resize(cur, (ch + 1) // 2, (cw + 1) // 2, "bilinear")
        bands.append(cur - resize(low, ch, cw, "bilinear"))
        cur = low
    bands.append(cur)
    return bands


def reconstruct_laplacian(bands: list[np.ndarray]) -> np.ndarray:
    cur = bands[-1]
    for band in reversed(bands[:-1]):
        cur = band + resize(cur, band.shape[0], band.shape[1], "bilinear")
    return cur


def permute_levels(bands: list[np.ndarray], rng: np.random.Generator) -> list[np.ndarray]:
    """Shuffle pixel positions independently on every level; channel vectors move together."""
    out = []
    for band in bands:
        h, w, c = band.shape
        flat = band.reshape(-1, c)
        out.append(flat[rng.permutation(h * w)].reshape(h, w, c))
    return out


def pyramid_permute(img: np.ndarray, rng: np.random.Generator, levels: int = 4) -> np.ndarray:
    return reconstruct_laplacian(permute_levels(laplacian_pyramid(img, levels), rng))


# ---------------------------------------------------------------------------
# analysis distortions
# ---------------------------------------------------------------------------


def blur_downup(img: np.ndarray, factor: float = BLUR_FACTOR) -> np.ndarray:
    """Bilinear down- then up-sampling by ``factor``.

    Non-integer target sizes are handled by blending the results for the
    neighbouring integer sizes, so the output is continuous in ``factor``.
    """
    img = as_image(img)
    if factor < 1:
        raise ValueError(f"blur factor must be >= 1, got {factor}")
    h, w, _ = img.shape

    def split(n):
        t = n / factor
        lo = max(1, int(math.floor(t)))
        frac = min(max(t - lo, 0.0), 1.0)
        return [(lo, 1.0 - frac), (min(lo + 1, n), frac)]

    out = np.zeros_like(img)
    for th, wh in split(h):
        for tw, ww in split(w):
            weight = wh * ww
            if weight == 0:
                continue
            low = resize(img, th, tw, "bilinear")
            out += weight * resize(low, h, w, "bilinear")
    return out


def sinusoid_pattern(h: int, w: int, c: int, cycles: float = SINUSOID_CYCLES) -> np.ndarray:
    """Grating varying along x with ``cycles`` periods per image width."""
    x = (np.arange(w) + 0.5) / w
    wave = np.sin(2 * np.pi * cycles * x)
    return np.broadcast_to(wave[None, :, None], (h, w, c)).copy()


def add_sinusoid(img: np.ndarray, amplitude: float, cycles: float = SINUSOID_CYCLES) -> np.ndarray:
    img = as_image(img)
    return img + amplitude * sinusoid_pattern(*img.shape, cycles=cycles)


def change_contrast(img: np.ndarray, amount: float) -> np.ndarray:
    """Scale about the image mean by ``1 - amount`` (amount=0 is the identity)."""
    img = as_image(img)
    mean = img.mean()
    return mean + (1.0 - amount) * (img - mean)


def change_brightness(img: np.ndarray, offset: float) -> np.ndarray:
    return as_image(img) + offset


@dataclass(frozen=True)
class DistortionSpec:
    kind: str
    params: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in DISTORTION_KINDS:
            raise ValueError(f"unknown distortion {self.kind!r}; choose from {DISTORTION_KINDS}")
        if self.kind == "gaussian_noise":
            s = self.params.get("sigma", 0.0)
            if not 0 <= s <= 55:
                raise ValueError(f"noise sigma must lie in [0, 55] (0-255 scale), got {s}")
        if self.kind == "jpeg":
            q = self.params.get("quality", 10)
            if isinstance(q, bool) or int(q) != q or not 1 <= q <= 100:
                raise ValueError(f"JPEG quality must be an integer in [1, 100], got {q!r}")


def apply_distortion(img: np.ndarray, spec: DistortionSpec) -> np.ndarray:
    rng = np.random.default_rng(spec.seed)
    p = spec.params
    if spec.kind == "gaussian_noise":
        return add_gaussian_noise(img, p.get("sigma", 0.0), rng)
    if spec.kind == "jpeg":
        return jpeg_roundtrip(img, int(p.get("quality", 10)))
    if spec.kind == "blur_downup":
        return blur_downup(img, p.get("factor", BLUR_FACTOR))
    if spec.kind == "sinusoid":
        return add_sinusoid(img, p.get("amplitude", 0.0), p.get("cycles", SINUSOID_CYCLES))
    if spec.kind == "contrast":
        return change_contrast(img, p.get("amount", 0.0))
    if spec.kind == "brightness":
        return change_brightness(img, p.get("offset", 0.0))
    return pyramid_permute(img, rng, p.get("levels", 4))


_SEVERITY_PARAM = {
    "gaussian_noise": "sigma",
    "blur_downup": "factor",
    "sinusoid": "amplitude",
    "contrast": "amount",
    "brightness": "offset",
}


def _linear_direction(img: np.ndarray, kind: str, seed: int) -> np.ndarray:
    """d such that distort(img, s) = img + s * d for the linear kinds."""
    if kind == "gaussian_noise":
        return np.random.default_rng(seed).standard_normal(img.shape) / 255.0
    if kind == "brightness":
        return np.ones_like(img)
    if kind == "contrast":
        return -(img - img.mean())
    return sinusoid_pattern(*img.shape)


def severity_for_psnr(img: np.ndarray, kind: str, target_psnr_db: float, seed: int = 0,
                      tol_db: float = 1e-3) -> float:
    """Severity parameter of ``kind`` that lands ``img`` at ``target_psnr_db``.

    Noise, brightness, contrast and the grating are affine in their severity,
    so MSE is quadratic in it and the answer is closed-form. Blur is found by
    a bracketing scan followed by bisection.
    """
    img = as_image(img)
    if kind not in SEVERITY_KINDS:
        raise ValueError(f"{kind!r} has no continuous severity parameter; choose from {SEVERITY_KINDS}")
    target_mse = 10.0 ** (-target_psnr_db / 10.0)
    if kind in SEVERITY_BOUNDS:
        lo, hi = SEVERITY_BOUNDS[kind]
        d = _linear_direction(img, kind, seed)
        energy = float(np.mean(d * d))
        if energy == 0:
            raise ValueError(f"{kind} cannot change this image (zero distortion energy)")
        s = math.sqrt(target_mse / energy)
        if s > hi:
            floor_db = 10.0 * math.log10(1.0 / (hi * hi * energy))
            raise ValueError(
                f"target {target_psnr_db} dB unreachable for {kind}: achievable range is "
                f"[{floor_db:.2f}, inf) dB with severity <= {hi}"
            )
        return s

    h, w, _ = img.shape
    grid = np.geomspace(1.0, float(min(h, w)), 64)
    vals = [_psnr(img, blur_downup(img, f)) for f in grid]
    bracket = None
    for i in range(1, len(grid)):
        if vals[i - 1] >= target_psnr_db >= vals[i]:
            bracket = (grid[i - 1], grid[i])
            break
    if bracket is None:
        finite = [v for v in vals if math.isfinite(v)]
        raise ValueError(
            f"target {target_psnr_db} dB unreachable for blur_downup: achievable range is "
            f"[{min(finite):.2f}, inf) dB"
        )
    a, b = bracket
    for _ in range(100):
        mid = 0.5 * (a + b)
        p = _psnr(img, blur_downup(img, mid))
        if abs(p - target_psnr_db) < tol_db:
            return mid
        if p > target_psnr_db:
            a = mid
        else:
            b = mid
    return 0.5 * (a + b)


def distort_at_target_psnr(img: np.ndarray, kind: str, target_psnr_db: float, seed: int = 0) -> np.ndarray:
    s = severity_for_psnr(img, kind, target_psnr_db, seed)
    return apply_distortion(img, DistortionSpec(kind, {_SEVERITY_PARAM[kind]: s}, seed))
