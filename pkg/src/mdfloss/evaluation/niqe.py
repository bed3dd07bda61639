"""No-reference NIQE quality score with a pristine model fitted in-repo.

Features follow the usual construction: MSCN coefficients (7x7 Gaussian,
sigma 7/6, C = 1 on the 0-255 scale), an asymmetric generalized Gaussian
fit to the coefficients and to four neighbour products, on 96x96 patches at
two scales. The score is the distance between the image's feature Gaussian
and the pristine one.
"""

from __future__ import annotations

import json
from functools import lru_cache
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.ndimage import correlate1d
from scipy.special import gamma

from ..imaging import as_image, resize, to_gray

PATCH = 96
SHARPNESS_THRESHOLD = 0.75
FEATURES = 36
MODEL_FILE = "niqe_pristine.npz"

_GAM = np.arange(0.2, 10.0 + 1e-9, 0.001)
_R_GAM = gamma(2 / _GAM) ** 2 / (gamma(1 / _GAM) * gamma(3 / _GAM))


def _gauss_kernel(size: int = 7, sigma: float = 7 / 6) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2
    g = np.exp(-(x ** 2) / (2 * sigma ** 2))
    return g / g.sum()


def mscn(img255: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mean-subtracted contrast-normalized coefficients and the local deviation map."""
    k = _gauss_kernel()

    def blur(a):
        return correlate1d(correlate1d(a, k, axis=0, mode="nearest"), k, axis=1, mode="nearest")

    mu = blur(img255)
    sigma = np.sqrt(np.abs(blur(img255 * img255) - mu * mu))
    return (img255 - mu) / (sigma + 1.0), sigma


def aggd_fit(v: np.ndarray) -> tuple[float, float, float]:
    """Shape and left/right scale of an asymmetric generalized Gaussian (moment matching)."""
    v = v.ravel()
    left = v[v < 0]
    right = v[v > 0]
    lstd = np.sqrt(np.mean(left ** 2)) if left.size else 0.0
    rstd = np.sqrt(np.mean(right ** 2)) if right.size else 0.0
    if lstd == 0 or rstd == 0:
        return float("nan"), float(lstd), float(rstd)
    g = lstd / rstd
    r = np.mean(np.abs(v)) ** 2 / np.mean(v ** 2)
    rnorm = r * (g ** 3 + 1) * (g + 1) / (g ** 2 + 1) ** 2
    alpha = _GAM[np.argmin((_R_GAM - rnorm) ** 2)]
    f = np.sqrt(gamma(1 / alpha) / gamma(3 / alpha))
    return float(alpha), float(lstd * f), float(rstd * f)


# horizontal, vertical and the two diagonal neighbours
_SHIFTS = ((0, 1), (1, 0), (1, 1), (-1, 1))


def patch_features(m: np.ndarray) -> np.ndarray:
    alpha, bl, br = aggd_fit(m)
    feats = [alpha, (bl ** 2 + br ** 2) / 2]
    for dy, dx in _SHIFTS:
        prod = m * np.roll(m, (dy, dx), axis=(0, 1))
        a, l, r = aggd_fit(prod)
        eta = (r - l) * gamma(2 / a) / gamma(1 / a) if np.isfinite(a) else np.nan
        feats += [a, eta, l ** 2, r ** 2]
    return np.array(feats)


def _grid_offsets(n: int, patch: int) -> list[int]:
    """Centred crop offsets; an odd remainder uses both neighbouring offsets so
    that the patch set of a mirrored image is the mirror of the patch set."""
    rem = n - n // patch * patch
    return sorted({rem // 2, (rem + 1) // 2})


def _grid_features(gray: np.ndarray, patch: int) -> tuple[np.ndarray, np.ndarray]:
    per_scale = []
    sharp = None
    for scale in (1, 2):
        if scale == 2:
            gray = resize(gray[:, :, None], gray.shape[0] // 2, gray.shape[1] // 2, "bicubic")[:, :, 0]
        m, sigma = mscn(gray)
        p = patch // scale
        rows, cols = gray.shape[0] // p, gray.shape[1] // p
        feats = []
        sh = []
        for i in range(rows):
            for j in range(cols):
                blk = (slice(i * p, (i + 1) * p), slice(j * p, (j + 1) * p))
                feats.append(patch_features(m[blk]))
                sh.append(sigma[blk].mean())
        per_scale.append(np.array(feats))
        if sharp is None:
            sharp = np.array(sh)
    return np.hstack(per_scale), sharp


def image_features(img, patch: int = PATCH) -> tuple[np.ndarray, np.ndarray]:
    """Per-patch features (n_patches x 36) and per-patch sharpness."""
    img = as_image(img)
    if min(img.shape[:2]) < patch:
        raise ValueError(f"NIQE needs images of at least {patch}x{patch}, got {img.shape[0]}x{img.shape[1]}")
    gray = to_gray(img)[:, :, 0] * 255.0
    h, w = gray.shape
    hh, ww = h // patch * patch, w // patch * patch
    feats, sharp = [], []
    for r0 in _grid_offsets(h, patch):
        for c0 in _grid_offsets(w, patch):
            f, s = _grid_features(gray[r0:r0 + hh, c0:c0 + ww], patch)
            feats.append(f)
            sharp.append(s)
    return np.vstack(feats), np.concatenate(sharp)


def _mvg(feats: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    feats = feats[np.all(np.isfinite(feats), axis=1)]
    if len(feats) == 0:
        raise ValueError("no patch produced finite NIQE features (flat image?)")
    mu = feats.mean(axis=0)
    cov = np.cov(feats, rowvar=False) if len(feats) > 1 else np.zeros((feats.shape[1],) * 2)
    return mu, cov


def fit_pristine_model(images, patch: int = PATCH, threshold: float = SHARPNESS_THRESHOLD,
                       flips: bool = True) -> dict:
    """Multivariate Gaussian of the sharpest patches of a set of pristine images.

    With ``flips`` every image also contributes its horizontal mirror,
    vertical mirror and half-turn. Each mirror swaps the two diagonal
    feature groups, so the four variants together make the model exactly
    symmetric under flips.
    """
    rows = []
    for img in images:
        img = as_image(img)
        variants = [img, img[:, ::-1], img[::-1], img[::-1, ::-1]] if flips else [img]
        for v in variants:
            f, sharp = image_features(np.ascontiguousarray(v), patch)
            rows.append(f[sharp > threshold * sharp.max()])
    mu, cov = _mvg(np.vstack(rows))
    return {"mu": mu, "cov": cov, "patches": int(sum(len(r) for r in rows)), "patch": patch,
            "threshold": threshold, "flips": flips}


def save_pristine_model(model: dict, path, provenance: dict) -> None:
    np.savez(path, mu=model["mu"], cov=model["cov"],
             info=json.dumps({k: v for k, v in model.items() if k not in ("mu", "cov")} | provenance))


@lru_cache(maxsize=4)
def _load(path: str | None) -> tuple[np.ndarray, np.ndarray, dict]:
    if path is None:
        ref = resources.files("mdfloss") / "data" / MODEL_FILE
        with resources.as_file(ref) as p:
            data = np.load(p)
            return data["mu"], data["cov"], json.loads(str(data["info"]))
    data = np.load(Path(path))
    return data["mu"], data["cov"], json.loads(str(data["info"]))


def pristine_model(path=None) -> dict:
    mu, cov, info = _load(None if path is None else str(path))
    return {"mu": mu, "cov": cov, **info}


def niqe(img, model: dict | None = None) -> float:
    """NIQE score (lower is better) of an image in [0, 1]."""
    model = pristine_model() if model is None else model
    feats, _ = image_features(img, model.get("patch", PATCH))
    mu, cov = _mvg(feats)
    d = model["mu"] - mu
    pooled = (model["cov"] + cov) / 2
    return float(np.sqrt(d @ np.linalg.pinv(pooled) @ d))
