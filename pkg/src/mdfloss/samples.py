"""Natural test images bundled with scikit-image, for demos, tests and model fitting."""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np
from skimage import data as skdata

from .imaging import as_image, save_image, to_gray

# photographs of natural scenes; used to fit the NIQE pristine model
PRISTINE = ("astronaut", "camera", "coffee", "chelsea", "rocket", "coins")
# held out from the pristine fit
HELD_OUT = ("hubble_deep_field", "moon", "grass", "gravel", "brick", "clock", "immunohistochemistry", "cell")


def load(name: str, gray: bool = False) -> np.ndarray:
    arr = getattr(skdata, name)()
    if arr.dtype == bool:
        arr = arr.astype(np.uint8) * 255
    if arr.ndim == 3 and arr.shape[2] == 4:
        arr = arr[:, :, :3]
    img = as_image(arr / 255.0)
    if img.shape[2] == 1 and not gray:
        img = np.repeat(img, 3, axis=2)
    return to_gray(img) if gray else img


def natural_images(names=PRISTINE + HELD_OUT, gray: bool = False) -> list[np.ndarray]:
    return [load(n, gray) for n in names]


def random_crops(images: list[np.ndarray], n: int, size: int, rng: np.random.Generator,
                 min_std: float = 0.0) -> list[np.ndarray]:
    """``n`` crops of ``size`` x ``size``, cycling through ``images``.

    Crops whose standard deviation is below ``min_std`` (flat sky, blank
    background) are redrawn.
    """
    usable = [im for im in images if min(im.shape[:2]) >= size]
    if not usable:
        raise ValueError(f"no image is at least {size}x{size}")
    crops = []
    i = 0
    attempts = 0
    while len(crops) < n:
        im = usable[i % len(usable)]
        i += 1
        r = rng.integers(0, im.shape[0] - size + 1)
        c = rng.integers(0, im.shape[1] - size + 1)
        crop = im[r:r + size, c:c + size].copy()
        attempts += 1
        if crop.std() < min_std and attempts < 50 * n:
            continue
        crops.append(crop)
    return crops


def write_dataset(directory, images: list[np.ndarray], prefix: str = "img") -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, im in enumerate(images):
        p = directory / f"{prefix}_{i:04d}.png"
        save_image(p, im)
        paths.append(p)
    return paths


def cache_dir() -> Path:
    """Dataset cache root, overridable through ``MDF_CACHE``."""
    return Path(os.environ.get("MDF_CACHE", Path.home() / ".cache" / "mdfloss"))


DATASETS = {"pristine": PRISTINE, "held-out": HELD_OUT}


def ensure_dataset(name: str, channels: int = 3) -> Path:
    """Directory of PNGs for a bundled image set, written to the cache on first use."""
    if name not in DATASETS:
        raise ValueError(f"unknown dataset {name!r}; choose from {sorted(DATASETS)}")
    directory = cache_dir() / f"{name}-{'gray' if channels == 1 else 'rgb'}"
    names = DATASETS[name]
    if not directory.is_dir() or len(list(directory.glob("*.png"))) != len(names):
        directory.mkdir(parents=True, exist_ok=True)
        for n in names:
            save_image(directory / f"{n}.png", load(n, gray=channels == 1))
    return directory
