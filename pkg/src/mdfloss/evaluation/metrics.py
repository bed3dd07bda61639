"""Full-reference metrics and benchmark reports."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from ..imaging import add_gaussian_noise, as_image, jpeg_roundtrip, resize
from ..losses import as_batch, ms_ssim, ssim
from ..singan import TaskSpec
from .niqe import niqe


def psnr(x, x_hat, peak: float = 1.0) -> float:
    """PSNR in dB; ``math.inf`` for identical images."""
    a = np.asarray(x, dtype=np.float64)
    b = np.asarray(x_hat, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    err = np.mean((a - b) ** 2)
    if err == 0:
        return math.inf
    return float(10 * np.log10(peak ** 2 / err))


def ssim_metric(x, x_hat) -> float:
    with torch.no_grad():
        return float(ssim(as_batch(x, torch.float64), as_batch(x_hat, torch.float64))[0])


def ms_ssim_metric(x, x_hat) -> float:
    with torch.no_grad():
        return float(ms_ssim(as_batch(x, torch.float64), as_batch(x_hat, torch.float64))[0])


def _mean(values):
    vals = [v for v in values if v is not None and not (isinstance(v, float) and math.isnan(v))]
    return float(np.mean(vals)) if vals else math.nan


@dataclass
class MetricReport:
    """Per-image PSNR/SSIM/NIQE rows and their means, for one condition."""

    label: str
    rows: list[dict] = field(default_factory=list)

    COLUMNS = ("image", "psnr", "psnr_infinite", "ssim", "niqe", "input_psnr")

    def mean(self, key: str) -> float:
        return _mean(r[key] for r in self.rows)

    @property
    def mean_psnr(self) -> float:
        return self.mean("psnr")

    @property
    def mean_ssim(self) -> float:
        return self.mean("ssim")

    @property
    def mean_niqe(self) -> float:
        return self.mean("niqe")

    @property
    def psnr_infinite(self) -> bool:
        return any(r["psnr_infinite"] for r in self.rows)

    def summary(self) -> dict:
        return {"label": self.label, "images": len(self.rows), "psnr": self.mean_psnr,
                "psnr_infinite": self.psnr_infinite, "ssim": self.mean_ssim, "niqe": self.mean_niqe,
                "input_psnr": self.mean("input_psnr")}

    def to_csv(self, path) -> Path:
        path = Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=("label",) + self.COLUMNS)
            w.writeheader()
            for r in self.rows:
                w.writerow({"label": self.label, **{k: _fmt(r[k]) for k in self.COLUMNS}})
            w.writerow({"label": self.label, "image": "mean", "psnr": _fmt(self.mean_psnr),
                        "psnr_infinite": self.psnr_infinite, "ssim": _fmt(self.mean_ssim),
                        "niqe": _fmt(self.mean_niqe), "input_psnr": _fmt(self.mean("input_psnr"))})
        return path


def _fmt(v):
    if isinstance(v, float):
        return "inf" if math.isinf(v) else f"{v:.6f}"
    return v


def degrade_for_eval(img: np.ndarray, task: TaskSpec | None, sigma: float = 25.0, quality: int = 10,
                     rng: np.random.Generator | None = None) -> tuple[np.ndarray, np.ndarray]:
    """(degraded input, reference) for one test image; ``task=None`` leaves it clean."""
    img = as_image(img)
    if task is None:
        return img, img
    if task.task == "sisr":
        f = task.sr_factor
        h, w = img.shape[0] // f * f, img.shape[1] // f * f
        ref = img[:h, :w]
        return resize(ref, h // f, w // f, "bicubic"), ref
    if task.task == "denoise":
        return add_gaussian_noise(img, sigma, rng if rng is not None else np.random.default_rng(0)), img
    return jpeg_roundtrip(img, quality), img


def evaluate_model(model, test_images, task: TaskSpec | str | None, label: str = "model",
                   sigma: float = 25.0, quality: int = 10, seed: int = 0, with_niqe: bool = True,
                   names: list[str] | None = None) -> MetricReport:
    """Degrade each test image for ``task``, restore it and score against the original.

    ``model`` is a restoration network (run through tiled inference) or any
    callable mapping an image to an image. ``test_images`` is a directory or
    a list of images.
    """
    from ..restoration import RestorationNet, infer, load_images

    if isinstance(task, str):
        task = None if task in ("none", "identity") else TaskSpec(task)
    if isinstance(test_images, (str, Path)):
        names = names or sorted(p.name for p in Path(test_images).iterdir()
                                if p.suffix.lower() in (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff"))
        channels = model.channels if isinstance(model, RestorationNet) else None
        images = load_images(test_images, channels)
    else:
        images = [as_image(im) for im in test_images]
    names = names or [f"img_{i:04d}" for i in range(len(images))]
    run = (lambda im: infer(model, im)) if isinstance(model, RestorationNet) else model
    report = MetricReport(label)
    for i, (name, img) in enumerate(zip(names, images)):
        rng = np.random.default_rng([seed, i])
        inp, ref = degrade_for_eval(img, task, sigma, quality, rng)
        out = np.asarray(run(inp), dtype=np.float64)
        p = psnr(ref, out)
        score = math.nan
        if with_niqe and min(out.shape[:2]) >= 96:
            score = niqe(np.clip(out, 0, 1))
        report.rows.append({
            "image": name,
            "psnr": p,
            "psnr_infinite": math.isinf(p),
            "ssim": ssim_metric(ref, out),
            "niqe": score,
            "input_psnr": psnr(ref, inp) if inp.shape == ref.shape else math.nan,
        })
    return report
