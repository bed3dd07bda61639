"""Phase 1: train per-scale generator/discriminator pairs on a single seed image.

Scales are trained coarse to fine. Scale ``k`` learns to restore the
task-corrupted, upsampled output of the already frozen scales below it,
while its discriminator learns to tell seed patches from restored ones.
Only the discriminators are kept afterwards (see :mod:`mdfloss.mdf`).
"""

from __future__ import annotations

import contextlib
import csv
import hashlib
import logging
import math
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import PIL
import torch
import torch.nn.functional as F

from .imaging import (
    PyramidSpec,
    add_gaussian_noise,
    as_image,
    build_pyramid,
    codec_identity,
    jpeg_roundtrip,
    resample_matrix,
    to_image,
    to_tensor,
)
from .mdf import DiscriminatorStack
from .networks import PatchDiscriminator, ResidualGenerator, receptive_field

log = logging.getLogger(__name__)

TASKS = ("sisr", "denoise", "jpeg")
ADVERSARIAL = ("bce", "wgan-gp")


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class TaskSpec:
    """Restoration task and the corruption it implies.

    ``noise_range`` is the uniform range of the noise sigma on the 0-255
    scale, ``jpeg_range`` the inclusive range of JPEG qualities. SISR adds
    no corruption between scales.
    """

    task: str
    noise_range: tuple[float, float] = (0.0, 55.0)
    jpeg_range: tuple[int, int] = (7, 10)
    sr_factor: int = 4

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}; choose from {TASKS}")
        lo, hi = self.noise_range
        if not 0 <= lo <= hi:
            raise ValueError(f"bad noise range {self.noise_range}")
        qlo, qhi = self.jpeg_range
        if not 1 <= qlo <= qhi <= 100:
            raise ValueError(f"bad JPEG quality range {self.jpeg_range}")
        if self.sr_factor < 1:
            raise ValueError("sr_factor must be >= 1")
        object.__setattr__(self, "noise_range", (float(lo), float(hi)))
        object.__setattr__(self, "jpeg_range", (int(qlo), int(qhi)))

    def to_dict(self) -> dict:
        return {"task": self.task, "noise_range": list(self.noise_range),
                "jpeg_range": list(self.jpeg_range), "sr_factor": self.sr_factor}

    @classmethod
    def from_dict(cls, d: dict) -> "TaskSpec":
        return cls(d["task"], tuple(d.get("noise_range", (0.0, 55.0))),
                   tuple(d.get("jpeg_range", (7, 10))), int(d.get("sr_factor", 4)))


@dataclass(frozen=True)
class TrainHyper:
    iterations_per_scale: int = 3000
    alpha: float = 100.0
    lr_d: float = 5e-4
    lr_g: float = 5e-4
    betas: tuple[float, float] = (0.5, 0.999)
    d_steps: int = 3
    g_steps: int = 3
    adversarial: str = "bce"
    # gradient penalty on interpolates; needed for "wgan-gp" (use ~0.1), off for "bce"
    gp_weight: float = 0.0
    # keeps the critic centred so its sigmoid stays informative
    drift_weight: float = 1e-3
    lr_decay_at: float = 0.8
    lr_decay: float = 0.1
    base_width: int = 32
    max_width: int = 128
    width_double_every: int = 4
    depth: int = 5
    kernel: int = 3
    patch_size: int | None = None
    seed: int = 0
    deterministic: bool = True
    diagnostic_samples: int = 8
    log_dir: str | None = None

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"reconstruction weight alpha must be positive, got {self.alpha}")
        if self.iterations_per_scale < 1:
            raise ValueError("iterations_per_scale must be >= 1")
        if self.adversarial not in ADVERSARIAL:
            raise ValueError(f"adversarial must be one of {ADVERSARIAL}, got {self.adversarial!r}")
        if self.patch_size is not None and self.patch_size < 11:
            raise ValueError("patch_size must cover the 11x11 receptive field")

    def width(self, k: int) -> int:
        return min(self.base_width * 2 ** ((k - 1) // self.width_double_every), self.max_width)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["betas"] = list(self.betas)
        return d


@dataclass
class ScaleModels:
    k: int
    generator: ResidualGenerator
    discriminator: PatchDiscriminator
    trained: bool = False
    diagnostics: dict = field(default_factory=dict)


def make_scale_models(k: int, channels: int, width: int = 32, depth: int = 5, kernel: int = 3,
                      strict: bool = True, seed: int = 0) -> ScaleModels:
    g = torch.Generator().manual_seed(_stream_seed(seed, k, "init"))
    disc = PatchDiscriminator(channels, width, depth, kernel, strict=strict, generator=g)
    gen = ResidualGenerator(channels, width, depth, kernel, generator=g)
    return ScaleModels(k, gen, disc)


def _stream_seed(seed: int, k: int, purpose: str) -> int:
    digest = hashlib.sha256(f"{seed}/{k}/{purpose}".encode()).digest()
    return int.from_bytes(digest[:8], "little") & (2**63 - 1)


# ---------------------------------------------------------------------------
# task corruption
# ---------------------------------------------------------------------------


def sample_corruption(task: TaskSpec, rng: np.random.Generator) -> dict:
    """Draw this step's corruption parameters (the first draws from ``rng``)."""
    if task.task == "denoise":
        return {"sigma": float(rng.uniform(*task.noise_range))}
    if task.task == "jpeg":
        lo, hi = task.jpeg_range
        return {"quality": int(rng.integers(lo, hi + 1))}
    return {}


def corrupt_for_task(img: np.ndarray, task: TaskSpec, rng: np.random.Generator,
                     sigma: float | None = None, quality: int | None = None) -> np.ndarray:
    """Apply the task's corruption; ``sigma``/``quality`` force a severity."""
    img = as_image(img)
    if task.task == "sisr":
        return img.copy()
    params = sample_corruption(task, rng) if sigma is None and quality is None else {}
    if task.task == "denoise":
        return add_gaussian_noise(img, params.get("sigma", sigma), rng)
    return jpeg_roundtrip(img, params.get("quality", quality))


def _corrupt_tensor(x: torch.Tensor, task: TaskSpec, rng: np.random.Generator) -> torch.Tensor:
    if task.task == "sisr":
        return x
    return to_tensor(corrupt_for_task(to_image(x), task, rng), x.dtype)


# ---------------------------------------------------------------------------
# crop windows through the frozen chain
# ---------------------------------------------------------------------------


def _expand(win, radius, shape):
    r0, r1, c0, c1 = win
    h, w = shape
    return (max(0, r0 - radius), min(h, r1 + radius), max(0, c0 - radius), min(w, c1 + radius))


def _support(n_in, n_out, lo, hi):
    cols = np.nonzero(resample_matrix(n_in, n_out, "bilinear")[lo:hi].any(axis=0))[0]
    return int(cols[0]), int(cols[-1]) + 1


def _plan_windows(shapes, k, patch, radius, rng):
    """Per level j <= k: (exact-output window, computed window).

    The output window at level k is the training crop; lower levels get
    the support needed to upsample into the next level's computed window,
    so the cropped chain reproduces the full-image chain on the crop.
    """
    h, w = shapes[k - 1]
    if patch is None or (h <= patch and w <= patch):
        out = (0, h, 0, w)
    else:
        ph, pw = min(patch, h), min(patch, w)
        r0 = int(rng.integers(0, h - ph + 1))
        c0 = int(rng.integers(0, w - pw + 1))
        out = (r0, r0 + ph, c0, c0 + pw)
    plans = {}
    for j in range(k, 0, -1):
        comp = _expand(out, radius, shapes[j - 1])
        plans[j] = (out, comp)
        if j > 1:
            rh = _support(shapes[j - 2][0], shapes[j - 1][0], comp[0], comp[1])
            rw = _support(shapes[j - 2][1], shapes[j - 1][1], comp[2], comp[3])
            out = (rh[0], rh[1], rw[0], rw[1])
    return plans


def _crop(x, win):
    return x[..., win[0]:win[1], win[2]:win[3]]


def _rel(inner, outer):
    return (inner[0] - outer[0], inner[1] - outer[0], inner[2] - outer[2], inner[3] - outer[2])


def _upsample_window(x, shape_lo, shape_hi, src, dst):
    mh = resample_matrix(shape_lo[0], shape_hi[0], "bilinear")[dst[0]:dst[1], src[0]:src[1]]
    mw = resample_matrix(shape_lo[1], shape_hi[1], "bilinear")[dst[2]:dst[3], src[2]:src[3]]
    mh = torch.tensor(mh, dtype=x.dtype)
    mw = torch.tensor(mw, dtype=x.dtype)
    return torch.einsum("ij,ncjk,lk->ncil", mh, x, mw)


@torch.no_grad()
def _generator_input(lower, levels, shapes, task, rng, k, plans):
    """Corrupted input to G^k on its computed window."""
    _, comp = plans[1]
    inp = _corrupt_tensor(_crop(levels[0], comp), task, rng)
    for j in range(1, k):
        out, comp = plans[j]
        y = _crop(lower[j - 1].generator(inp), _rel(out, comp))
        nxt_out, nxt_comp = plans[j + 1]
        up = _upsample_window(y, shapes[j - 1], shapes[j], out, nxt_comp)
        inp = _corrupt_tensor(up, task, rng)
    return inp


def generate(lower: list[ScaleModels], seed_pyramid: list[np.ndarray], task: TaskSpec,
             rng: np.random.Generator) -> np.ndarray:
    """Full-resolution sample of the frozen chain at the top of ``lower``."""
    k = len(lower)
    levels = [to_tensor(im) for im in seed_pyramid[:k]]
    shapes = [im.shape[:2] for im in seed_pyramid[:k]]
    radius = lower[0].generator.radius
    plans = _plan_windows(shapes, k, None, radius, rng)
    inp = _generator_input(lower, levels, shapes, task, rng, k, plans)
    with torch.no_grad():
        return to_image(lower[k - 1].generator(inp))


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


@contextlib.contextmanager
def _deterministic(enabled: bool):
    if not enabled:
        yield
        return
    prev = torch.are_deterministic_algorithms_enabled()
    torch.use_deterministic_algorithms(True)
    try:
        yield
    finally:
        torch.use_deterministic_algorithms(prev)


def _gradient_penalty(disc, real, fake, rng):
    a = float(rng.uniform())
    interp = (a * real + (1 - a) * fake).requires_grad_(True)
    out = disc.critic(interp)
    (grad,) = torch.autograd.grad(out.sum(), interp, create_graph=True)
    return ((grad.norm(2, dim=1) - 1) ** 2).mean()


def _adv_d(kind, d_real, d_fake):
    if kind == "bce":
        return (F.binary_cross_entropy_with_logits(d_real, torch.ones_like(d_real))
                + F.binary_cross_entropy_with_logits(d_fake, torch.zeros_like(d_fake)))
    return d_fake.mean() - d_real.mean()


def _adv_g(kind, d_fake):
    if kind == "bce":
        return F.binary_cross_entropy_with_logits(d_fake, torch.ones_like(d_fake))
    return -d_fake.mean()


def _as_pyramids(seed_pyramid):
    if seed_pyramid and isinstance(seed_pyramid[0], np.ndarray):
        return [seed_pyramid]
    return list(seed_pyramid)


def train_scale(k: int, seed_pyramid, lower: list[ScaleModels], task: TaskSpec,
                hyper: TrainHyper = TrainHyper()) -> tuple[ScaleModels, np.ndarray]:
    """Train scale ``k`` on top of the frozen scales ``lower`` (1..k-1).

    ``seed_pyramid`` is one seed pyramid (list of levels, coarse -> fine)
    or a list of pyramids, in which case each iteration draws one seed
    uniformly. Corruption is re-drawn every iteration. Returns the trained
    pair and one restored sample of the last training window.
    """
    pyramids = _as_pyramids(seed_pyramid)
    if len(lower) != k - 1:
        raise ValueError(f"scale {k} needs {k - 1} lower scales, got {len(lower)}")
    untrained = [m.k for m in lower if not m.trained]
    if untrained:
        raise ValueError(f"lower scales {untrained} are not trained")
    channels = pyramids[0][0].shape[2]
    models = make_scale_models(k, channels, hyper.width(k), hyper.depth, hyper.kernel, seed=hyper.seed)
    gen, disc = models.generator, models.discriminator
    rng = np.random.default_rng(_stream_seed(hyper.seed, k, "train"))

    data = []
    for pyr in pyramids:
        data.append(([to_tensor(im) for im in pyr[:k]], [im.shape[:2] for im in pyr[:k]]))

    opt_d = torch.optim.Adam(disc.parameters(), lr=hyper.lr_d, betas=hyper.betas)
    opt_g = torch.optim.Adam(gen.parameters(), lr=hyper.lr_g, betas=hyper.betas)
    milestone = [max(1, int(hyper.lr_decay_at * hyper.iterations_per_scale))]
    sched_d = torch.optim.lr_scheduler.MultiStepLR(opt_d, milestone, hyper.lr_decay)
    sched_g = torch.optim.lr_scheduler.MultiStepLR(opt_g, milestone, hyper.lr_decay)

    def draw():
        idx = int(rng.integers(len(data))) if len(data) > 1 else 0
        levels, shapes = data[idx]
        plans = _plan_windows(shapes, k, hyper.patch_size, gen.radius, rng)
        inp = _generator_input(lower, levels, shapes, task, rng, k, plans)
        out, comp = plans[k]
        return inp, _crop(levels[k - 1], out), _rel(out, comp)

    rows = []
    with _deterministic(hyper.deterministic):
        for it in range(hyper.iterations_per_scale):
            inp, real, rel = draw()
            for _ in range(hyper.d_steps):
                with torch.no_grad():
                    fake = _crop(gen(inp), rel)
                d_real = disc.critic(real)
                d_fake = disc.critic(fake)
                loss_d = _adv_d(hyper.adversarial, d_real, d_fake) + hyper.drift_weight * (d_real ** 2).mean()
                if hyper.gp_weight:
                    loss_d = loss_d + hyper.gp_weight * _gradient_penalty(disc, real, fake, rng)
                opt_d.zero_grad()
                loss_d.backward()
                opt_d.step()
            for _ in range(hyper.g_steps):
                fake = _crop(gen(inp), rel)
                adv_g = _adv_g(hyper.adversarial, disc.critic(fake))
                rec = F.mse_loss(fake, real)
                loss_g = adv_g + hyper.alpha * rec
                opt_g.zero_grad()
                loss_g.backward()
                opt_g.step()
            sched_d.step()
            sched_g.step()
            row = (it, loss_d.item(), adv_g.item(), rec.item())
            if not all(math.isfinite(v) for v in row[1:]):
                raise TrainingDiverged(
                    f"scale {k} diverged at iteration {it}: d_loss={row[1]}, g_adv={row[2]}, rec_mse={row[3]}"
                )
            rows.append(row)

    gen.eval()
    disc.eval()
    for p in list(gen.parameters()) + list(disc.parameters()):
        p.requires_grad_(False)
    models.trained = True

    margins, recs, corrupted = [], [], []
    with torch.no_grad():
        for _ in range(hyper.diagnostic_samples):
            inp, real, rel = draw()
            fake = _crop(gen(inp), rel)
            margins.append(float(disc(real).mean() - disc(fake).mean()))
            recs.append(float(F.mse_loss(fake, real)))
            corrupted.append(float(F.mse_loss(_crop(inp, rel), real)))
    models.diagnostics = {
        "margin": float(np.mean(margins)),
        "reconstruction_mse": float(np.mean(recs)),
        "corrupted_input_mse": float(np.mean(corrupted)),
        "final_d_loss": rows[-1][1],
        "final_g_adv": rows[-1][2],
        "final_rec_mse": rows[-1][3],
    }
    log.info("scale %d: margin %.3f, rec mse %.3g (corrupted %.3g)", k,
             models.diagnostics["margin"], models.diagnostics["reconstruction_mse"],
             models.diagnostics["corrupted_input_mse"])

    if hyper.log_dir:
        path = Path(hyper.log_dir)
        path.mkdir(parents=True, exist_ok=True)
        with open(path / f"scale_{k:02d}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "adv_d", "adv_g", "rec_mse"])
            w.writerows(rows)
    return models, to_image(fake)


def _seed_hash(img: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(img, dtype="<f4").tobytes()).hexdigest()


def train_multi_seed_stack(seeds: list[np.ndarray], task: TaskSpec, spec: PyramidSpec = PyramidSpec(),
                           hyper: TrainHyper = TrainHyper()) -> DiscriminatorStack:
    if not seeds:
        raise ValueError("at least one seed image is required")
    seeds = [as_image(s) for s in seeds]
    if len({s.shape[2] for s in seeds}) != 1:
        raise ValueError("all seed images must have the same channel count")
    rf = receptive_field(hyper.depth, hyper.kernel)
    if rf != spec.min_size:
        raise ValueError(f"discriminator receptive field {rf} does not match pyramid min_size {spec.min_size}")
    pyramids = [build_pyramid(s, spec) for s in seeds]

    trained: list[ScaleModels] = []
    for k in range(1, spec.scales + 1):
        models, _ = train_scale(k, pyramids, trained, task, hyper)
        trained.append(models)

    meta = {
        "task": task.to_dict(),
        "seed_hashes": [_seed_hash(s) for s in seeds],
        "seed_shapes": [list(s.shape) for s in seeds],
        "pyramid": spec.to_dict(),
        "level_shapes": [[list(sh) for sh in spec.level_shapes(*s.shape[:2])] for s in seeds],
        "hyper": hyper.to_dict(),
        "alpha": hyper.alpha,
        "receptive_field": rf,
        "diagnostics": [m.diagnostics for m in trained],
        "codec": codec_identity(),
        "versions": {"torch": torch.__version__, "numpy": np.__version__, "pillow": PIL.__version__},
        "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    return DiscriminatorStack([m.discriminator for m in trained], meta)


def train_mdf_stack(seed: np.ndarray, task: TaskSpec, spec: PyramidSpec = PyramidSpec(),
                    hyper: TrainHyper = TrainHyper()) -> DiscriminatorStack:
    return train_multi_seed_stack([seed], task, spec, hyper)
