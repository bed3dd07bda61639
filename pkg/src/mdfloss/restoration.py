"""Restoration networks, training recipes and the training/inference harness."""

from __future__ import annotations

import copy
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from . import checkpoint
from .imaging import add_gaussian_noise, as_image, jpeg_roundtrip, load_image, resize, to_image, to_tensor
from .losses import LossFunction
from .singan import TaskSpec, TrainingDiverged, _deterministic

log = logging.getLogger(__name__)

MODEL_KIND = "restoration_model"
ARCHITECTURES = ("dncnn", "edsr_like", "sr_resnet_like")
IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff")


# ---------------------------------------------------------------------------
# architectures
# ---------------------------------------------------------------------------


class RestorationNet(nn.Module):
    arch = ""

    def __init__(self, channels: int, scale: int, **config):
        super().__init__()
        self.channels = channels
        self.scale = scale
        self.config = {"arch": self.arch, "channels": channels, "scale": scale, **config}

    @property
    def radius(self) -> int:
        """Conservative per-side context of one output pixel, in input pixels."""
        return sum(m.kernel_size[0] // 2 for m in self.modules() if isinstance(m, nn.Conv2d))


class DnCNN(RestorationNet):
    """Plain conv stack predicting a residual that is added to the input.

    The last convolution starts at zero, so an untrained network is the identity.
    """

    arch = "dncnn"

    def __init__(self, channels: int = 1, depth: int = 17, width: int = 64, batch_norm: bool = True,
                 scale: int = 1):
        if scale != 1:
            raise ValueError("DnCNN does not change resolution")
        super().__init__(channels, 1, depth=depth, width=width, batch_norm=batch_norm)
        layers: list[nn.Module] = [nn.Conv2d(channels, width, 3, padding=1), nn.ReLU(inplace=True)]
        for _ in range(depth - 2):
            layers.append(nn.Conv2d(width, width, 3, padding=1, bias=not batch_norm))
            if batch_norm:
                layers.append(nn.BatchNorm2d(width))
            layers.append(nn.ReLU(inplace=True))
        tail = nn.Conv2d(width, channels, 3, padding=1)
        nn.init.zeros_(tail.weight)
        nn.init.zeros_(tail.bias)
        layers.append(tail)
        self.body = nn.Sequential(*layers)

    def forward(self, x):
        return x + self.body(x)


def _upsampler(width: int, scale: int, act: type[nn.Module] | None = None) -> nn.Sequential:
    if scale == 1:
        return nn.Sequential()
    if scale & (scale - 1) == 0:
        factors = [2] * int(math.log2(scale))
    elif scale == 3:
        factors = [3]
    else:
        raise ValueError(f"unsupported scale factor {scale}")
    layers: list[nn.Module] = []
    for f in factors:
        layers += [nn.Conv2d(width, width * f * f, 3, padding=1), nn.PixelShuffle(f)]
        if act is not None:
            layers.append(act())
    return nn.Sequential(*layers)


class _ResBlock(nn.Module):
    def __init__(self, width: int, batch_norm: bool, act: type[nn.Module], res_scale: float):
        super().__init__()
        layers: list[nn.Module] = [nn.Conv2d(width, width, 3, padding=1)]
        if batch_norm:
            layers.append(nn.BatchNorm2d(width))
        layers.append(act())
        layers.append(nn.Conv2d(width, width, 3, padding=1))
        if batch_norm:
            layers.append(nn.BatchNorm2d(width))
        self.body = nn.Sequential(*layers)
        self.res_scale = res_scale

    def forward(self, x):
        return x + self.res_scale * self.body(x)


class EDSRLike(RestorationNet):
    """Residual blocks without batch norm, then pixel-shuffle upsampling."""

    arch = "edsr_like"

    def __init__(self, channels: int = 3, scale: int = 4, blocks: int = 16, width: int = 64,
                 res_scale: float = 0.1):
        super().__init__(channels, scale, blocks=blocks, width=width, res_scale=res_scale)
        self.head = nn.Conv2d(channels, width, 3, padding=1)
        self.body = nn.Sequential(*[_ResBlock(width, False, lambda: nn.ReLU(inplace=True), res_scale)
                                    for _ in range(blocks)],
                                  nn.Conv2d(width, width, 3, padding=1))
        self.up = _upsampler(width, scale)
        self.tail = nn.Conv2d(width, channels, 3, padding=1)

    def forward(self, x):
        h = self.head(x)
        h = h + self.body(h)
        return self.tail(self.up(h))


class SRResNetLike(RestorationNet):
    """Residual blocks with batch norm and PReLU, then pixel-shuffle upsampling."""

    arch = "sr_resnet_like"

    def __init__(self, channels: int = 3, scale: int = 4, blocks: int = 16, width: int = 64,
                 batch_norm: bool = True):
        super().__init__(channels, scale, blocks=blocks, width=width, batch_norm=batch_norm)
        self.head = nn.Sequential(nn.Conv2d(channels, width, 9, padding=4), nn.PReLU())
        body: list[nn.Module] = [_ResBlock(width, batch_norm, nn.PReLU, 1.0) for _ in range(blocks)]
        body.append(nn.Conv2d(width, width, 3, padding=1))
        if batch_norm:
            body.append(nn.BatchNorm2d(width))
        self.body = nn.Sequential(*body)
        self.up = _upsampler(width, scale, nn.PReLU)
        self.tail = nn.Conv2d(width, channels, 9, padding=4)

    def forward(self, x):
        h = self.head(x)
        h = h + self.body(h)
        return self.tail(self.up(h))


_CLASSES = {c.arch: c for c in (DnCNN, EDSRLike, SRResNetLike)}

PRESETS = {
    "dncnn": {"arch": "dncnn", "depth": 17, "width": 64, "batch_norm": True},
    "dncnn-s": {"arch": "dncnn", "depth": 4, "width": 32, "batch_norm": False},
    "edsr": {"arch": "edsr_like", "blocks": 16, "width": 64},
    "edsr-s": {"arch": "edsr_like", "blocks": 4, "width": 32},
    "srresnet": {"arch": "sr_resnet_like", "blocks": 16, "width": 64},
    "srresnet-s": {"arch": "sr_resnet_like", "blocks": 4, "width": 32, "batch_norm": False},
}


def build_model(arch: str, channels: int, scale: int = 1, seed: int = 0, **kw) -> RestorationNet:
    """Instantiate an architecture id or a preset name with seeded weights."""
    if arch in PRESETS:
        cfg = dict(PRESETS[arch])
        arch = cfg.pop("arch")
        cfg.update(kw)
        kw = cfg
    if arch not in _CLASSES:
        raise ValueError(f"unknown architecture {arch!r}; choose from {ARCHITECTURES} or presets {sorted(PRESETS)}")
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        return _CLASSES[arch](channels=channels, scale=scale, **kw)


# ---------------------------------------------------------------------------
# recipes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Recipe:
    task: TaskSpec
    patch_size: int = 96
    augment: bool = True
    optimizer: str = "adam"
    lr: float = 1e-3
    lr_final: float = 1e-3
    schedule: str = "constant"  # constant | cosine | exponential
    weight_decay: float = 0.0
    momentum: float = 0.9
    nesterov: bool = False
    epochs: int = 50
    batch_size: int = 16
    patches_per_epoch: int = 8000
    val_patches: int = 256
    loss: str = "l2"
    sigma: float | None = None  # fixed noise level on the 0-255 scale; None draws from the task range
    jpeg_quality: int = 10
    channels: int = 3
    seed: int = 0
    deterministic: bool = True
    # cross-dataset validation: train on one corpus, select/test on another
    train_set: str = "DIV2K"
    val_set: str = "BSD500"

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.schedule not in ("constant", "cosine", "exponential"):
            raise ValueError(f"unknown schedule {self.schedule!r}")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.task.task == "sisr" and self.patch_size % self.task.sr_factor:
            raise ValueError(f"patch size {self.patch_size} is not divisible by the SR factor {self.task.sr_factor}")
        if self.batch_size < 1 or self.patches_per_epoch < 1:
            raise ValueError("batch_size and patches_per_epoch must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["task"] = self.task.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Recipe":
        d = dict(d)
        d["task"] = TaskSpec.from_dict(d["task"])
        return cls(**d)


def recipe_for(task: str, toy: bool = False, **overrides) -> Recipe:
    """Published training recipe for a task, or its desk-scale variant."""
    spec = TaskSpec(task)
    if toy:
        base = dict(task=spec, patch_size=48, optimizer="adam", lr=1e-3, lr_final=1e-3, schedule="constant",
                    epochs=5, batch_size=8, patches_per_epoch=2000, val_patches=200,
                    channels=1 if task != "sisr" else 3)
    elif task == "sisr":
        base = dict(task=spec, optimizer="adam", lr=1e-3, lr_final=1e-5, schedule="cosine", epochs=500)
    elif task == "denoise":
        base = dict(task=spec, optimizer="sgd", lr=0.1, lr_final=1e-4, schedule="exponential",
                    weight_decay=1e-4, momentum=0.9, nesterov=True, epochs=50, channels=1, train_set="BSD400",
                    val_set="BSD68")
    else:
        base = dict(task=spec, optimizer="adam", lr=1e-4, lr_final=1e-4, schedule="constant", epochs=50,
                    channels=1)
    base.update(overrides)
    return Recipe(**base)


def default_model_for(recipe: Recipe, toy: bool = False, seed: int = 0) -> RestorationNet:
    if recipe.task.task == "sisr":
        return build_model("edsr-s" if toy else "edsr", recipe.channels, recipe.task.sr_factor, seed=seed)
    return build_model("dncnn-s" if toy else "dncnn", recipe.channels, seed=seed)


# ---------------------------------------------------------------------------
# data
# ---------------------------------------------------------------------------


def dihedral(patch: np.ndarray, i: int) -> np.ndarray:
    """The i-th of the 8 rotation/flip variants (rotate i % 4 quarter turns, then flip if i >= 4)."""
    out = np.rot90(patch, i % 4, axes=(0, 1))
    if i >= 4:
        out = out[:, ::-1]
    return np.ascontiguousarray(out)


def load_images(source, channels: int) -> list[np.ndarray]:
    """Images from a directory (or a list of arrays); unreadable files are skipped with a warning."""
    if isinstance(source, (list, tuple)):
        return [as_image(im) for im in source]
    directory = Path(source)
    if not directory.is_dir():
        raise FileNotFoundError(f"dataset directory {directory} does not exist")
    images = []
    for path in sorted(directory.iterdir()):
        if path.suffix.lower() not in IMAGE_SUFFIXES:
            continue
        try:
            images.append(load_image(path, channels))
        except (OSError, ValueError) as e:
            log.warning("skipping unreadable image %s: %s", path, e)
    return images


def degrade(target: np.ndarray, recipe: Recipe, rng: np.random.Generator) -> np.ndarray:
    task = recipe.task
    if task.task == "sisr":
        h, w = target.shape[:2]
        return resize(target, h // task.sr_factor, w // task.sr_factor, "bicubic")
    if task.task == "denoise":
        sigma = recipe.sigma if recipe.sigma is not None else float(rng.uniform(*task.noise_range))
        return add_gaussian_noise(target, sigma, rng)
    return jpeg_roundtrip(target, recipe.jpeg_quality)


def make_pairs(source, task: TaskSpec, recipe: Recipe, epoch: int = 0, count: int | None = None,
               augment: bool | None = None, seed: int | None = None):
    """Random (input, target) patch pairs for one epoch.

    The draw is a pure function of ``(seed, epoch)``, so every epoch is a
    fresh shuffle and reruns are identical.
    """
    if task != recipe.task:
        recipe = replace(recipe, task=task)
    images = load_images(source, recipe.channels)
    p = recipe.patch_size
    usable = []
    for i, im in enumerate(images):
        if min(im.shape[:2]) < p:
            log.warning("skipping image %d: %dx%d is smaller than the %d px patch", i, *im.shape[:2], p)
        else:
            usable.append(im)
    if not usable:
        raise ValueError(f"no usable images in {source if not isinstance(source, list) else 'image list'}")
    augment = recipe.augment if augment is None else augment
    count = recipe.patches_per_epoch if count is None else count
    rng = np.random.default_rng([recipe.seed if seed is None else seed, epoch])
    pairs = []
    for _ in range(count):
        im = usable[int(rng.integers(len(usable)))]
        r = int(rng.integers(im.shape[0] - p + 1))
        c = int(rng.integers(im.shape[1] - p + 1))
        target = im[r:r + p, c:c + p]
        if augment:
            target = dihedral(target, int(rng.integers(8)))
        target = np.ascontiguousarray(target)
        pairs.append((degrade(target, recipe, rng), target))
    return pairs


def _batches(pairs, size):
    for i in range(0, len(pairs), size):
        chunk = pairs[i:i + size]
        yield (torch.stack([to_tensor(a)[0] for a, _ in chunk]),
               torch.stack([to_tensor(b)[0] for _, b in chunk]))


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


class RestorationDiverged(TrainingDiverged):
    def __init__(self, message: str, result: "TrainResult"):
        super().__init__(message)
        self.result = result


@dataclass
class TrainResult:
    model: RestorationNet
    history: list[dict] = field(default_factory=list)
    best_epoch: int | None = None
    initial_val_loss: float | None = None

    def __iter__(self):
        return iter((self.model, self.history))


def _lr_factor(recipe: Recipe):
    ratio = recipe.lr_final / recipe.lr
    epochs = max(recipe.epochs, 1)

    def factor(e):
        if recipe.schedule == "cosine":
            return ratio + (1 - ratio) * 0.5 * (1 + math.cos(math.pi * min(e, epochs) / epochs))
        if recipe.schedule == "exponential":
            return ratio ** (min(e, epochs - 1) / max(epochs - 1, 1))
        return 1.0

    return factor


def _optimizer(model, recipe: Recipe):
    if recipe.optimizer == "sgd":
        return torch.optim.SGD(model.parameters(), lr=recipe.lr, momentum=recipe.momentum,
                               nesterov=recipe.nesterov, weight_decay=recipe.weight_decay)
    return torch.optim.Adam(model.parameters(), lr=recipe.lr, weight_decay=recipe.weight_decay)


def evaluate_loss(model, loss: LossFunction, pairs, batch_size: int) -> tuple[float, float]:
    """Mean loss and mean PSNR of ``model`` over fixed pairs."""
    was_training = model.training
    model.eval()
    total, psnrs = 0.0, []
    with torch.no_grad():
        for inp, target in _batches(pairs, batch_size):
            out = model(inp)
            total += float(loss(target, out)) * len(inp)
            err = ((out.clamp(0, 1) - target) ** 2).mean(dim=(1, 2, 3)).double()
            psnrs += (10 * torch.log10(1.0 / err)).tolist()
    model.train(was_training)
    return total / len(pairs), float(np.mean(psnrs))


def _save_state(directory: Path, model, opt, sched, result: TrainResult, best_state, best_val, recipe):
    tensors = {f"model/{k}": v for k, v in model.state_dict().items()}
    tensors.update({f"best/{k}": v for k, v in best_state.items()})
    opt_state = opt.state_dict()
    for idx, st in opt_state["state"].items():
        for name, v in st.items():
            tensors[f"opt/{idx}/{name}"] = torch.as_tensor(v)
    meta = {
        "model": model.config,
        "recipe": recipe.to_dict(),
        "history": result.history,
        "best_epoch": result.best_epoch,
        "best_val": best_val,
        "initial_val_loss": result.initial_val_loss,
        "param_groups": opt_state["param_groups"],
        "scheduler": {k: v for k, v in sched.state_dict().items() if k != "lr_lambdas"},
    }
    checkpoint.save_container(directory, "restoration_state", tensors, meta)


def _load_state(directory: Path, model, opt, sched):
    tensors, meta = checkpoint.load_container(directory, "restoration_state")
    model.load_state_dict({k[6:]: v for k, v in tensors.items() if k.startswith("model/")})
    best = {k[5:]: v for k, v in tensors.items() if k.startswith("best/")}
    state: dict = {}
    for k, v in tensors.items():
        if k.startswith("opt/"):
            _, idx, name = k.split("/", 2)
            state.setdefault(int(idx), {})[name] = v
    opt.load_state_dict({"state": state, "param_groups": meta["param_groups"]})
    # the schedule itself is rebuilt from the recipe; only its counters are stored
    sched.load_state_dict({**meta["scheduler"], "lr_lambdas": [None] * len(opt.param_groups)})
    return meta, best


def train_restoration(model: RestorationNet, loss: LossFunction, recipe: Recipe, train_dir, val_dir,
                      checkpoint_dir=None, resume: bool = False) -> TrainResult:
    """Train with per-epoch validation and keep the lowest-validation-loss weights.

    With ``checkpoint_dir`` the full state is written after every epoch and
    ``resume=True`` continues from it, numbering epochs onward.
    """
    val_pairs = make_pairs(val_dir, recipe.task, recipe, epoch=0, count=recipe.val_patches,
                           augment=False, seed=recipe.seed + 1)
    if not val_pairs:
        raise ValueError("validation set is empty")
    result = TrainResult(model)
    opt = _optimizer(model, recipe)
    sched = torch.optim.lr_scheduler.LambdaLR(opt, _lr_factor(recipe))
    state_dir = Path(checkpoint_dir) / "state" if checkpoint_dir else None
    start = 0
    best_state, best_val = copy.deepcopy(model.state_dict()), math.inf
    if resume and state_dir is not None and (state_dir / checkpoint.MANIFEST).exists():
        meta, best_state = _load_state(state_dir, model, opt, sched)
        result.history = meta["history"]
        result.best_epoch = meta["best_epoch"]
        result.initial_val_loss = meta["initial_val_loss"]
        best_val = meta["best_val"] if meta["best_val"] is not None else math.inf
        start = len(result.history)
        log.info("resuming at epoch %d", start + 1)
    if result.initial_val_loss is None:
        result.initial_val_loss = evaluate_loss(model, loss, val_pairs, recipe.batch_size)[0]
    if recipe.epochs == 0:
        return result

    with _deterministic(recipe.deterministic):
        for epoch in range(start, recipe.epochs):
            model.train()
            pairs = make_pairs(train_dir, recipe.task, recipe, epoch=epoch)
            total = 0.0
            for inp, target in _batches(pairs, recipe.batch_size):
                value = loss(target, model(inp))
                if not torch.isfinite(value):
                    model.load_state_dict(best_state)
                    raise RestorationDiverged(
                        f"training diverged in epoch {epoch + 1}; weights reverted to epoch {result.best_epoch}",
                        result)
                opt.zero_grad()
                value.backward()
                opt.step()
                total += float(value.detach()) * len(inp)
            lr = opt.param_groups[0]["lr"]
            sched.step()
            val_loss, val_psnr = evaluate_loss(model, loss, val_pairs, recipe.batch_size)
            row = {"epoch": epoch + 1, "train_loss": total / len(pairs), "val_loss": val_loss,
                   "val_psnr": val_psnr, "lr": lr}
            result.history.append(row)
            log.info("epoch %d: train %.5g val %.5g (%.2f dB)", epoch + 1, row["train_loss"], val_loss, val_psnr)
            if val_loss < best_val:
                best_val = val_loss
                best_state = copy.deepcopy(model.state_dict())
                result.best_epoch = epoch + 1
            if state_dir is not None:
                _save_state(state_dir, model, opt, sched, result, best_state, best_val, recipe)

    model.load_state_dict(best_state)
    model.eval()
    return result


# ---------------------------------------------------------------------------
# inference
# ---------------------------------------------------------------------------


def _tile_starts(n: int, tile: int, overlap: int) -> list[int]:
    if n <= tile:
        return [0]
    starts = list(range(0, n - tile, tile - overlap))
    starts.append(n - tile)
    return starts


def _edge_weights(length: int, overlap: int, context: int, lead: bool, trail: bool) -> np.ndarray:
    """1-D blend weights: zero over ``context`` pixels at interior edges, then a linear ramp."""
    w = np.ones(length)
    ramp = (np.arange(overlap - 2 * context) + 1) / (overlap - 2 * context + 1)
    if lead:
        w[:context] = 0
        w[context:overlap - context] = ramp
    if trail:
        w[length - context:] = 0
        w[length - overlap + context:length - context] = ramp[::-1]
    return w


def infer(model: RestorationNet, img: np.ndarray, tile: int = 256, overlap: int = 16) -> np.ndarray:
    """Full-image inference, overlap-tiled with linear blending for large inputs."""
    img = as_image(img)
    if img.shape[2] != model.channels:
        raise ValueError(f"model expects {model.channels}-channel images, got {img.shape[2]}")
    if overlap >= tile:
        raise ValueError("overlap must be smaller than the tile size")
    was_training = model.training
    model.eval()
    s = model.scale
    h, w = img.shape[:2]
    x = to_tensor(img, next(model.parameters()).dtype)
    try:
        with torch.no_grad():
            if h <= tile and w <= tile:
                return to_image(model(x))
            context = min(model.radius, overlap // 2) * s
            out = torch.zeros(1, model.channels, h * s, w * s, dtype=torch.float64)
            norm = torch.zeros(1, 1, h * s, w * s, dtype=torch.float64)
            rows, cols = _tile_starts(h, tile, overlap), _tile_starts(w, tile, overlap)
            for r in rows:
                for c in cols:
                    th, tw = min(tile, h), min(tile, w)
                    y = model(x[:, :, r:r + th, c:c + tw]).double()
                    wr = _edge_weights(th * s, overlap * s, context, r > 0, r + th < h)
                    wc = _edge_weights(tw * s, overlap * s, context, c > 0, c + tw < w)
                    wt = torch.from_numpy(np.outer(wr, wc))[None, None]
                    out[:, :, r * s:(r + th) * s, c * s:(c + tw) * s] += y * wt
                    norm[:, :, r * s:(r + th) * s, c * s:(c + tw) * s] += wt
            return to_image(out / norm)
    finally:
        model.train(was_training)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def save_model(model: RestorationNet, path, meta: dict | None = None):
    meta = dict(meta or {})
    meta["model"] = model.config
    return checkpoint.save_container(path, MODEL_KIND, dict(model.state_dict()), meta)


def load_model(path) -> tuple[RestorationNet, dict]:
    tensors, meta = checkpoint.load_container(path, MODEL_KIND)
    try:
        cfg = dict(meta["model"])
        arch = cfg.pop("arch")
        model = _CLASSES[arch](**cfg)
        model.load_state_dict(tensors)
    except (KeyError, RuntimeError, TypeError) as e:
        raise checkpoint.CheckpointError(f"model manifest in {path} is inconsistent: {e}") from e
    model.eval()
    return model, meta
