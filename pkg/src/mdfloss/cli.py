"""Command-line entry point: ``mdf <command> [--config FILE] [overrides]``.

Every command validates its configuration against the bundled JSON schema,
writes its artifacts under ``<output_dir>/<command>-<config hash>`` and
exits with 0 on success, 2 on configuration errors and 3 on runtime or
training failures.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import logging
import sys
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

log = logging.getLogger("mdfloss")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

DEFAULT_CHANNELS = {"sisr": 3, "denoise": 1, "jpeg": 1}


class ConfigError(Exception):
    pass


def load_schema() -> dict:
    return json.loads((resources.files("mdfloss") / "data" / "config.schema.json").read_text())


def validate(config: dict) -> None:
    try:
        jsonschema.validate(config, load_schema())
    except jsonschema.ValidationError as e:
        where = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise ConfigError(f"invalid config at {where}: {e.message}") from None


def config_hash(command: str, config: dict) -> str:
    blob = json.dumps({"command": command, "config": config}, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def _set(cfg: dict, dotted: str, value) -> None:
    keys = dotted.split(".")
    d = cfg
    for k in keys[:-1]:
        d = d.setdefault(k, {})
    d[keys[-1]] = value


# flag destination -> config path
OVERRIDES = {
    "task": "task", "seed_images": "seed_images", "seed_size": "seed_size", "channels": "channels",
    "scales": "pyramid.scales", "rho": "pyramid.rho", "iterations": "hyper.iterations_per_scale",
    "patch": "hyper.patch_size", "model": "model", "loss": "loss", "losses": "losses", "toy": "toy",
    "epochs": "recipe.epochs", "sigma": "recipe.sigma", "train_dir": "train_dir", "val_dir": "val_dir",
    "test_dir": "test_dir", "images_dir": "images_dir", "stack": "stack", "model_path": "model_path",
    "matrix": "matrix", "output_dir": "output_dir", "seed": "seed", "deterministic": "deterministic",
    "kinds": "study.kinds", "levels": "study.levels", "sets": "probe.sets", "pooling": "probe.pooling",
    "probe_images": "probe.images", "ks": "sweep.scales", "sweep_mode": "sweep.mode",
    "eval_sigma": "eval.sigma", "quality": "eval.quality",
}


def build_config(args) -> dict:
    cfg: dict = {}
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise ConfigError(f"config file {path} does not exist")
        try:
            cfg = json.loads(path.read_text())
        except json.JSONDecodeError as e:
            raise ConfigError(f"config file {path} is not valid JSON: {e}") from None
        validate(cfg)
    for dest, key in OVERRIDES.items():
        value = getattr(args, dest, None)
        if value is not None:
            _set(cfg, key, value)
    validate(cfg)
    return cfg


def run_dir(command: str, cfg: dict, args) -> Path:
    if getattr(args, "run_dir", None):
        path = Path(args.run_dir)
    else:
        path = Path(cfg.get("output_dir", "runs")) / f"{command}-{config_hash(command, cfg)}"
    path.mkdir(parents=True, exist_ok=True)
    (path / "config.json").write_text(json.dumps(cfg, indent=2, sort_keys=True) + "\n")
    return path


def _emit(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True, default=float))


def _require_file(path, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"{what} {p} does not exist")
    return p


def _task(cfg: dict):
    from .singan import TaskSpec

    opts = cfg.get("task_options", {})
    return TaskSpec(cfg.get("task", "denoise"), tuple(opts.get("noise_range", (0, 55))),
                    tuple(opts.get("jpeg_range", (7, 10))), int(opts.get("sr_factor", 4)))


def _channels(cfg: dict) -> int:
    return int(cfg.get("channels", DEFAULT_CHANNELS[cfg.get("task", "denoise")]))


def _write_rows(path: Path, rows: list[dict], columns) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(columns), extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow({k: (f"{v:.8g}" if isinstance(v, float) else v) for k, v in r.items()})
    return path


# ---------------------------------------------------------------------------
# train-loss
# ---------------------------------------------------------------------------


def _seed_images(cfg: dict) -> list[np.ndarray]:
    from .imaging import load_image, resize

    paths = cfg.get("seed_images")
    if not paths:
        raise ConfigError("train-loss needs at least one seed image (--seed-image or seed_images)")
    images = []
    for p in paths:
        img = load_image(_require_file(p, "seed image"), _channels(cfg))
        if cfg.get("seed_size"):
            img = resize(img, cfg["seed_size"], cfg["seed_size"], "lanczos")
        images.append(img)
    return images


def _pyramid(cfg: dict, scales: int | None = None):
    from .imaging import PyramidSpec

    p = cfg.get("pyramid", {})
    return PyramidSpec(scales or p.get("scales", 8), p.get("rho", 2.0), filter=p.get("filter", "lanczos"))


def _hyper(cfg: dict, log_dir: Path | None = None):
    from .singan import TrainHyper

    h = dict(cfg.get("hyper", {}))
    if "betas" in h:
        h["betas"] = tuple(h["betas"])
    return TrainHyper(seed=cfg.get("seed", 0), deterministic=cfg.get("deterministic", True),
                      log_dir=str(log_dir) if log_dir else None, **h)


def _train_stack(cfg: dict, out: Path, scales: int | None = None):
    from .mdf import save_stack
    from .singan import train_multi_seed_stack

    seeds = _seed_images(cfg)
    spec = _pyramid(cfg, scales)
    for s in seeds:
        if min(spec.level_shapes(*s.shape[:2])[0]) < spec.min_size:
            raise ConfigError(f"seed image {s.shape[0]}x{s.shape[1]} is too small for {spec.scales} scales "
                              f"at rho={spec.rho}: the coarsest level must be at least {spec.min_size} px")
    stack = train_multi_seed_stack(seeds, _task(cfg), spec, _hyper(cfg, out / "logs"))
    save_stack(stack, out / "stack")
    rows = [{"scale": k + 1, **d} for k, d in enumerate(stack.meta["diagnostics"])]
    _write_rows(out / "diagnostics.csv", rows,
                ["scale", "margin", "reconstruction_mse", "corrupted_input_mse", "final_d_loss", "final_g_adv",
                 "final_rec_mse"])
    return stack


def cmd_train_loss(cfg: dict, args) -> int:
    out = run_dir("train-loss", cfg, args)
    stack = _train_stack(cfg, out)
    _emit({"stack": str(out / "stack"), "task": stack.meta["task"]["task"], "scales": stack.scales,
           "seeds": len(stack.meta["seed_hashes"]), "diagnostics": stack.meta["diagnostics"]})
    return EXIT_OK


# ---------------------------------------------------------------------------
# train-restore
# ---------------------------------------------------------------------------


def _recipe(cfg: dict):
    from dataclasses import replace

    from .restoration import recipe_for

    task = _task(cfg)
    r = recipe_for(task.task, toy=cfg.get("toy", False), **cfg.get("recipe", {}))
    return replace(r, task=task, channels=_channels(cfg), seed=cfg.get("seed", 0),
                   deterministic=cfg.get("deterministic", True), loss=cfg.get("loss", "l2"))


def _preflight_loss(spec: str, channels: int):
    from . import checkpoint
    from .losses import parse_loss

    for term in spec.split("+"):
        term = term.split("*", 1)[-1].strip()
        if term.startswith("mdf:"):
            path = _require_file(term[4:].split("?", 1)[0], "discriminator stack")
            try:
                meta = checkpoint.read_manifest(path)["meta"]
            except checkpoint.CheckpointError as e:
                raise ConfigError(str(e)) from None
            got = meta["architecture"]["channels"]
            if got != channels:
                raise ConfigError(f"stack {path} takes {got}-channel images but the recipe uses {channels} channels")
    try:
        return parse_loss(spec)
    except (ValueError, RuntimeError) as e:
        raise ConfigError(str(e)) from None


def _dataset(cfg: dict, key: str, default: str) -> Path:
    from .samples import ensure_dataset

    if cfg.get(key):
        return _require_file(cfg[key], key.replace("_", " "))
    return ensure_dataset(default, _channels(cfg))


def _train_model(cfg: dict, out: Path, loss, resume: bool = False):
    from .restoration import build_model, default_model_for, save_model, train_restoration

    recipe = _recipe(cfg)
    if cfg.get("model"):
        model = build_model(cfg["model"], recipe.channels, recipe.task.sr_factor if recipe.task.task == "sisr" else 1,
                            seed=recipe.seed)
    else:
        model = default_model_for(recipe, toy=cfg.get("toy", False), seed=recipe.seed)
    result = train_restoration(model, loss, recipe, _dataset(cfg, "train_dir", "pristine"),
                               _dataset(cfg, "val_dir", "held-out"), checkpoint_dir=out, resume=resume)
    save_model(result.model, out / "model", {"recipe": recipe.to_dict(), "loss": loss.name,
                                            "best_epoch": result.best_epoch})
    _write_rows(out / "history.csv", result.history, ["epoch", "train_loss", "val_loss", "val_psnr", "lr"])
    return result


def cmd_train_restore(cfg: dict, args) -> int:
    loss = _preflight_loss(cfg.get("loss", "l2"), _channels(cfg))
    out = run_dir("train-restore", cfg, args)
    result = _train_model(cfg, out, loss, resume=args.resume)
    _emit({"model": str(out / "model"), "history": str(out / "history.csv"), "epochs": len(result.history),
           "best_epoch": result.best_epoch, "initial_val_loss": result.initial_val_loss,
           "final": result.history[-1] if result.history else None})
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval / study / probe / scale
# ---------------------------------------------------------------------------


def cmd_eval(cfg: dict, args) -> int:
    from .evaluation.metrics import evaluate_model

    if args.ref or args.test:
        from .imaging import load_image
        from .mdf import load_stack, mdf_loss_terms

        if not (cfg.get("stack") and args.ref and args.test):
            raise ConfigError("stack mode needs --stack, --ref and --test")
        stack = load_stack(_require_file(cfg["stack"], "discriminator stack"))
        ref = load_image(_require_file(args.ref, "reference image"), stack.channels)
        test = load_image(_require_file(args.test, "test image"), stack.channels)
        if ref.shape != test.shape:
            raise ConfigError(f"reference {ref.shape} and test {test.shape} differ in shape")
        terms = mdf_loss_terms(stack, ref, test).detach().double()
        _emit({"mdf": float(terms.sum()), "per_scale": terms.sum(dim=1).tolist(), "terms": terms.tolist()})
        return EXIT_OK

    from .restoration import load_model

    spec = cfg.get("model_path", "identity")
    if spec == "identity":
        model = lambda im: im  # noqa: E731
        task = cfg.get("task", "none")
    else:
        model, _ = load_model(_require_file(spec, "model checkpoint"))
        task = cfg.get("task", "denoise")
    test_dir = _require_file(cfg["test_dir"], "test directory") if cfg.get("test_dir") else None
    if test_dir is None:
        from .samples import ensure_dataset

        test_dir = ensure_dataset("held-out", _channels(cfg))
    e = cfg.get("eval", {})
    report = evaluate_model(model, test_dir, task, label=Path(spec).name, sigma=e.get("sigma", 25.0),
                            quality=e.get("quality", 10), seed=cfg.get("seed", 0), with_niqe=e.get("niqe", True))
    out = run_dir("eval", cfg, args)
    report.to_csv(out / "metrics.csv")
    summary = report.summary()
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True, default=float) + "\n")
    shown = "inf" if report.psnr_infinite else f"{summary['psnr']:.2f}"
    print(f"PSNR {shown} dB  SSIM {summary['ssim']:.4f}  NIQE {summary['niqe']:.3f}  ({summary['images']} images)")
    return EXIT_OK


def _probe_images(cfg: dict, section: str, n: int, size: int, channels: int) -> list[np.ndarray]:
    from . import samples
    from .restoration import load_images

    rng = np.random.default_rng(cfg.get("seed", 0))
    if cfg.get("images_dir"):
        images = load_images(_require_file(cfg["images_dir"], "image directory"), channels)
    else:
        images = samples.natural_images(samples.HELD_OUT, gray=channels == 1)
    if not images:
        raise ConfigError(f"no images for {section}")
    try:
        return samples.random_crops(images, n, size, rng, min_std=0.05)
    except ValueError as e:
        raise ConfigError(f"{section}: {e} (set {section}.size)") from None


def cmd_study(cfg: dict, args) -> int:
    from dataclasses import replace

    from .evaluation.study import STUDY_COLUMNS, plot_study, sensitivity_study, write_study_csv
    from .imaging import SEVERITY_KINDS

    s = cfg.get("study", {})
    specs = cfg.get("losses") or ["l2", "l1", "ssim", "ms_ssim"]
    channels = _channels(cfg)
    losses = [replace(_preflight_loss(spec, channels), name=spec) for spec in specs]
    images = _probe_images(cfg, "study", s.get("images", 10), s.get("size", 128), channels)
    rows = sensitivity_study(losses, images, s.get("kinds", list(SEVERITY_KINDS)),
                             s.get("levels", [20, 25, 30, 35, 40]), seed=cfg.get("seed", 0))
    out = run_dir("study", cfg, args)
    write_study_csv(rows, out / "study.csv")
    plot_study(rows, out / "study.svg")
    print(f"wrote {len(rows)} rows ({len(STUDY_COLUMNS)} columns) to {out / 'study.csv'}")
    return EXIT_OK


def cmd_probe(cfg: dict, args) -> int:
    from .evaluation.study import manifold_probe, plot_embedding, stack_extractor
    from .imaging import blur_downup, jpeg_roundtrip, pyramid_permute
    from .mdf import load_stack

    if not cfg.get("stack"):
        raise ConfigError("probe needs --stack")
    stack = load_stack(_require_file(cfg["stack"], "discriminator stack"))
    p = cfg.get("probe", {})
    crops = _probe_images(cfg, "probe", p.get("images", 50), p.get("size", 64), stack.channels)
    qlo, qhi = p.get("quality_range", [7, 10])
    rng = np.random.default_rng(cfg.get("seed", 0))
    makers = {
        "original": lambda im, i: im,
        "jpeg": lambda im, i: jpeg_roundtrip(im, int(rng.integers(qlo, qhi + 1))),
        "blur": lambda im, i: blur_downup(im, 4.0),
        "permuted": lambda im, i: pyramid_permute(im, np.random.default_rng([cfg.get("seed", 0), i])),
    }
    sets = {name: [makers[name](im, i) for i, im in enumerate(crops)]
            for name in p.get("sets", ["original", "jpeg", "permuted"])}
    result = manifold_probe(stack_extractor(stack), sets, pooling=p.get("pooling", "channel"),
                            seed=cfg.get("seed", 0))
    out = run_dir("probe", cfg, args)
    sil = {f"{a}|{b}": v for (a, b), v in result.silhouettes.items()}
    (out / "silhouettes.json").write_text(json.dumps(sil, indent=2, sort_keys=True) + "\n")
    rows = [{"label": lbl, "x": float(e[0]), "y": float(e[1]), "z": float(e[2])}
            for lbl, e in zip(result.labels, result.embedding)]
    _write_rows(out / "embedding.csv", rows, ["label", "x", "y", "z"])
    plot_embedding(result, out / "embedding.svg")
    _emit({"silhouettes": sil})
    return EXIT_OK


def cmd_scale(cfg: dict, args) -> int:
    from .evaluation.jnd import ComparisonMatrix, scale_jnd

    path = _require_file(cfg.get("matrix") or "", "comparison matrix") if cfg.get("matrix") else None
    if path is None:
        raise ConfigError("scale needs --matrix (CSV of i,j,count or JSON)")
    try:
        m = ComparisonMatrix.from_json(path.read_text()) if path.suffix == ".json" else ComparisonMatrix.from_csv(path)
    except (ValueError, KeyError) as e:
        raise ConfigError(f"cannot read comparison matrix {path}: {e}") from None
    scores = scale_jnd(m)
    out = run_dir("scale", cfg, args)
    _write_rows(out / "jnd.csv", scores.to_rows(), ["condition", "jnd", "ci_low", "ci_high"])
    for r in scores.to_rows():
        print(f"{r['condition']}\t{r['jnd']:.2f} JND\t[{r['ci_low']:.2f}, {r['ci_high']:.2f}]")
    order = np.argsort(-scores.scores)
    for a, b in zip(order[:-1], order[1:]):
        print(f"Δ={scores.difference(a, b):.2f} JND ({m.names[a]} over {m.names[b]})")
    if scores.boundary:
        print("warning: some condition was unanimously preferred or rejected; scores are boundary estimates")
    return EXIT_OK


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------


def cmd_sweep(cfg: dict, args) -> int:
    """Train one MDF loss per scale count K and one restoration model per loss."""
    from .losses import mdf_loss_function
    from .mdf import load_stack

    ks = sorted(set(cfg.get("sweep", {}).get("scales", [1, 2, 3, 5, 7, 8])))
    mode = cfg.get("sweep", {}).get("mode", "retrain")
    out = run_dir("sweep", cfg, args)
    rows = []
    shared = None
    if mode == "finest":
        shared_dir = out / f"stack-K{max(ks)}"
        shared = load_stack(shared_dir / "stack") if (shared_dir / "stack").exists() else \
            _train_stack(cfg, shared_dir, max(ks))
    for k in ks:
        sub = out / f"K{k}"
        sub.mkdir(exist_ok=True)
        if shared is None:
            stack = load_stack(sub / "stack") if (sub / "stack").exists() else _train_stack(cfg, sub, k)
            loss = mdf_loss_function(stack)
        else:
            loss = mdf_loss_function(shared, range(shared.scales - k + 1, shared.scales + 1))
        if (sub / "model").exists() and (sub / "history.csv").exists():
            with open(sub / "history.csv") as fh:
                history = [{k2: float(v) for k2, v in r.items()} for r in csv.DictReader(fh)]
        else:
            history = _train_model(cfg, sub, loss).history
        best = min(history, key=lambda h: h["val_loss"])
        rows.append({"scales": k, "val_psnr": best["val_psnr"], "best_epoch": int(best["epoch"])})
        log.info("K=%d: %.3f dB", k, best["val_psnr"])
    _write_rows(out / "sweep.csv", rows, ["scales", "val_psnr", "best_epoch"])
    steps = [b["val_psnr"] >= a["val_psnr"] for a, b in zip(rows, rows[1:])]
    _emit({"rows": rows, "non_decreasing_steps": int(sum(steps)), "steps": len(steps),
           "csv": str(out / "sweep.csv")})
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file (see mdfloss/data/config.schema.json)")
    p.add_argument("--output-dir", help="root for run directories (default: runs)")
    p.add_argument("--run-dir", help="use this run directory instead of one named by the config hash")
    p.add_argument("--seed", type=int)
    p.add_argument("--deterministic", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--task", choices=("sisr", "denoise", "jpeg"))
    p.add_argument("--channels", type=int, choices=(1, 3))
    p.add_argument("-q", "--quiet", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mdf", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-loss", help="train a discriminator stack on seed image(s)")
    _common(p)
    p.add_argument("--seed-image", dest="seed_images", action="append", help="seed image (repeatable)")
    p.add_argument("--seeds", dest="seed_images", nargs="+", help="several seed images at once")
    p.add_argument("--seed-size", type=int, help="resize seeds to this square size first")
    p.add_argument("--scales", type=int, help="pyramid scales K (default 8)")
    p.add_argument("--rho", type=float, help="pyramid downscale factor (default 2)")
    p.add_argument("--iterations", type=int, help="iterations per scale")
    p.add_argument("--patch", type=int, help="train on random crops of this size")
    p.set_defaults(func=cmd_train_loss)

    p = sub.add_parser("train-restore", help="train a restoration network with a given loss")
    _common(p)
    p.add_argument("--model", help="architecture or preset (dncnn, dncnn-s, edsr, edsr-s, srresnet, ...)")
    p.add_argument("--loss", help="loss spec, e.g. l2, ms_ssim_l1, mdf:runs/x/stack, mse+0.1*ext:lpips")
    p.add_argument("--toy", action="store_true", default=None, help="desk-scale recipe")
    p.add_argument("--epochs", type=int)
    p.add_argument("--sigma", type=float, help="fixed training noise level (0-255 scale)")
    p.add_argument("--train-dir")
    p.add_argument("--val-dir")
    p.add_argument("--resume", action="store_true", help="continue from the run directory's saved state")
    p.set_defaults(func=cmd_train_restore)

    p = sub.add_parser("eval", help="score a model on a test set, or an image pair with a stack")
    _common(p)
    p.add_argument("--stack", help="discriminator stack (stack mode)")
    p.add_argument("--ref", help="reference image (stack mode)")
    p.add_argument("--test", help="test image (stack mode)")
    p.add_argument("--model", dest="model_path", help="model checkpoint directory, or 'identity'")
    p.add_argument("--test-dir")
    p.add_argument("--sigma", dest="eval_sigma", type=float, help="test noise level (0-255 scale)")
    p.add_argument("--quality", type=int, help="test JPEG quality")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("study", help="loss values under distortions of equal PSNR")
    _common(p)
    p.add_argument("--losses", nargs="+", help="loss specs to compare")
    p.add_argument("--images-dir")
    p.add_argument("--kinds", nargs="+")
    p.add_argument("--levels", nargs="+", type=float)
    p.set_defaults(func=cmd_study)

    p = sub.add_parser("probe", help="feature-space separability of distorted image sets")
    _common(p)
    p.add_argument("--stack")
    p.add_argument("--images-dir")
    p.add_argument("--sets", nargs="+")
    p.add_argument("--pooling", choices=("channel", "global"))
    p.add_argument("--images", dest="probe_images", type=int)
    p.set_defaults(func=cmd_probe)

    p = sub.add_parser("scale", help="JND scores from pairwise-comparison counts")
    _common(p)
    p.add_argument("--matrix", help="CSV (i,j,count) or JSON ({names, counts})")
    p.set_defaults(func=cmd_scale)

    p = sub.add_parser("sweep", help="ablation over the number of scales K")
    _common(p)
    p.add_argument("--seed-image", dest="seed_images", action="append")
    p.add_argument("--seed-size", type=int)
    p.add_argument("--ks", nargs="+", type=int, help="scale counts to compare (default 1 2 3 5 7 8)")
    p.add_argument("--mode", dest="sweep_mode", choices=("retrain", "finest"))
    p.add_argument("--rho", type=float)
    p.add_argument("--iterations", type=int)
    p.add_argument("--model")
    p.add_argument("--loss", help=argparse.SUPPRESS)
    p.add_argument("--toy", action="store_true", default=None)
    p.add_argument("--epochs", type=int)
    p.add_argument("--train-dir")
    p.add_argument("--val-dir")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = build_config(args)
        return args.func(copy.deepcopy(cfg), args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as e:  # training or I/O failure after validation
        log.debug("runtime failure", exc_info=True)
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
