"""Distortion-sensitivity study and the latent-feature manifold probe."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from ..imaging import SEVERITY_KINDS, distort_at_target_psnr, to_tensor
from ..losses import LossFunction
from .metrics import psnr

STUDY_COLUMNS = ("loss", "kind", "psnr_target", "psnr", "value", "std", "images")


def sensitivity_study(losses, images, kinds=SEVERITY_KINDS, psnr_levels=(20, 25, 30, 35, 40),
                      seed: int = 0, per_image: bool = False) -> list[dict]:
    """Mean loss against the clean reference for every (loss, kind, PSNR level).

    Each distorted image is built to hit the target PSNR exactly, so rows at
    one level differ only in the kind of distortion. With ``per_image`` the
    rows also carry the individual values.
    """
    losses = _as_loss_list(losses)
    images = [np.asarray(im, dtype=np.float64) for im in images]
    distorted = {}
    for kind in kinds:
        for level in psnr_levels:
            distorted[kind, level] = [distort_at_target_psnr(im, kind, level, seed=seed + i)
                                      for i, im in enumerate(images)]
    rows = []
    for loss in losses:
        for kind in kinds:
            for level in psnr_levels:
                vals = []
                with torch.no_grad():
                    for ref, dist in zip(images, distorted[kind, level]):
                        vals.append(float(loss(to_tensor(ref, torch.float64), to_tensor(dist, torch.float64))))
                row = {
                    "loss": loss.name, "kind": kind, "psnr_target": float(level),
                    "psnr": float(np.mean([psnr(r, d) for r, d in zip(images, distorted[kind, level])])),
                    "value": float(np.mean(vals)), "std": float(np.std(vals)), "images": len(vals),
                }
                if per_image:
                    row["values"] = vals
                rows.append(row)
    return rows


def _as_loss_list(losses) -> list[LossFunction]:
    if isinstance(losses, LossFunction):
        return [losses]
    if isinstance(losses, dict):
        return [LossFunction(name, l.fn, l.multi_scale, l.external_weights) for name, l in losses.items()]
    return list(losses)


def write_study_csv(rows: list[dict], path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=STUDY_COLUMNS, extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow({k: (f"{r[k]:.8g}" if isinstance(r[k], float) else r[k]) for k in STUDY_COLUMNS})
    return path


def rank_kinds(rows: list[dict], loss: str, level: float) -> list[str]:
    """Distortion kinds ordered from most to least penalized by ``loss`` at ``level``."""
    sel = [r for r in rows if r["loss"] == loss and r["psnr_target"] == float(level)]
    return [r["kind"] for r in sorted(sel, key=lambda r: -r["value"])]


# ---------------------------------------------------------------------------
# manifold probe
# ---------------------------------------------------------------------------


@dataclass
class ProbeResult:
    features: np.ndarray
    labels: list[str]
    embedding: np.ndarray | None
    silhouettes: dict[tuple[str, str], float]

    def silhouette(self, a: str, b: str) -> float:
        return self.silhouettes[(a, b)] if (a, b) in self.silhouettes else self.silhouettes[(b, a)]


def stack_extractor(stack, scales=None, layers=None):
    """Per-layer features of a discriminator stack, as a probe extractor.

    ``layers`` selects taps by index (default: every hidden activation,
    i.e. all but the terminal sigmoid map).
    """
    from ..mdf import extract_features

    def extract(img):
        fs = extract_features(stack, img, scales)
        out = []
        for taps in fs.features:
            chosen = taps[:-1] if layers is None else [taps[i] for i in layers]
            out.extend(chosen)
        return out

    return extract


def _pool(feats, pooling: str) -> np.ndarray:
    parts = []
    for f in feats:
        f = f.detach().double()
        if pooling == "channel":
            parts.append(f.mean(dim=1).reshape(-1))
        elif pooling == "global":
            parts.append(f.mean(dim=(2, 3)).reshape(-1))
        else:
            raise ValueError(f"unknown pooling {pooling!r}")
    return torch.cat(parts).numpy()


def manifold_probe(extractor, image_sets: dict[str, list[np.ndarray]], pooling: str = "channel",
                   embed: bool = True, seed: int = 0, perplexity: float = 30.0) -> ProbeResult:
    """Feature vectors for labelled image sets, pairwise silhouettes and a 3-D t-SNE.

    The default pooling averages each feature map across channels and
    flattens it; ``pooling="global"`` averages over positions instead. The
    silhouette of every label pair is computed in the raw feature space.
    """
    from sklearn.manifold import TSNE
    from sklearn.metrics import silhouette_score

    if len(image_sets) < 2:
        raise ValueError("the probe needs at least two labelled image sets")
    vectors, labels = [], []
    for label, images in image_sets.items():
        if not images:
            raise ValueError(f"image set {label!r} is empty")
        for img in images:
            with torch.no_grad():
                vectors.append(_pool(extractor(img), pooling))
            labels.append(label)
    sizes = {len(v) for v in vectors}
    if len(sizes) != 1:
        raise ValueError("all probe images must yield feature vectors of the same length (use equal sizes)")
    x = np.vstack(vectors)
    lab = np.array(labels)
    names = list(image_sets)
    sil = {}
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            sel = (lab == a) | (lab == b)
            sil[(a, b)] = float(silhouette_score(x[sel], lab[sel], metric="euclidean"))
    embedding = None
    if embed:
        perp = min(perplexity, max(1.0, (len(x) - 1) / 3))
        embedding = TSNE(n_components=3, perplexity=perp, init="pca", random_state=seed).fit_transform(x)
    return ProbeResult(x, labels, embedding, sil)


def plot_embedding(result: ProbeResult, path) -> Path:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    if result.embedding is None:
        raise ValueError("probe was run without an embedding")
    fig = plt.figure(figsize=(5, 5))
    ax = fig.add_subplot(projection="3d")
    lab = np.array(result.labels)
    for name in dict.fromkeys(result.labels):
        pts = result.embedding[lab == name]
        ax.scatter(pts[:, 0], pts[:, 1], pts[:, 2], s=8, label=name)
    ax.legend()
    fig.savefig(path, metadata={"Date": None} if str(path).endswith(".svg") else None)
    plt.close(fig)
    return Path(path)


def plot_study(rows: list[dict], path) -> Path:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    losses = list(dict.fromkeys(r["loss"] for r in rows))
    fig, axes = plt.subplots(1, len(losses), figsize=(4 * len(losses), 3.5), squeeze=False)
    for ax, loss in zip(axes[0], losses):
        for kind in dict.fromkeys(r["kind"] for r in rows):
            sel = sorted((r for r in rows if r["loss"] == loss and r["kind"] == kind),
                         key=lambda r: r["psnr_target"])
            ax.plot([r["psnr_target"] for r in sel], [r["value"] for r in sel], marker="o", label=kind)
        ax.set_title(loss)
        ax.set_xlabel("PSNR (dB)")
        ax.invert_xaxis()
    axes[0][0].legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, metadata={"Date": None} if str(path).endswith(".svg") else None)
    plt.close(fig)
    return Path(path)

