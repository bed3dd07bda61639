"""Checkpoint container: a directory holding ``manifest.json`` and one raw
little-endian float32 blob per tensor.

The manifest lists every tensor's file, shape and SHA-256 so that a
tampered or truncated blob is reported instead of silently loaded.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np
import torch

FORMAT = "mdf-container"
VERSION = 1
MANIFEST = "manifest.json"


class CheckpointError(RuntimeError):
    pass


def _blob_name(key: str) -> str:
    return key.replace("/", "__") + ".f32"


def save_container(path, kind: str, tensors: dict[str, torch.Tensor], meta: dict) -> Path:
    path = Path(path)
    (path / "blobs").mkdir(parents=True, exist_ok=True)
    entries = {}
    for key, t in tensors.items():
        arr = t.detach().cpu().numpy().astype("<f4", copy=False)
        raw = np.ascontiguousarray(arr).tobytes()
        fname = _blob_name(key)
        (path / "blobs" / fname).write_bytes(raw)
        entries[key] = {
            "file": f"blobs/{fname}",
            "shape": list(arr.shape),
            "dtype": "float32-le",
            "sha256": hashlib.sha256(raw).hexdigest(),
        }
    manifest = {"format": FORMAT, "version": VERSION, "kind": kind, "meta": meta, "tensors": entries}
    (path / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return path


def read_manifest(path) -> dict:
    path = Path(path)
    try:
        manifest = json.loads((path / MANIFEST).read_text())
    except FileNotFoundError as e:
        raise CheckpointError(f"no {MANIFEST} in {path}") from e
    except json.JSONDecodeError as e:
        raise CheckpointError(f"corrupt manifest in {path}: {e}") from e
    if not isinstance(manifest, dict) or manifest.get("format") != FORMAT:
        raise CheckpointError(f"{path} is not an {FORMAT} checkpoint")
    if manifest.get("version") != VERSION:
        raise CheckpointError(
            f"checkpoint version {manifest.get('version')} is not supported (expected {VERSION})"
        )
    for key in ("kind", "meta", "tensors"):
        if key not in manifest:
            raise CheckpointError(f"corrupt manifest in {path}: missing {key!r}")
    return manifest


def load_container(path, kind: str) -> tuple[dict[str, torch.Tensor], dict]:
    path = Path(path)
    manifest = read_manifest(path)
    if manifest["kind"] != kind:
        raise CheckpointError(f"{path} holds a {manifest['kind']!r}, expected {kind!r}")
    tensors = {}
    for key, entry in manifest["tensors"].items():
        try:
            raw = (path / entry["file"]).read_bytes()
        except FileNotFoundError as e:
            raise CheckpointError(f"missing blob for {key}: {entry['file']}") from e
        if hashlib.sha256(raw).hexdigest() != entry["sha256"]:
            raise CheckpointError(f"checksum mismatch for {key} ({entry['file']})")
        arr = np.frombuffer(raw, dtype="<f4")
        if arr.size != int(np.prod(entry["shape"], dtype=np.int64)):
            raise CheckpointError(f"blob size of {key} does not match shape {entry['shape']}")
        tensors[key] = torch.from_numpy(arr.reshape(entry["shape"]).astype(np.float32))
    return tensors, manifest["meta"]


def directory_size(path) -> int:
    return sum(p.stat().st_size for p in Path(path).rglob("*") if p.is_file())
