"""Checkpoint directories: ``manifest.json`` plus a little-endian float64 blob ``params.bin``.

The manifest lists the model configuration, normalisation statistics and, for
each parameter, its name, shape and byte offset into the blob. Float64 values
are stored raw so a save/load round trip is bit-exact.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional

import numpy as np

from .data import NormStats
from .network import DTMP, ModelConfig
from .tensor import Tensor

FORMAT = "dtmp-checkpoint/1"
_LE_F64 = np.dtype("<f8")


@dataclass
class Checkpoint:
    config: ModelConfig
    params: dict[str, np.ndarray]
    stats: Optional[NormStats] = None
    extra: dict = field(default_factory=dict)

    def model(self) -> DTMP:
        tensors = {k: Tensor(v.copy(), requires_grad=True, name=k) for k, v in self.params.items()}
        return DTMP(self.config, params=tensors)

    @classmethod
    def from_model(cls, model: DTMP, stats: Optional[NormStats] = None, extra: Optional[dict] = None):
        return cls(model.config, {k: v.data.copy() for k, v in model.params.items()}, stats, dict(extra or {}))


def save_checkpoint(ckpt: Checkpoint, path) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    entries, offset, chunks = [], 0, []
    for name, arr in ckpt.params.items():
        raw = np.ascontiguousarray(arr, dtype=_LE_F64).tobytes()
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset, "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    blob = b"".join(chunks)
    (path / "params.bin").write_bytes(blob)
    manifest = {
        "format": FORMAT,
        "dtype": "float64",
        "byte_order": "little",
        "blob": "params.bin",
        "blob_sha256": hashlib.sha256(blob).hexdigest(),
        "config": ckpt.config.to_dict(),
        "stats": ckpt.stats.to_dict() if ckpt.stats is not None else None,
        "params": entries,
        "extra": ckpt.extra,
    }
    with open(path / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2)
    return path


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    with open(path / "manifest.json") as fh:
        manifest = json.load(fh)
    if manifest.get("format") != FORMAT:
        raise ValueError(f"{path}: unsupported checkpoint format {manifest.get('format')!r}")
    blob = (path / manifest["blob"]).read_bytes()
    if hashlib.sha256(blob).hexdigest() != manifest["blob_sha256"]:
        raise ValueError(f"{path}: parameter blob does not match its recorded digest")
    params: dict[str, np.ndarray] = {}
    for e in manifest["params"]:
        count = int(np.prod(e["shape"], dtype=np.int64))
        arr = np.frombuffer(blob, dtype=_LE_F64, count=count, offset=e["offset"])
        params[e["name"]] = arr.astype(np.float64).reshape(e["shape"])
    stats = NormStats.from_dict(manifest["stats"]) if manifest.get("stats") else None
    return Checkpoint(ModelConfig.from_dict(manifest["config"]), params, stats, manifest.get("extra", {}))


def params_equal(a: Mapping[str, np.ndarray], b: Mapping[str, np.ndarray]) -> bool:
    """Bitwise equality of two parameter maps."""
    return a.keys() == b.keys() and all(
        a[k].shape == b[k].shape and a[k].tobytes() == b[k].tobytes() for k in a
    )
