"""Checkpoint directories: ``manifest.json`` plus a raw ``weights.bin`` blob.

The blob is the concatenation of every state-dict tensor in state-dict
order, little-endian, with no padding.  The manifest lists each tensor's
name, dtype, shape and byte offset, so the layout is fully described by
the spec it was built from.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np
import torch
from torch import nn

from ..errors import ConfigError, CorruptCheckpoint, NotFound

FORMAT = "recoproc-checkpoint"
FORMAT_VERSION = 1
ROLES = ("P", "T", "R")

_DTYPES = {
    torch.float32: "float32",
    torch.float64: "float64",
    torch.int64: "int64",
}
_NP_DTYPES = {"float32": np.dtype("<f4"), "float64": np.dtype("<f8"), "int64": np.dtype("<i8")}
_TORCH_DTYPES = {v: k for k, v in _DTYPES.items()}


@dataclass
class ModelCheckpoint:
    model: nn.Module
    role: str
    seed: int = 0
    config_hash: Optional[str] = None
    metrics: Dict[str, Any] = field(default_factory=dict)
    notes: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.role not in ROLES:
            raise ConfigError(f"checkpoint role must be one of {ROLES}, got {self.role!r}")
        from . import _ROLE_KIND, spec_kind

        kind = spec_kind(self.model.spec)
        if _ROLE_KIND[self.role] != kind:
            raise ConfigError(f"role {self.role!r} cannot hold a {kind} model")

    @property
    def spec(self):
        return self.model.spec

    def manifest(self):
        from . import spec_to_manifest

        tensors = []
        offset = 0
        for name, t in self.model.state_dict().items():
            nbytes = t.numel() * t.element_size()
            tensors.append({"name": name, "dtype": _DTYPES[t.dtype], "shape": list(t.shape),
                            "offset": offset, "nbytes": nbytes})
            offset += nbytes
        return {
            "format": FORMAT,
            "version": FORMAT_VERSION,
            "role": self.role,
            **spec_to_manifest(self.model.spec),
            "seed": self.seed,
            "config_hash": self.config_hash,
            "metrics": self.metrics,
            "notes": self.notes,
            "tensors": tensors,
        }

    def weights_bytes(self) -> bytes:
        return state_dict_bytes(self.model)

    def weights_hash(self) -> str:
        return hashlib.sha256(self.weights_bytes()).hexdigest()

    def save(self, path) -> Path:
        path = Path(path)
        path.mkdir(parents=True, exist_ok=True)
        (path / "weights.bin").write_bytes(self.weights_bytes())
        (path / "manifest.json").write_text(json.dumps(self.manifest(), indent=2, sort_keys=True) + "\n")
        return path


def state_dict_bytes(model: nn.Module) -> bytes:
    chunks = []
    for t in model.state_dict().values():
        arr = t.detach().cpu().contiguous().numpy()
        chunks.append(arr.astype(_NP_DTYPES[_DTYPES[t.dtype]], copy=False).tobytes())
    return b"".join(chunks)


def weights_hash(model: nn.Module) -> str:
    return hashlib.sha256(state_dict_bytes(model)).hexdigest()


def save_checkpoint(ckpt: ModelCheckpoint, path) -> Path:
    return ckpt.save(path)


def read_manifest(path) -> dict:
    path = Path(path)
    mpath = path / "manifest.json"
    if not mpath.is_file() or not (path / "weights.bin").is_file():
        raise NotFound(f"no checkpoint at {path}")
    try:
        manifest = json.loads(mpath.read_text())
    except json.JSONDecodeError as exc:
        raise CorruptCheckpoint(f"unreadable manifest {mpath}: {exc}") from exc
    if manifest.get("format") != FORMAT:
        raise CorruptCheckpoint(f"{mpath} is not a {FORMAT} manifest")
    return manifest


def load_checkpoint(path, role: Optional[str] = None, spec=None) -> ModelCheckpoint:
    """Rebuild the model described by the manifest and fill it from the blob.

    ``role`` rejects checkpoints of the wrong kind; ``spec`` forces a
    particular architecture, which must match the stored tensors exactly.
    """
    from . import build_from_manifest, spec_from_manifest

    path = Path(path)
    manifest = read_manifest(path)
    if role is not None and manifest.get("role") != role:
        raise ConfigError(f"checkpoint {path} has role {manifest.get('role')!r}, expected {role!r}")
    if spec is None:
        spec = spec_from_manifest(manifest)
    model = build_from_manifest(manifest["role"], spec)
    blob = (path / "weights.bin").read_bytes()
    expected = model.state_dict()
    entries = manifest.get("tensors", [])
    if [e["name"] for e in entries] != list(expected):
        raise CorruptCheckpoint(f"tensor names in {path} do not match the model spec")
    total = sum(e["nbytes"] for e in entries)
    if total != len(blob):
        raise CorruptCheckpoint(f"weights.bin holds {len(blob)} bytes, manifest describes {total}")
    state = {}
    for e in entries:
        ref = expected[e["name"]]
        if list(ref.shape) != e["shape"] or _DTYPES[ref.dtype] != e["dtype"]:
            raise CorruptCheckpoint(
                f"tensor {e['name']}: stored {e['dtype']}{e['shape']}, model expects "
                f"{_DTYPES[ref.dtype]}{list(ref.shape)}"
            )
        arr = np.frombuffer(blob, dtype=_NP_DTYPES[e["dtype"]], count=ref.numel(), offset=e["offset"])
        state[e["name"]] = torch.from_numpy(arr.copy()).reshape(ref.shape).to(_TORCH_DTYPES[e["dtype"]])
    model.load_state_dict(state)
    model.eval()
    return ModelCheckpoint(
        model=model,
        role=manifest["role"],
        seed=manifest.get("seed", 0),
        config_hash=manifest.get("config_hash"),
        metrics=manifest.get("metrics", {}),
        notes=manifest.get("notes", {}),
    )
