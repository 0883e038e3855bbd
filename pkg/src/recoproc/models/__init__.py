"""Network roles: processor P, transformer T and recognizer R."""

from __future__ import annotations

import torch

from ..errors import CorruptCheckpoint, InvalidSpec
from .checkpoint import (
    ModelCheckpoint,
    load_checkpoint,
    read_manifest,
    save_checkpoint,
    state_dict_bytes,
    weights_hash,
)
from .processor import Processor, ProcessorSpec
from .recognizer import FAMILIES, Recognizer, RecognizerSpec
from .transformer import Transformer, TransformerSpec

_SPEC_TYPES = {"processor": ProcessorSpec, "transformer": TransformerSpec, "recognizer": RecognizerSpec}
_ROLE_KIND = {"P": "processor", "T": "transformer", "R": "recognizer"}


def _seeded(build, seed):
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(int(seed))
        return build()


def build_processor(spec: ProcessorSpec, seed: int = 0) -> Processor:
    if not isinstance(spec, ProcessorSpec):
        raise InvalidSpec(f"expected ProcessorSpec, got {type(spec).__name__}")
    return _seeded(lambda: Processor(spec), seed)


def build_transformer(spec: TransformerSpec, seed: int = 0) -> Transformer:
    if not isinstance(spec, TransformerSpec):
        raise InvalidSpec(f"expected TransformerSpec, got {type(spec).__name__}")
    return _seeded(lambda: Transformer(spec), seed)


def build_recognizer(spec: RecognizerSpec, seed: int = 0) -> Recognizer:
    if not isinstance(spec, RecognizerSpec):
        raise InvalidSpec(f"expected RecognizerSpec, got {type(spec).__name__}")
    return _seeded(lambda: Recognizer(spec), seed)


def spec_kind(spec) -> str:
    for kind, cls in _SPEC_TYPES.items():
        if isinstance(spec, cls):
            return kind
    raise InvalidSpec(f"not a model spec: {spec!r}")


def spec_to_manifest(spec) -> dict:
    return {"kind": spec_kind(spec), "spec": spec.to_dict()}


def spec_from_dict(kind: str, d: dict):
    if kind not in _SPEC_TYPES:
        raise InvalidSpec(f"unknown model kind {kind!r}")
    try:
        return _SPEC_TYPES[kind](**d)
    except TypeError as exc:
        raise InvalidSpec(f"bad {kind} spec {d}: {exc}") from exc


def spec_from_manifest(manifest: dict):
    try:
        return spec_from_dict(manifest["kind"], manifest["spec"])
    except (KeyError, InvalidSpec) as exc:
        raise CorruptCheckpoint(f"manifest does not describe a valid model: {exc}") from exc


def build_from_manifest(role: str, spec):
    kind = spec_kind(spec)
    if _ROLE_KIND.get(role) != kind:
        raise CorruptCheckpoint(f"role {role!r} does not match a {kind} spec")
    return {"processor": Processor, "transformer": Transformer, "recognizer": Recognizer}[kind](spec)


def census(model) -> list:
    """(name, shape) of every parameter, in registration order."""
    return [(name, tuple(p.shape)) for name, p in model.named_parameters()]


__all__ = [
    "FAMILIES",
    "ModelCheckpoint",
    "Processor",
    "ProcessorSpec",
    "Recognizer",
    "RecognizerSpec",
    "Transformer",
    "TransformerSpec",
    "build_processor",
    "build_recognizer",
    "build_transformer",
    "census",
    "load_checkpoint",
    "read_manifest",
    "save_checkpoint",
    "spec_from_dict",
    "state_dict_bytes",
    "weights_hash",
]
