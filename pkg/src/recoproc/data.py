"""Labelled image datasets, degraded/target pairs and class splits.

On-disk layout is ``<root>/<split>/<class_name>/<file>.png``.  Class ids
follow the lexicographic order of the class directory names.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
from PIL import Image, UnidentifiedImageError

from . import degradations
from .degradations import DegradationSpec
from .errors import DecodeError, InvalidDataset, InvalidSplit, NotFound, ShapeError

SPLITS = ("train", "val")
IMAGE_SUFFIXES = (".png",)


@dataclass
class Dataset:
    images: np.ndarray  # N x H x W x 3, float32 in [0, 1]
    labels: np.ndarray  # N, int64
    class_names: List[str]
    split: str
    paths: List[str] = field(default_factory=list)

    def __len__(self):
        return len(self.labels)

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    @property
    def samples(self):
        return list(zip(self.paths or [None] * len(self), self.labels.tolist()))

    def subset(self, indices) -> "Dataset":
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset(
            images=self.images[indices],
            labels=self.labels[indices],
            class_names=list(self.class_names),
            split=self.split,
            paths=[self.paths[i] for i in indices] if self.paths else [],
        )


@dataclass
class PairedSample:
    input: np.ndarray
    target: np.ndarray
    label: int


class PairSet(Sequence):
    """Stacked (input, target, label) triples; indexable as PairedSample."""

    def __init__(self, inputs, targets, labels, spec: Optional[DegradationSpec] = None,
                 class_names=None):
        self.inputs = np.asarray(inputs, dtype=np.float32)
        self.targets = np.asarray(targets, dtype=np.float32)
        self.labels = np.asarray(labels, dtype=np.int64)
        if not (len(self.inputs) == len(self.targets) == len(self.labels)):
            raise ShapeError("inputs, targets and labels must have equal length")
        self.spec = spec
        self.class_names = list(class_names) if class_names is not None else None

    def __len__(self):
        return len(self.labels)

    def __getitem__(self, k):
        if isinstance(k, slice):
            return PairSet(self.inputs[k], self.targets[k], self.labels[k], self.spec, self.class_names)
        return PairedSample(self.inputs[k], self.targets[k], int(self.labels[k]))

    def select(self, indices) -> "PairSet":
        indices = np.asarray(indices, dtype=np.int64)
        return PairSet(self.inputs[indices], self.targets[indices], self.labels[indices],
                       self.spec, self.class_names)

    def digest(self) -> str:
        h = hashlib.sha256()
        for arr in (self.inputs, self.targets, self.labels):
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()


@dataclass
class ClassSplit:
    split_a: frozenset
    split_b: frozenset
    seed: int
    relabel_a: Dict[int, int] = field(default_factory=dict)
    relabel_b: Dict[int, int] = field(default_factory=dict)


def decode_image(path) -> np.ndarray:
    try:
        with Image.open(path) as im:
            arr = np.array(im.convert("RGB"))
    except (UnidentifiedImageError, OSError, ValueError) as exc:
        raise DecodeError(f"cannot decode image {path}: {exc}") from exc
    return degradations.from_uint8(arr)


def load_dataset(root, split: str = "train") -> Dataset:
    root = Path(root)
    if split not in SPLITS:
        raise InvalidDataset(f"unknown split {split!r}; expected one of {SPLITS}")
    if not root.is_dir():
        raise NotFound(f"dataset root {root} does not exist")
    split_dir = root / split
    if not split_dir.is_dir():
        raise NotFound(f"split directory {split_dir} does not exist")
    class_names = sorted(d.name for d in split_dir.iterdir() if d.is_dir())
    if not class_names:
        raise InvalidDataset(f"{split_dir} contains no class directories")
    images, labels, paths = [], [], []
    for label, name in enumerate(class_names):
        files = sorted(
            f for f in os.listdir(split_dir / name) if f.lower().endswith(IMAGE_SUFFIXES)
        )
        if not files:
            raise InvalidDataset(f"class directory {split_dir / name} has no images")
        for f in files:
            p = split_dir / name / f
            images.append(decode_image(p))
            labels.append(label)
            paths.append(str(p))
    shapes = {im.shape for im in images}
    if len(shapes) != 1:
        raise InvalidDataset(f"images in {split_dir} have mixed shapes {sorted(shapes)}")
    return Dataset(np.stack(images), np.asarray(labels, dtype=np.int64), class_names, split, paths)


def write_classes_json(class_names, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(list(class_names), indent=2) + "\n")
    return path


def sample_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream for sample ``index``; unaffected by batching or order."""
    return np.random.default_rng([int(seed), int(index)])


def make_pairs(dataset: Dataset, spec: DegradationSpec, seed: int) -> PairSet:
    if spec.kind == degradations.SUPER_RESOLUTION:
        h, w = dataset.images.shape[1:3]
        if h % spec.scale or w % spec.scale:
            raise ShapeError(f"image {h}x{w} is not divisible by SR scale {spec.scale}")
    inputs = [
        degradations.apply(spec, img, sample_rng(seed, k)) for k, img in enumerate(dataset.images)
    ]
    return PairSet(np.stack(inputs), dataset.images, dataset.labels, spec, dataset.class_names)


def split_classes(dataset_or_num_classes, seed: int) -> ClassSplit:
    n = (dataset_or_num_classes if isinstance(dataset_or_num_classes, int)
         else dataset_or_num_classes.num_classes)
    if n < 2:
        raise InvalidSplit(f"need at least 2 classes to split, got {n}")
    order = np.random.default_rng(int(seed)).permutation(n)
    half = n // 2
    a = sorted(int(c) for c in order[:half])
    b = sorted(int(c) for c in order[half:])
    return ClassSplit(
        split_a=frozenset(a),
        split_b=frozenset(b),
        seed=int(seed),
        relabel_a={c: i for i, c in enumerate(a)},
        relabel_b={c: i for i, c in enumerate(b)},
    )


def restrict_to_classes(dataset: Dataset, relabel: Dict[int, int]) -> Dataset:
    """Keep samples whose label is in ``relabel`` and map labels to contiguous ids."""
    keep = np.flatnonzero(np.isin(dataset.labels, list(relabel)))
    sub = dataset.subset(keep)
    sub.labels = np.asarray([relabel[int(l)] for l in sub.labels], dtype=np.int64)
    inverse = sorted(relabel, key=relabel.get)
    sub.class_names = [dataset.class_names[c] for c in inverse]
    return sub
