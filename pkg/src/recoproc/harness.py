"""Evaluation protocols: same-model evaluation, transfer matrices, category
splits and lambda sweeps."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch

from . import degradations
from .config import ExperimentConfig
from .data import Dataset, PairSet, load_dataset, make_pairs, restrict_to_classes, split_classes
from .errors import ConfigError
from .metrics import mean_psnr, mean_ssim, top1_accuracy
from .models import ModelCheckpoint
from .training import predict_logits, pretrain_recognizer, process_images, train_processor

log = logging.getLogger(__name__)


@dataclass
class EvalRecord:
    processor: str
    recognizer: str
    task: str
    psnr: float
    ssim: float
    accuracy: float
    n_samples: int
    transformer: Optional[str] = None
    tags: Dict[str, object] = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 <= self.accuracy <= 1.0:
            raise ValueError(f"accuracy {self.accuracy} outside [0, 1]")
        if self.n_samples <= 0:
            raise ValueError("n_samples must be positive")

    def to_dict(self):
        return asdict(self)


@dataclass
class PipelineOutput:
    record: EvalRecord
    outputs: np.ndarray
    predictions: np.ndarray


def _module(obj, role):
    if obj is None:
        return None
    if isinstance(obj, ModelCheckpoint):
        if obj.role != role:
            raise ConfigError(f"expected a role {role!r} checkpoint, got role {obj.role!r}")
        return obj.model
    return obj


def run_pipeline(P, T, R, pairs: PairSet, processor_id="P", transformer_id=None,
                 recognizer_id="R", tags=None) -> PipelineOutput:
    """Evaluate one P (+ optional T) against one R and keep the images.

    ``P=None`` is the no-processing baseline (bicubic upsampling for SR).
    Image quality is always measured on P's clipped output; R sees T's
    output when T is given.
    """
    if len(pairs) == 0:
        raise ConfigError("cannot evaluate on an empty set")
    p_mod = _module(P, "P")
    t_mod = _module(T, "T")
    r_mod = _module(R, "R")
    if r_mod is None:
        raise ConfigError("a recognizer is required for evaluation")
    if p_mod is None:
        if pairs.spec is None:
            raise ConfigError("no-processing baseline needs the pairs' degradation spec")
        outputs = np.stack([degradations.no_processing(pairs.spec, x) for x in pairs.inputs])
    else:
        outputs = process_images(p_mod, pairs.inputs)
    recog_in = process_images(t_mod, outputs) if t_mod is not None else outputs
    logits = predict_logits(r_mod, recog_in)
    acc = top1_accuracy(logits, pairs.labels)
    record = EvalRecord(
        processor=processor_id,
        transformer=transformer_id if t_mod is not None else None,
        recognizer=recognizer_id,
        task=pairs.spec.kind if pairs.spec is not None else "unknown",
        psnr=mean_psnr(outputs, pairs.targets),
        ssim=mean_ssim(outputs, pairs.targets),
        accuracy=acc,
        n_samples=len(pairs),
        tags=dict(tags or {}),
    )
    return PipelineOutput(record, outputs, np.argmax(logits, axis=1))


def evaluate_pipeline(P, T, R, pairs: PairSet, **ids) -> EvalRecord:
    return run_pipeline(P, T, R, pairs, **ids).record


def _cap(dataset: Dataset, limit, seed) -> Dataset:
    if limit is None or limit >= len(dataset):
        return dataset
    idx = np.sort(np.random.default_rng(int(seed)).permutation(len(dataset))[:int(limit)])
    return dataset.subset(idx)


def load_experiment_data(config: ExperimentConfig) -> Tuple[Dataset, Dataset]:
    """Train/val datasets named by ``config.dataset``, optionally subsampled."""
    ds = config.dataset
    if ds.root is None:
        raise ConfigError("dataset.root is not set")
    train = _cap(load_dataset(ds.root, ds.train_split), ds.max_train, config.degradation_seed)
    val = _cap(load_dataset(ds.root, ds.val_split), ds.max_val, config.degradation_seed + 1)
    return train, val


def experiment_pairs(config: ExperimentConfig, train: Dataset, val: Dataset) -> Tuple[PairSet, PairSet]:
    """Degraded pairs; train and val use distinct degradation streams."""
    spec = config.task_spec()
    return make_pairs(train, spec, config.degradation_seed), make_pairs(val, spec, config.degradation_seed + 1)


# ---------------------------------------------------------------------------
# Transfer between recognizers


@dataclass
class TransferMatrix:
    rows: List[str]
    cols: List[str]
    cells: Dict[Tuple[str, str], float]
    baseline: Dict[str, float]
    records: List[EvalRecord] = field(default_factory=list)

    def __post_init__(self):
        missing = [(r, c) for r in self.rows for c in self.cols if (r, c) not in self.cells]
        if missing:
            raise ConfigError(f"transfer matrix has unfilled cells: {missing}")
        if set(self.baseline) != set(self.cols):
            raise ConfigError("baseline row must cover every evaluation model")

    def is_diagonal(self, row, col) -> bool:
        return row == col

    def cell(self, row, col) -> float:
        return self.cells[(row, col)]

    def grid(self) -> np.ndarray:
        return np.array([[self.cells[(r, c)] for c in self.cols] for r in self.rows])

    def diagonal_is_row_max(self) -> Dict[str, bool]:
        """Per row: does the same-model cell score at least every other cell in the row?"""
        out = {}
        for r in self.rows:
            if r in self.cols:
                out[r] = all(self.cells[(r, r)] >= self.cells[(r, c)] for c in self.cols)
        return out

    def diagonal_is_col_max(self) -> Dict[str, bool]:
        out = {}
        for c in self.cols:
            if c in self.rows:
                out[c] = all(self.cells[(c, c)] >= self.cells[(r, c)] for r in self.rows)
        return out

    def table_rows(self):
        rows = [{"loss_model": "plain", **{c: self.baseline[c] for c in self.cols}}]
        for r in self.rows:
            rows.append({"loss_model": r, **{c: self.cells[(r, c)] for c in self.cols}})
        return rows


def transfer_matrix(processors: Dict[str, object], recognizers: Dict[str, ModelCheckpoint],
                    pairs: PairSet, baseline=None, use_transformer: bool = True) -> TransferMatrix:
    """Accuracy of every loss-model processor on every evaluation recognizer.

    ``processors`` maps a loss-model id to a P checkpoint or a ``(P, T)``
    pair.  ``baseline`` is the plainly trained processor.
    """
    if baseline is None:
        raise ConfigError("transfer_matrix needs the plain-processing baseline processor")
    if not processors or not recognizers:
        raise ConfigError("transfer_matrix needs at least one processor and one recognizer")
    cells, records, base = {}, [], {}
    for col, R in recognizers.items():
        rec = evaluate_pipeline(baseline, None, R, pairs, processor_id="plain", recognizer_id=col,
                                tags={"row": "plain", "col": col})
        base[col] = rec.accuracy
        records.append(rec)
    for row, entry in processors.items():
        P, T = entry if isinstance(entry, tuple) else (entry, None)
        if not use_transformer:
            T = None
        for col, R in recognizers.items():
            rec = evaluate_pipeline(P, T, R, pairs, processor_id=row,
                                    transformer_id=row if T is not None else None, recognizer_id=col,
                                    tags={"row": row, "col": col, "diagonal": row == col})
            cells[(row, col)] = rec.accuracy
            records.append(rec)
    return TransferMatrix(list(processors), list(recognizers), cells, base, records)


# ---------------------------------------------------------------------------
# Category split


@dataclass
class CategoryTable:
    """Accuracy of {plain, RA} processors trained on one split, evaluated on each split."""

    cells: Dict[Tuple[str, str], float]
    records: List[EvalRecord]
    split: object
    recognizers: Dict[str, ModelCheckpoint] = field(default_factory=dict)

    ROWS = ("A_plain", "A_ra", "B_plain", "B_ra")
    COLS = ("A", "B")

    def table_rows(self):
        return [{"train": r, **{f"eval_{c}": self.cells[(r, c)] for c in self.COLS}} for r in self.ROWS]


def category_split_experiment(config: ExperimentConfig, train: Dataset, val: Dataset,
                              seed: Optional[int] = None, split_seed: Optional[int] = None,
                              recognizers: Optional[Dict[str, ModelCheckpoint]] = None) -> CategoryTable:
    """Train R/P per class split and evaluate all train/eval split combinations.

    ``recognizers`` may supply pretrained ``{"A": R_A, "B": R_B}`` so several
    processor seeds can share them.
    """
    config.validate()
    if train.num_classes < 4 or train.num_classes % 2:
        raise ConfigError(f"category split needs an even class count >= 4, got {train.num_classes}")
    seed = config.seed if seed is None else seed
    split = split_classes(train.num_classes, config.degradation_seed if split_seed is None else split_seed)
    parts = {}
    for name, relabel in (("A", split.relabel_a), ("B", split.relabel_b)):
        tr = restrict_to_classes(train, relabel)
        va = restrict_to_classes(val, relabel)
        R = (recognizers or {}).get(name) or pretrain_recognizer(
            config.replace(recognizer={**config.recognizer, "num_classes": len(relabel)}), tr, va)
        train_pairs, val_pairs = experiment_pairs(config, tr, va)
        parts[name] = {"R": R, "train_pairs": train_pairs, "val_pairs": val_pairs}
    ra_mode = config.mode if config.mode != "plain" else "ra"
    processors = {}
    for name, part in parts.items():
        processors[f"{name}_plain"] = train_processor(config, part["train_pairs"], mode="plain", seed=seed).processor
        res = train_processor(config, part["train_pairs"], part["R"], mode=ra_mode, seed=seed)
        processors[f"{name}_ra"] = (res.processor, res.transformer)
    cells, records = {}, []
    for row, entry in processors.items():
        P, T = entry if isinstance(entry, tuple) else (entry, None)
        if not config.eval_with_transformer:
            T = None
        for col, part in parts.items():
            rec = evaluate_pipeline(P, T, part["R"], part["val_pairs"], processor_id=row,
                                    transformer_id=row if T is not None else None, recognizer_id=f"R_{col}",
                                    tags={"row": row, "col": col, "seed": seed})
            cells[(row, col)] = rec.accuracy
            records.append(rec)
    return CategoryTable(cells, records, split, {name: part["R"] for name, part in parts.items()})


# ---------------------------------------------------------------------------
# Lambda sweep


@dataclass
class SweepRow:
    lam: float
    psnr: float
    ssim: float
    accuracy: float


@dataclass
class SweepResult:
    rows: List[SweepRow]
    records: List[EvalRecord]
    processors: Dict[float, ModelCheckpoint]


def lambda_sweep(config: ExperimentConfig, lambdas: Sequence[float], train_pairs: PairSet,
                 val_pairs: PairSet, recognizer: ModelCheckpoint, seed: Optional[int] = None) -> SweepResult:
    """One RA training per lambda (lambda = 0 is plain processing)."""
    lambdas = sorted(float(l) for l in lambdas)
    if 0.0 not in lambdas:
        raise ConfigError("lambda sweep must include 0 (the plain-processing baseline)")
    if len(set(lambdas)) != len(lambdas):
        raise ConfigError("duplicate lambda values")
    seed = config.seed if seed is None else seed
    rows, records, procs = [], [], {}
    for lam in lambdas:
        cfg = config.replace(mode="ra", lam=lam)
        res = train_processor(cfg, train_pairs, recognizer, seed=seed)
        rec = evaluate_pipeline(res.processor, None, recognizer, val_pairs, processor_id=f"ra_lambda={lam:g}",
                                recognizer_id="R", tags={"lambda": lam, "seed": seed})
        rows.append(SweepRow(lam, rec.psnr, rec.ssim, rec.accuracy))
        records.append(rec)
        procs[lam] = res.processor
    return SweepResult(rows, records, procs)
