"""Training procedures for recognizers, processors and transformers."""

from __future__ import annotations

import copy
import json
import logging
import math
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, List, Optional, Sequence

import numpy as np
import torch

from . import degradations, objectives
from .config import NEEDS_RECOGNIZER, ExperimentConfig, lr_at
from .data import Dataset, PairSet
from .errors import ConfigError, DivergedError
from .metrics import top1_accuracy
from .models import (
    ModelCheckpoint,
    build_processor,
    build_recognizer,
    build_transformer,
    weights_hash,
)

log = logging.getLogger(__name__)

# Offsets separating the RNG streams of different consumers of one seed.
_STREAM_ORDER = 101
_STREAM_T = 202
_STREAM_R = 303


@contextmanager
def deterministic_mode(enabled: bool = True):
    """Single-threaded, deterministic kernels for bitwise-reproducible runs."""
    if not enabled:
        yield
        return
    prev_threads = torch.get_num_threads()
    prev_det = torch.are_deterministic_algorithms_enabled()
    torch.set_num_threads(1)
    torch.use_deterministic_algorithms(True)
    try:
        yield
    finally:
        torch.use_deterministic_algorithms(prev_det)
        torch.set_num_threads(prev_threads)


def to_tensor(images) -> torch.Tensor:
    """N x H x W x C numpy images -> N x C x H x W float32 tensor."""
    return torch.from_numpy(np.ascontiguousarray(np.asarray(images, dtype=np.float32).transpose(0, 3, 1, 2)))


def to_numpy(batch: torch.Tensor) -> np.ndarray:
    return batch.detach().cpu().numpy().transpose(0, 2, 3, 1)


def batches(n: int, batch_size: int, order: Optional[np.ndarray] = None):
    idx = np.arange(n) if order is None else order
    for start in range(0, n, batch_size):
        yield idx[start:start + batch_size]


def epoch_order(seed: int, epoch: int, n: int) -> np.ndarray:
    return np.random.default_rng([int(seed), _STREAM_ORDER, int(epoch)]).permutation(n)


def seed_for(seed: int, stream: int) -> int:
    return int(np.random.SeedSequence([int(seed), stream]).generate_state(1)[0])


@torch.no_grad()
def predict_logits(recognizer, images, batch_size: int = 256) -> np.ndarray:
    recognizer.eval()
    x = to_tensor(images)
    out = [recognizer(x[i:i + batch_size]) for i in range(0, len(x), batch_size)]
    return torch.cat(out).numpy()


def accuracy(recognizer, images, labels) -> float:
    return top1_accuracy(predict_logits(recognizer, images), np.asarray(labels))


def _check_finite(value: torch.Tensor, step: int):
    if not torch.isfinite(value).all():
        raise DivergedError(step)


def _write_log(path, rows):
    if path is None:
        return
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# Recognizers


def _fit_recognizer(config: ExperimentConfig, images, labels, num_classes, val_sets, seed,
                    log_path=None):
    sched = config.recognizer_schedule
    images = np.asarray(images, dtype=np.float32)
    mean = tuple(float(m) for m in images.mean(axis=(0, 1, 2)))
    std = tuple(float(s) for s in images.std(axis=(0, 1, 2)))
    spec = config.recognizer_spec(num_classes=num_classes, mean=mean, std=std)
    with deterministic_mode(config.deterministic):
        model = build_recognizer(spec, seed_for(seed, _STREAM_R))
        opt = torch.optim.Adam(model.parameters(), lr=sched.lr, weight_decay=sched.weight_decay)
        x_all = to_tensor(images)
        y_all = torch.as_tensor(np.asarray(labels), dtype=torch.int64)
        rows = []
        step = 0
        for epoch in range(1, sched.epochs + 1):
            # Cosine decay keeps the short desk-scale schedule stable at the end.
            lr = sched.lr * 0.5 * (1 + math.cos(math.pi * (epoch - 1) / sched.epochs))
            for g in opt.param_groups:
                g["lr"] = lr
            model.train()
            total, count = 0.0, 0
            for idx in batches(len(y_all), sched.batch_size, epoch_order(seed, epoch, len(y_all))):
                idx_t = torch.from_numpy(idx)
                logits = model(x_all[idx_t])
                loss = objectives.recog_loss_supervised(logits, y_all[idx_t])
                _check_finite(loss, step)
                opt.zero_grad()
                loss.backward()
                opt.step()
                total += float(loss.detach()) * len(idx)
                count += len(idx)
                step += 1
            rows.append({"epoch": epoch, "step": step, "l_recog": total / count, "lr": lr})
        model.eval()
        metrics = {name: accuracy(model, ims, labs) for name, (ims, labs) in val_sets.items()}
    _write_log(log_path, rows)
    ckpt = ModelCheckpoint(
        model=model,
        role="R",
        seed=seed,
        config_hash=config.config_hash(),
        metrics=metrics,
        notes={"trained": sched.epochs > 0, "epochs": sched.epochs},
    )
    return ckpt, rows


def pretrain_recognizer(config: ExperimentConfig, dataset: Dataset, val: Optional[Dataset] = None,
                        seed: Optional[int] = None, log_path=None) -> ModelCheckpoint:
    """Train R on clean images with cross-entropy; records clean validation accuracy."""
    config.validate()
    n_cls = config.recognizer.get("num_classes", dataset.num_classes)
    if n_cls != dataset.num_classes:
        raise ConfigError(
            f"recognizer num_classes={n_cls} but dataset has {dataset.num_classes} classes")
    if val is not None and val.num_classes != dataset.num_classes:
        raise ConfigError("train and validation datasets have different class sets")
    seed = config.seed if seed is None else seed
    val_sets = {}
    if val is not None:
        val_sets["clean_val_acc"] = (val.images, val.labels)
    ckpt, _ = _fit_recognizer(config, dataset.images, dataset.labels, dataset.num_classes, val_sets,
                              seed, log_path)
    ckpt.notes["classes"] = list(dataset.class_names)
    return ckpt


@torch.no_grad()
def process_images(processor, images, batch_size: int = 200, clip: bool = True) -> np.ndarray:
    processor.eval()
    x = to_tensor(images)
    out = torch.cat([processor(x[i:i + batch_size]) for i in range(0, len(x), batch_size)])
    if clip:
        out = out.clamp(0.0, 1.0)
    return to_numpy(out)


def _pathway(processor, pairs: PairSet):
    if processor is None:
        return np.asarray(pairs.inputs)
    if processor == "interpolate":
        return np.stack([degradations.no_processing(pairs.spec, im) for im in pairs.inputs])
    model = processor.model if isinstance(processor, ModelCheckpoint) else processor
    return process_images(model, pairs.inputs)


def train_recognizer_on_processed(config: ExperimentConfig, train_pairs: PairSet, val_pairs: PairSet,
                                  processor=None, seed: Optional[int] = None,
                                  log_path=None) -> ModelCheckpoint:
    """Train a fresh R on the outputs of a frozen processor.

    ``processor`` is a checkpoint/module, ``"interpolate"`` for the
    no-processing pathway, or ``None`` to use the pair inputs unchanged.
    Records accuracy on processed and on clean validation images.
    """
    config.validate()
    seed = config.seed if seed is None else seed
    n_cls = len(train_pairs.class_names) if train_pairs.class_names else int(train_pairs.labels.max()) + 1
    train_images = _pathway(processor, train_pairs)
    val_images = _pathway(processor, val_pairs)
    val_sets = {
        "processed_val_acc": (val_images, val_pairs.labels),
        "clean_val_acc": (val_pairs.targets, val_pairs.labels),
    }
    ckpt, _ = _fit_recognizer(config, train_images, train_pairs.labels, n_cls, val_sets, seed, log_path)
    ckpt.notes["trained_on"] = "processed" if processor is not None else "inputs"
    return ckpt


# ---------------------------------------------------------------------------
# Processors


@dataclass
class TrainResult:
    processor: ModelCheckpoint
    transformer: Optional[ModelCheckpoint] = None
    recognizer: Optional[ModelCheckpoint] = None
    log: List[dict] = field(default_factory=list)
    probes: List[dict] = field(default_factory=list)


def _grad_norm(scalar, params) -> float:
    grads = torch.autograd.grad(scalar, params, retain_graph=True, allow_unused=True)
    sq = sum(float((g.double() ** 2).sum()) for g in grads if g is not None)
    return math.sqrt(sq)


def mode_objective(mode, lam, distance, P, T, R, x, y, s):
    """Training objective of ``mode`` on one batch: ``(total, l_proc, l_recog)``."""
    out = P(x)
    l_proc = objectives.proc_loss(out, y)
    if mode == "plain":
        return l_proc, l_proc, None
    if mode in ("ra", "joint_finetune_r", "recog_only"):
        l_recog = objectives.recog_loss_supervised(R(out), s)
    elif mode == "ra_unsupervised":
        with torch.no_grad():
            target_repr = R(y)
        l_recog = objectives.recog_loss_unsupervised(R(out), target_repr, distance)
    elif mode == "ra_transformer":
        l_recog = objectives.recog_loss_supervised(R(T(objectives.stop_gradient(out))), s)
    else:
        raise ConfigError(f"unknown mode {mode!r}")
    if mode == "recog_only":
        return lam * l_recog, l_proc, l_recog
    return objectives.total_loss(l_proc, l_recog, lam), l_proc, l_recog


@torch.no_grad()
def evaluate_objective(config: ExperimentConfig, pairs: PairSet, processor, transformer=None,
                       recognizer=None, mode: Optional[str] = None, batch_size: int = 100) -> float:
    """Sample-weighted mean of the mode's total loss over ``pairs`` (models in eval mode)."""
    mode = mode or config.mode
    cfg = config.replace(mode=mode) if mode != config.mode else config
    unwrap = lambda m: m.model if isinstance(m, ModelCheckpoint) else m  # noqa: E731
    P, T, R = unwrap(processor), unwrap(transformer), unwrap(recognizer)
    for m in (P, T, R):
        if m is not None:
            m.eval()
    x_all, y_all = to_tensor(pairs.inputs), to_tensor(pairs.targets)
    s_all = torch.as_tensor(pairs.labels, dtype=torch.int64)
    total = 0.0
    for i in range(0, len(pairs), batch_size):
        sl = slice(i, i + batch_size)
        loss, _, _ = mode_objective(mode, cfg.resolved_lambda(), cfg.loss_spec().distance, P, T, R,
                                    x_all[sl], y_all[sl], s_all[sl])
        total += loss.item() * len(s_all[sl])
    return total / len(pairs)


def train_processor(config: ExperimentConfig, pairs: PairSet, recognizer: Optional[ModelCheckpoint] = None,
                    mode: Optional[str] = None, seed: Optional[int] = None, log_path=None,
                    probe_steps: Sequence[int] = ()) -> TrainResult:
    """Train P (and T for ``ra_transformer``) under one of the training modes.

    ``probe_steps`` lists global step indices at which the norm of the
    recognition-loss gradient w.r.t. P's weights is recorded.
    """
    mode = mode or config.mode
    config = config.replace(mode=mode) if mode != config.mode else config
    config.validate()
    seed = config.seed if seed is None else seed
    lam = config.resolved_lambda()
    loss_spec = config.loss_spec()
    if mode in NEEDS_RECOGNIZER:
        if recognizer is None:
            raise ConfigError(f"mode {mode!r} needs a recognizer checkpoint")
        if recognizer.role != "R":
            raise ConfigError(f"mode {mode!r} needs a role 'R' checkpoint, got role {recognizer.role!r}")
    if len(pairs) == 0:
        raise ConfigError("no training pairs")
    sched = config.schedule
    probe_steps = set(int(s) for s in probe_steps)

    with deterministic_mode(config.deterministic):
        P = build_processor(config.processor_spec(), seed)
        T = build_transformer(config.transformer_spec(), seed_for(seed, _STREAM_T)) \
            if mode == "ra_transformer" else None
        R = None
        r_hash_before = None
        if mode in NEEDS_RECOGNIZER:
            r_hash_before = weights_hash(recognizer.model)
            R = copy.deepcopy(recognizer.model)
            if mode == "joint_finetune_r":
                R.train()
                R.requires_grad_(True)
            else:
                R.eval()
                R.requires_grad_(False)

        opt_p = torch.optim.Adam(P.parameters(), lr=lr_at(sched, 1))
        opt_t = torch.optim.Adam(T.parameters(), lr=lr_at(sched, 1)) if T is not None else None
        opt_r = None
        if mode == "joint_finetune_r":
            opt_r = torch.optim.SGD(R.parameters(), lr=config.finetune.lr, momentum=config.finetune.momentum)

        x_all = to_tensor(pairs.inputs)
        y_all = to_tensor(pairs.targets)
        s_all = torch.as_tensor(pairs.labels, dtype=torch.int64)

        rows, probes = [], []
        step = 0
        P.train()
        if T is not None:
            T.train()
        for epoch in range(1, sched.epochs + 1):
            lr = lr_at(sched, epoch)
            for opt in (opt_p, opt_t):
                if opt is not None:
                    for g in opt.param_groups:
                        g["lr"] = lr
            sum_proc, sum_recog, count = 0.0, 0.0, 0
            for idx in batches(len(pairs), sched.batch_size, epoch_order(seed, epoch, len(pairs))):
                idx_t = torch.from_numpy(idx)
                x, y, s = x_all[idx_t], y_all[idx_t], s_all[idx_t]
                loss, l_proc, l_recog = mode_objective(mode, lam, loss_spec.distance, P, T, R, x, y, s)
                _check_finite(loss, step)
                if step in probe_steps and l_recog is not None:
                    probes.append({
                        "step": step,
                        "grad_recog_P": _grad_norm(lam * l_recog, list(P.parameters())),
                        "grad_recog_T": _grad_norm(lam * l_recog, list(T.parameters())) if T is not None else None,
                    })
                for opt in (opt_p, opt_t, opt_r):
                    if opt is not None:
                        opt.zero_grad()
                loss.backward()
                for opt in (opt_p, opt_t, opt_r):
                    if opt is not None:
                        opt.step()
                n = len(idx)
                sum_proc += l_proc.item() * n
                if l_recog is not None:
                    sum_recog += l_recog.item() * n
                count += n
                step += 1
            rows.append({
                "epoch": epoch,
                "step": step,
                "l_proc": sum_proc / count,
                "l_recog": (sum_recog / count) if mode != "plain" else None,
                "lr": lr,
            })
            log.debug("epoch %d: %s", epoch, rows[-1])
        P.eval()
        if T is not None:
            T.eval()
        if R is not None:
            R.eval()
        if mode in NEEDS_RECOGNIZER and mode != "joint_finetune_r":
            if weights_hash(R) != r_hash_before or weights_hash(recognizer.model) != r_hash_before:
                raise RuntimeError("frozen recognizer weights changed during training")

    _write_log(log_path, rows)
    chash = config.config_hash()
    notes = {"mode": mode, "lambda": lam, "task": config.task_spec().to_dict(), "epochs": sched.epochs}
    result = TrainResult(
        processor=ModelCheckpoint(P, "P", seed, chash, {"final_l_proc": rows[-1]["l_proc"] if rows else None}, notes),
        log=rows,
        probes=probes,
    )
    if T is not None:
        result.transformer = ModelCheckpoint(T, "T", seed, chash, {}, dict(notes))
    if mode == "joint_finetune_r":
        result.recognizer = ModelCheckpoint(R, "R", seed, chash, {}, {**recognizer.notes, "finetuned": True})
    return result
