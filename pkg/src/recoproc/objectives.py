"""Training objectives: processing loss, recognition losses and their combination.

All reductions are means so that lambda does not depend on batch size.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import torch
import torch.nn.functional as F

from .errors import InvalidParam, LabelError, ShapeError

SUPERVISED = "supervised_ce"
UNSUPERVISED = "unsupervised"
DISTANCES = ("l2_probs", "l2_logits", "kl")


@dataclass(frozen=True)
class RecognitionLossSpec:
    mode: str = SUPERVISED
    distance: Optional[str] = None
    lam: float = 1e-3

    def __post_init__(self):
        if self.mode not in (SUPERVISED, UNSUPERVISED):
            raise InvalidParam(f"unknown recognition loss mode {self.mode!r}")
        if self.mode == UNSUPERVISED:
            if self.distance is None:
                object.__setattr__(self, "distance", "l2_probs")
            if self.distance not in DISTANCES:
                raise InvalidParam(f"unknown distance {self.distance!r}; expected one of {DISTANCES}")
        elif self.distance is not None:
            raise InvalidParam("distance is only valid for the unsupervised mode")
        lam = float(self.lam)
        if not (lam >= 0 and lam != float("inf")):
            raise InvalidParam(f"lambda must be finite and >= 0, got {self.lam}")
        object.__setattr__(self, "lam", lam)

    def to_dict(self):
        d = {"mode": self.mode, "lambda": self.lam}
        if self.distance is not None:
            d["distance"] = self.distance
        return d


def proc_loss(out: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    if out.shape != target.shape:
        raise ShapeError(f"processor output {tuple(out.shape)} vs target {tuple(target.shape)}")
    return torch.mean((out - target) ** 2)


def recog_loss_supervised(logits: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    if logits.ndim != 2 or labels.ndim != 1 or logits.shape[0] != labels.shape[0]:
        raise ShapeError(f"logits {tuple(logits.shape)} do not match labels {tuple(labels.shape)}")
    if labels.numel() and (int(labels.min()) < 0 or int(labels.max()) >= logits.shape[1]):
        raise LabelError(f"labels must lie in [0, {logits.shape[1]})")
    return F.cross_entropy(logits, labels, reduction="mean")


def recog_loss_unsupervised(out_repr: torch.Tensor, target_repr: torch.Tensor,
                            distance: str = "l2_probs") -> torch.Tensor:
    """Distance between R's outputs on the processed and on the target image.

    ``target_repr`` is treated as a constant.  ``l2_*`` are mean squared
    differences over all entries; ``kl`` is KL(target || out) averaged over
    rows.
    """
    if out_repr.shape != target_repr.shape:
        raise ShapeError(f"representation shapes differ: {tuple(out_repr.shape)} vs {tuple(target_repr.shape)}")
    target_repr = target_repr.detach()
    if distance == "l2_logits":
        return torch.mean((out_repr - target_repr) ** 2)
    if distance == "l2_probs":
        return torch.mean((F.softmax(out_repr, dim=1) - F.softmax(target_repr, dim=1)) ** 2)
    if distance == "kl":
        log_q = F.log_softmax(out_repr, dim=1)
        log_p = F.log_softmax(target_repr, dim=1)
        return torch.mean(torch.sum(log_p.exp() * (log_p - log_q), dim=1))
    raise InvalidParam(f"unknown distance {distance!r}")


def total_loss(l_proc, l_recog, lam: float):
    return l_proc + lam * l_recog


def stop_gradient(x: torch.Tensor) -> torch.Tensor:
    return x.detach()
