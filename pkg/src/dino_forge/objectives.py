"""Training losses: CIW-weighted BCE, DINO self-distillation, hybrid sum."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from .numerics import log_softmax, softmax


@dataclass(frozen=True)
class CiwTable:
    """Per-class importance weights, one positive value per class code."""

    codes: tuple[str, ...]
    weights: tuple[float, ...]

    def __post_init__(self):
        if len(self.codes) < 1:
            raise ValueError("CIW table needs at least one class")
        if len(self.codes) != len(self.weights):
            raise ValueError("codes and weights differ in length")
        if len(set(self.codes)) != len(self.codes):
            raise ValueError("duplicate class codes in CIW table")
        for c, w in zip(self.codes, self.weights):
            if not math.isfinite(w) or w <= 0:
                raise ValueError(f"CIW for class {c!r} must be finite and > 0, got {w}")

    def __len__(self) -> int:
        return len(self.codes)

    @classmethod
    def uniform(cls, codes: Sequence[str]) -> "CiwTable":
        return cls(tuple(codes), tuple(1.0 for _ in codes))

    def reorder(self, codes: Sequence[str]) -> "CiwTable":
        """Return the table in the column order of a dataset."""
        lookup = dict(zip(self.codes, self.weights))
        missing = [c for c in codes if c not in lookup]
        if missing:
            raise ValueError(f"CIW table lacks classes {missing}")
        return CiwTable(tuple(codes), tuple(lookup[c] for c in codes))


def load_ciw(path: str | Path) -> CiwTable:
    """Read a ``code,ciw`` CSV.  Lines starting with ``#`` are comments."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(line for line in fh if not line.lstrip().startswith("#")) if r]
    if not rows or [h.strip() for h in rows[0]] != ["code", "ciw"]:
        raise ValueError(f"{path}: expected header 'code,ciw'")
    codes, weights = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != 2:
            raise ValueError(f"{path}: row {lineno}: expected 2 fields, got {len(row)}")
        try:
            w = float(row[1])
        except ValueError:
            raise ValueError(f"{path}: row {lineno}: bad weight {row[1]!r}") from None
        codes.append(row[0].strip())
        weights.append(w)
    return CiwTable(tuple(codes), tuple(weights))


def save_ciw(table: CiwTable, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["code", "ciw"])
        for c, v in zip(table.codes, table.weights):
            w.writerow([c, repr(float(v))])


def pos_weights(ciw: CiwTable) -> np.ndarray:
    """``2 * (1 + CIW_c / mean(CIW))`` for every class."""
    w = np.asarray(ciw.weights, dtype=np.float64)
    if np.any(w <= 0):
        raise ValueError("CIW values must be positive")
    return 2.0 * (1.0 + w / w.mean())


def weighted_bce(logits: torch.Tensor, targets: torch.Tensor, pos_weight: torch.Tensor) -> torch.Tensor:
    """Mean positive-weighted binary cross-entropy over all B*C entries.

    Uses ``(1-y)x + (1 + (w-1)y) * softplus(-x)`` with an overflow-free
    softplus, which equals ``-[w y log s(x) + (1-y) log(1-s(x))]``.
    """
    if logits.shape != targets.shape:
        raise ValueError(f"logits {tuple(logits.shape)} and targets {tuple(targets.shape)} differ")
    if pos_weight.shape != logits.shape[-1:]:
        raise ValueError(f"pos_weight needs shape ({logits.shape[-1]},), got {tuple(pos_weight.shape)}")
    if not torch.all((targets == 0) | (targets == 1)):
        raise ValueError("targets must be 0 or 1")
    y = targets.to(logits.dtype)
    w = pos_weight.to(logits.dtype)
    softplus_neg = torch.log1p(torch.exp(-logits.abs())) + torch.clamp(-logits, min=0)
    loss = (1 - y) * logits + (1 + (w - 1) * y) * softplus_neg
    return loss.mean()


@dataclass
class DinoState:
    """Teacher centering buffer plus the two sharpening temperatures."""

    center: torch.Tensor
    teacher_temp: float = 0.04
    student_temp: float = 0.1
    momentum: float = 0.9

    def __post_init__(self):
        if self.teacher_temp <= 0 or self.student_temp <= 0:
            raise ValueError("temperatures must be positive")
        if not 0.0 <= self.momentum <= 1.0:
            raise ValueError(f"center momentum must lie in [0, 1], got {self.momentum}")
        if not torch.isfinite(self.center).all():
            raise ValueError("center must be finite")

    @classmethod
    def zeros(cls, k: int, **kw) -> "DinoState":
        return cls(torch.zeros(k), **kw)


def dino_loss(student_logits: Sequence[torch.Tensor], teacher_logits: Sequence[torch.Tensor],
              state: DinoState) -> torch.Tensor:
    """Cross-view self-distillation loss over two global views.

    Teacher targets are centered, sharpened and detached; each student view is
    matched against the teacher's *other* view and the two terms are averaged.
    """
    if len(student_logits) != 2 or len(teacher_logits) != 2:
        raise ValueError("dino_loss expects exactly two student and two teacher views")
    k = state.center.shape[-1]
    for t in (*student_logits, *teacher_logits):
        if t.shape[-1] != k:
            raise ValueError(f"logit width {t.shape[-1]} does not match center length {k}")
    center = state.center.to(teacher_logits[0].dtype)
    targets = [softmax(t.detach() - center, state.teacher_temp) for t in teacher_logits]
    log_probs = [log_softmax(s, state.student_temp) for s in student_logits]
    total = 0.0
    for a in range(2):
        for b in range(2):
            if a == b:
                continue
            total = total + (-(targets[a] * log_probs[b]).sum(dim=-1)).mean()
    return total / 2


@torch.no_grad()
def update_center(state: DinoState, teacher_logits: torch.Tensor) -> torch.Tensor:
    """``m * c + (1 - m) * column-mean(teacher_logits)`` (returns a new tensor)."""
    if teacher_logits.shape[-1] != state.center.shape[-1]:
        raise ValueError("teacher logit width does not match center length")
    batch_mean = teacher_logits.detach().to(state.center.dtype).mean(dim=0)
    return state.momentum * state.center + (1 - state.momentum) * batch_mean


def hybrid_loss(dino: torch.Tensor, bce: torch.Tensor, lam: float = 1.0) -> torch.Tensor:
    return dino + lam * bce


def teacher_temp_at(epoch: int, final: float = 0.04, warmup_start: float = 0.04, warmup_epochs: int = 0) -> float:
    """Optional linear teacher-temperature warmup (off when ``warmup_epochs == 0``)."""
    if warmup_epochs <= 0 or epoch >= warmup_epochs:
        return final
    return warmup_start + (final - warmup_start) * epoch / warmup_epochs
