"""Sewer-ML style scoring (per-class F2, CIW-weighted F2, normal-class F1) and RankMe."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .objectives import CiwTable

RANKME_EPS = 1e-7


@dataclass
class ConfusionCounts:
    tp: np.ndarray
    fp: np.ndarray
    fn: np.ndarray
    tn: np.ndarray

    def __post_init__(self):
        for name in ("tp", "fp", "fn", "tn"):
            arr = np.asarray(getattr(self, name), dtype=np.int64)
            if np.any(arr < 0):
                raise ValueError(f"negative {name} count")
            setattr(self, name, arr)
        totals = self.tp + self.fp + self.fn + self.tn
        if totals.size and np.any(totals != totals[0]):
            raise ValueError("per-class counts do not sum to a common sample count")

    @property
    def n_samples(self) -> int:
        return int((self.tp + self.fp + self.fn + self.tn)[0]) if self.tp.size else 0


def confusion_counts(scores: np.ndarray, labels: np.ndarray, threshold: float = 0.5) -> ConfusionCounts:
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 2:
        raise ValueError(f"scores {scores.shape} and labels {labels.shape} must be matching (N, C) arrays")
    pred = scores >= threshold
    true = labels.astype(bool)
    return ConfusionCounts(
        tp=(pred & true).sum(axis=0),
        fp=(pred & ~true).sum(axis=0),
        fn=(~pred & true).sum(axis=0),
        tn=(~pred & ~true).sum(axis=0),
    )


def f_beta(tp: int, fp: int, fn: int, beta: float = 2.0) -> float:
    """F-beta from counts; 0.0 whenever precision or recall is undefined or both are 0."""
    if tp < 0 or fp < 0 or fn < 0:
        raise ValueError("counts must be non-negative")
    if tp + fp == 0 or tp + fn == 0:
        return 0.0
    p = tp / (tp + fp)
    r = tp / (tp + fn)
    if p == 0 and r == 0:
        return 0.0
    b2 = beta * beta
    return (1 + b2) * p * r / (b2 * p + r)


def per_class_f2(counts: ConfusionCounts) -> np.ndarray:
    return np.array([f_beta(int(t), int(p), int(n), 2.0) for t, p, n in zip(counts.tp, counts.fp, counts.fn)])


def f2_ciw(counts: ConfusionCounts, ciw: CiwTable) -> float:
    """CIW-weighted mean of per-class F2, in percent."""
    w = np.asarray(ciw.weights, dtype=np.float64)
    f2 = per_class_f2(counts)
    if f2.shape != w.shape:
        raise ValueError(f"{f2.size} classes scored but CIW table has {w.size}")
    # clamp away 1-ulp overshoot of the weighted mean
    return float(min(100.0, 100.0 * (w * f2).sum() / w.sum()))


def f1_normal(scores: np.ndarray, labels: np.ndarray, threshold: float = 0.5) -> float:
    """F1 of the implicit normal class (no defect predicted / present), in percent."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape:
        raise ValueError("scores and labels differ in shape")
    pred_normal = np.all(scores < threshold, axis=1)
    true_normal = np.all(labels == 0, axis=1)
    tp = int(np.sum(pred_normal & true_normal))
    fp = int(np.sum(pred_normal & ~true_normal))
    fn = int(np.sum(~pred_normal & true_normal))
    return 100.0 * f_beta(tp, fp, fn, 1.0)


def rankme(embeddings: np.ndarray, eps: float = RANKME_EPS) -> float:
    """Exponential of the entropy of the L1-normalised singular-value spectrum."""
    z = np.asarray(embeddings, dtype=np.float64)
    if z.ndim != 2 or z.shape[0] < 2:
        raise ValueError(f"rankme needs an (N>=2, D) matrix, got shape {z.shape}")
    if not np.isfinite(z).all():
        raise ValueError("embeddings contain non-finite values")
    s = np.linalg.svd(z, compute_uv=False)
    total = s.sum()
    if total == 0:
        raise ValueError("rankme is undefined for an all-zero matrix")
    p = s / total + eps
    return float(np.exp(-np.sum(p * np.log(p))))


@dataclass
class MetricReport:
    codes: list[str]
    f2_per_class: list[float]
    f2_ciw: float
    f1_normal: float
    n_samples: int
    threshold: float = 0.5
    rankme: float | None = None
    counts: dict[str, list[int]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def table(self) -> str:
        """Aligned plain-text rendering."""
        width = max([len(c) for c in self.codes] + [5])
        lines = [f"{'class':<{width}}  {'F2':>7}  {'TP':>6}  {'FP':>6}  {'FN':>6}"]
        for i, c in enumerate(self.codes):
            lines.append(
                f"{c:<{width}}  {100 * self.f2_per_class[i]:7.2f}  {self.counts['tp'][i]:6d}  "
                f"{self.counts['fp'][i]:6d}  {self.counts['fn'][i]:6d}"
            )
        lines.append("")
        lines.append(f"F2_CIW     {self.f2_ciw:7.2f}")
        lines.append(f"F1_Normal  {self.f1_normal:7.2f}")
        if self.rankme is not None:
            lines.append(f"RankMe     {self.rankme:7.2f}")
        lines.append(f"samples    {self.n_samples:7d}")
        return "\n".join(lines) + "\n"


def evaluate(scores: np.ndarray, labels: np.ndarray, ciw: CiwTable, threshold: float = 0.5,
             embeddings: np.ndarray | None = None) -> MetricReport:
    counts = confusion_counts(scores, labels, threshold)
    f2 = per_class_f2(counts)
    return MetricReport(
        codes=list(ciw.codes),
        f2_per_class=[float(v) for v in f2],
        f2_ciw=f2_ciw(counts, ciw),
        f1_normal=f1_normal(scores, labels, threshold),
        n_samples=counts.n_samples,
        threshold=threshold,
        rankme=None if embeddings is None else rankme(embeddings),
        counts={k: [int(v) for v in getattr(counts, k)] for k in ("tp", "fp", "fn", "tn")},
    )
