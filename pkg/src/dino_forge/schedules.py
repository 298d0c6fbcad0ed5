"""Learning-rate and EMA-momentum schedules, plus the teacher EMA update."""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from typing import Iterable

import torch

KINDS = ("warmup-cosine", "multistep", "cosine-tau")


@dataclass
class ScheduleSpec:
    """A closed-form scalar schedule.

    ``base`` is the peak value (for learning rates already scaled by batch
    size, see :func:`scaled_lr`); ``final`` is the cosine end point (minimum
    lr, or the final EMA momentum for ``cosine-tau``).
    """

    kind: str
    base: float
    final: float = 0.0
    warmup_start: float = 0.0
    warmup_epochs: int = 0
    milestones: list[int] = field(default_factory=list)
    gamma: float = 0.1
    total_steps: int = 1
    steps_per_epoch: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if any(b <= a for a, b in zip(self.milestones, self.milestones[1:])):
            raise ValueError(f"milestones must be strictly increasing: {self.milestones}")
        if self.total_steps < 1 or self.steps_per_epoch < 1:
            raise ValueError("total_steps and steps_per_epoch must be positive")
        if self.warmup_epochs < 0 or (self.warmup_epochs and self.warmup_steps >= self.total_steps):
            raise ValueError("warmup must be shorter than the whole run")

    @property
    def warmup_steps(self) -> int:
        return self.warmup_epochs * self.steps_per_epoch

    @property
    def total_epochs(self) -> int:
        return math.ceil(self.total_steps / self.steps_per_epoch)


def scaled_lr(lr_per_256: float, batch_size: int) -> float:
    """Linear scaling rule: ``lr_per_256 * batch_size / 256``."""
    return lr_per_256 * batch_size / 256


def pretrain_lr_spec(batch_size: int, epochs: int, steps_per_epoch: int, base_per_256: float = 5e-5,
                     warmup_start: float = 3e-5, warmup_epochs: int = 10, min_lr: float = 1e-6) -> ScheduleSpec:
    return ScheduleSpec("warmup-cosine", base=scaled_lr(base_per_256, batch_size), final=min_lr,
                        warmup_start=warmup_start, warmup_epochs=warmup_epochs,
                        total_steps=epochs * steps_per_epoch, steps_per_epoch=steps_per_epoch)


def finetune_lr_spec(batch_size: int, epochs: int, steps_per_epoch: int, base_per_256: float = 5e-4,
                     milestones: Iterable[int] = (15, 35), gamma: float = 0.1) -> ScheduleSpec:
    return ScheduleSpec("multistep", base=scaled_lr(base_per_256, batch_size), milestones=list(milestones),
                        gamma=gamma, total_steps=epochs * steps_per_epoch, steps_per_epoch=steps_per_epoch)


def tau_spec(total_steps: int, base: float = 0.996, final: float = 0.999) -> ScheduleSpec:
    return ScheduleSpec("cosine-tau", base=base, final=final, total_steps=total_steps)


def lr_at(spec: ScheduleSpec, step: int) -> float:
    """Learning rate at a global optimizer step (0-based)."""
    if step < 0:
        raise ValueError("step must be non-negative")
    if spec.kind == "multistep":
        epoch = step // spec.steps_per_epoch
        return spec.base * spec.gamma ** bisect.bisect_right(spec.milestones, epoch)
    if spec.kind != "warmup-cosine":
        raise ValueError(f"lr_at does not handle {spec.kind!r}")
    w = spec.warmup_steps
    if step < w:
        return spec.warmup_start + (spec.base - spec.warmup_start) * step / w
    # cosine spans [warmup end, last step] so the final step lands on `final`
    span = spec.total_steps - 1 - w
    if span <= 0:
        return spec.base
    c = (math.cos(math.pi * min(step - w, span) / span) + 1) / 2
    # convex-combination form hits both endpoints exactly
    return c * spec.base + (1 - c) * spec.final


def multistep_lr_at_epoch(spec: ScheduleSpec, epoch: int) -> float:
    return lr_at(spec, epoch * spec.steps_per_epoch)


def tau_at(spec: ScheduleSpec, step: int) -> float:
    """EMA momentum rising from ``base`` at step 0 to ``final`` at ``total_steps``."""
    if spec.kind != "cosine-tau":
        raise ValueError(f"tau_at needs a cosine-tau spec, got {spec.kind!r}")
    t = min(max(step, 0), spec.total_steps)
    c = (math.cos(math.pi * t / spec.total_steps) + 1) / 2
    return c * spec.base + (1 - c) * spec.final


@torch.no_grad()
def ema_update(teacher: Iterable[torch.Tensor], student: Iterable[torch.Tensor], tau: float) -> None:
    """In place: ``teacher <- tau * teacher + (1 - tau) * student``."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must lie in [0, 1], got {tau}")
    for t, s in zip(teacher, student, strict=True):
        t.mul_(tau).add_(s.detach(), alpha=1.0 - tau)
