"""Desk experiments shared by ``scripts/`` and the acceptance tests.

Both run on the synthetic dataset with ViT-mu and the desk recipe from
:func:`dino_forge.engine.desk_recipe`.
"""
from __future__ import annotations

import time
from dataclasses import replace

import numpy as np

from .data import MultiLabelDataset
from .engine import DinoConfig, OptimConfig, desk_recipe, finetune, pretrain, supervised
from .objectives import CiwTable

CENTERING_ARMS = (("default", 0.9), ("no-centering", 1.0))


def collapse(train: MultiLabelDataset, val: MultiLabelDataset | None = None, epochs: int = 30, seed: int = 0,
             optim: OptimConfig | None = None) -> dict[str, dict]:
    """Default DINO against centering disabled (m=1 keeps the zero-initialised center at 0)."""
    out = {}
    for name, momentum in CENTERING_ARMS:
        kw = {"optim": optim} if optim is not None else {}
        recipe = desk_recipe("pretrain", epochs=epochs, seed=seed, dino=DinoConfig(center_momentum=momentum), **kw)
        t0 = time.perf_counter()
        res = pretrain(recipe, train, val)
        out[name] = {"rankme": [r["rankme"] for r in res.log.records],
                     "rankme_projector": [r["rankme_projector"] for r in res.log.records],
                     "loss": [r["mean_loss"] for r in res.log.records],
                     "seconds": time.perf_counter() - t0}
    return out


FINETUNE_LR_PER_256 = 1.6e-2


def finetune_recipe(mode: str, fraction: float, seed: int, epochs: int = 20, batch_size: int = 32):
    # the 15/35-of-45 milestones scaled to the shorter run
    milestones = [max(1, round(epochs * 15 / 45)), max(2, round(epochs * 35 / 45))]
    return desk_recipe(mode, epochs=epochs, seed=seed, fraction=fraction, batch_size=batch_size,
                       optim=OptimConfig(lr_per_256=FINETUNE_LR_PER_256, warmup_epochs=0, milestones=milestones))


def label_efficiency(train: MultiLabelDataset, val: MultiLabelDataset, ciw: CiwTable | None = None,
                     seeds=(0, 1, 2), fractions=(0.1, 1.0), pretrain_epochs: int = 60,
                     finetune_epochs: int = 20) -> dict:
    """SSL pretrain + fine-tune against supervised-from-scratch, per seed and label fraction.

    Pretraining sees every training image without labels; each fine-tune and
    each supervised run sees the same seeded ``fraction`` of labelled rows.
    """
    runs = []
    for seed in seeds:
        t0 = time.perf_counter()
        pre = pretrain(desk_recipe("pretrain", epochs=pretrain_epochs, seed=seed), train, val)
        row = {"seed": seed, "pretrain_rankme": pre.log.records[-1]["rankme"]}
        for frac in fractions:
            ft = finetune(finetune_recipe("finetune", frac, seed, finetune_epochs), pre.checkpoint, train, val, ciw)
            sup = supervised(finetune_recipe("supervised", frac, seed, finetune_epochs), train, val=val, ciw=ciw)
            row[str(frac)] = {"ssl_f2_ciw": ft.report.f2_ciw, "supervised_f2_ciw": sup.report.f2_ciw}
        row["seconds"] = time.perf_counter() - t0
        runs.append(row)
    summary = {}
    for frac in fractions:
        ssl = float(np.mean([r[str(frac)]["ssl_f2_ciw"] for r in runs]))
        sup = float(np.mean([r[str(frac)]["supervised_f2_ciw"] for r in runs]))
        summary[str(frac)] = {"ssl_f2_ciw": ssl, "supervised_f2_ciw": sup, "gap": ssl - sup}
    return {"runs": runs, "mean": summary}
