"""Training modes: DINO pretraining (optionally hybrid), fine-tuning, linear probe, supervised baseline."""
from __future__ import annotations

import copy
import json
import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np
import torch
from torch import nn

from . import checkpoint as ckpt_io
from .augment import AugmentConfig, RngStream, eval_transform, finetune_augment, pretrain_view
from .checkpoint import Checkpoint
from .data import MultiLabelDataset, split_validation, subsample
from .metrics import MetricReport, evaluate, rankme
from .model import Classifier, DinoNet, ModelConfig, VisionTransformer, build
from .objectives import CiwTable, DinoState, dino_loss, hybrid_loss, pos_weights, teacher_temp_at, update_center, weighted_bce
from .schedules import ScheduleSpec, ema_update, finetune_lr_spec, lr_at, pretrain_lr_spec, tau_at, tau_spec

log = logging.getLogger(__name__)

MODES = ("pretrain", "hybrid", "finetune", "probe", "supervised")
RUNLOG_SCHEMA = 1

# sub-seed tags keep the random streams of different components independent
_TAG_STUDENT, _TAG_HYBRID_HEAD, _TAG_FINETUNE_HEAD, _TAG_SUPERVISED = 1, 2, 3, 4


class TrainingError(RuntimeError):
    pass


@dataclass
class OptimConfig:
    lr_per_256: float = 5e-5
    warmup_start: float = 3e-5
    warmup_epochs: int = 10
    min_lr: float = 1e-6
    milestones: list[int] = field(default_factory=lambda: [15, 35])
    gamma: float = 0.1
    weight_decay: float = 0.04
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    tau_base: float = 0.996
    tau_final: float = 0.999


@dataclass
class DinoConfig:
    student_temp: float = 0.1
    teacher_temp: float = 0.04
    warmup_teacher_temp: float = 0.04
    teacher_temp_warmup_epochs: int = 0
    center_momentum: float = 0.9


@dataclass
class TrainRecipe:
    mode: str = "pretrain"
    model: ModelConfig = field(default_factory=ModelConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    optim: OptimConfig = field(default_factory=OptimConfig)
    dino: DinoConfig = field(default_factory=DinoConfig)
    batch_size: int = 64
    epochs: int = 35
    seed: int = 0
    fraction: float = 1.0
    hybrid_lambda: float = 1.0
    threshold: float = 0.5
    val_fraction: float = 0.1
    rankme_samples: int = 512
    checkpoint_every: int = 0
    export: str = "teacher"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}; choose from {MODES}")
        if not 0.0 < self.fraction <= 1.0:
            raise ValueError(f"fraction must lie in (0, 1], got {self.fraction}")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be positive")
        if self.export not in ("teacher", "student"):
            raise ValueError("export must be 'teacher' or 'student'")
        if self.mode in ("pretrain", "hybrid") and self.optim.warmup_epochs >= self.epochs:
            raise ValueError(f"warmup_epochs ({self.optim.warmup_epochs}) must be shorter than epochs ({self.epochs})")


def default_recipe(mode: str, **kw) -> TrainRecipe:
    """Recipe defaults: 35-epoch warmup-cosine pretraining, 45-epoch multistep fine-tuning."""
    if mode in ("pretrain", "hybrid"):
        kw.setdefault("epochs", 35)
        return TrainRecipe(mode=mode, **kw)
    kw.setdefault("epochs", 45)
    kw.setdefault("optim", OptimConfig(lr_per_256=5e-4, warmup_epochs=0))
    return TrainRecipe(mode=mode, **kw)


# Desk scale (ViT-mu, a few thousand 32 px frames, ~30 steps per epoch).
# tau: the reference 0.996 lags the student by ~250 steps, i.e. most of a desk run,
# leaving the teacher a random colour detector; 0.95 keeps the lag under one epoch.
# Photometric strength is halved or less: at init the CLS token is close to a linear
# function of mean colour, so full-strength jitter leaves the two views nothing in common.
DESK_OPTIM = dict(lr_per_256=5e-4, warmup_epochs=3, tau_base=0.95, tau_final=0.99)
DESK_AUGMENT = dict(brightness=0.2, contrast=0.2, saturation=0.1, hue=0.02, grayscale_p=0.05,
                    equalize_p=0.1, solarize_p=0.1)


def desk_recipe(mode: str, **kw) -> TrainRecipe:
    """``default_recipe`` with the ViT-mu desk overrides used by the experiment scripts."""
    from .model import preset

    model = kw.pop("model", preset("vit-mu"))
    kw.setdefault("augment", AugmentConfig(image_size=model.image_size, **DESK_AUGMENT))
    if mode in ("pretrain", "hybrid"):
        kw.setdefault("epochs", 30)
        kw.setdefault("optim", OptimConfig(**DESK_OPTIM))
    else:
        kw.setdefault("epochs", 20)
    return default_recipe(mode, model=model, **kw)


@dataclass
class RunLog:
    records: list[dict] = field(default_factory=list)
    path: Path | None = None

    def append(self, record: dict) -> None:
        record = {"schema": RUNLOG_SCHEMA, **record}
        self.records.append(record)
        if self.path is not None:
            with open(self.path, "a") as fh:
                fh.write(json.dumps(record, sort_keys=True) + "\n")

    @staticmethod
    def read(path: str | Path) -> "RunLog":
        with open(path) as fh:
            return RunLog([json.loads(line) for line in fh if line.strip()])

    def deterministic(self) -> list[dict]:
        """Records without the wall-clock field."""
        return [{k: v for k, v in r.items() if k != "wall_time"} for r in self.records]


@dataclass
class RunResult:
    checkpoint: Checkpoint
    log: RunLog
    report: MetricReport | None = None
    val: MultiLabelDataset | None = None
    val_scores: np.ndarray | None = None
    val_embeddings: np.ndarray | None = None


def subseed(seed: int, tag: int) -> int:
    return int(np.random.SeedSequence([seed, tag]).generate_state(1)[0])


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("DINO_FORGE_THREADS", "1")))
    except ValueError:
        return 1


def _map(fn: Callable, items: list) -> list:
    n = _threads()
    if n == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(n) as pool:
        return list(pool.map(fn, items))


def _stack(arrays: list[np.ndarray]) -> torch.Tensor:
    return torch.from_numpy(np.stack(arrays).astype(np.float32, copy=False))


def param_groups(modules: list[nn.Module], weight_decay: float) -> list[dict]:
    """Biases and 1-D (norm) parameters are exempt from weight decay."""
    decay, no_decay = [], []
    for m in modules:
        for name, p in m.named_parameters():
            if not p.requires_grad:
                continue
            (no_decay if name.endswith(".bias") or p.dim() == 1 else decay).append(p)
    return [{"params": decay, "weight_decay": weight_decay}, {"params": no_decay, "weight_decay": 0.0}]


def make_optimizer(modules: list[nn.Module], oc: OptimConfig) -> torch.optim.AdamW:
    return torch.optim.AdamW(param_groups(modules, oc.weight_decay), lr=0.0, betas=(oc.beta1, oc.beta2),
                             eps=oc.eps, foreach=False)


def _set_lr(opt: torch.optim.Optimizer, lr: float) -> None:
    for g in opt.param_groups:
        g["lr"] = lr


def _named_trainables(named: dict[str, nn.Module]) -> list[tuple[str, torch.Tensor]]:
    out = []
    for prefix, m in named.items():
        for name, p in m.named_parameters():
            if p.requires_grad:
                out.append((f"{prefix}.{name}", p))
    return out


def _save_optimizer(ck: Checkpoint, opt: torch.optim.Optimizer, named: list[tuple[str, torch.Tensor]]) -> None:
    steps = set()
    for name, p in named:
        st = opt.state.get(p)
        if not st:
            continue
        ck.arrays[f"optim.{name}.exp_avg"] = st["exp_avg"].numpy().astype("<f4", copy=True)
        ck.arrays[f"optim.{name}.exp_avg_sq"] = st["exp_avg_sq"].numpy().astype("<f4", copy=True)
        steps.add(int(st["step"].item()))
    if len(steps) > 1:
        raise TrainingError("optimizer parameters disagree on step count")
    ck.meta["optim_step"] = str(steps.pop() if steps else 0)


def _load_optimizer(ck: Checkpoint, opt: torch.optim.Optimizer, named: list[tuple[str, torch.Tensor]]) -> None:
    step = int(ck.meta.get("optim_step", "0"))
    if step == 0:
        return
    for name, p in named:
        key = f"optim.{name}.exp_avg"
        if key not in ck.arrays:
            raise ckpt_io.CheckpointError(f"checkpoint lacks optimizer state for {name}")
        opt.state[p] = {
            "step": torch.tensor(float(step)),
            "exp_avg": torch.from_numpy(ck.arrays[key].copy()),
            "exp_avg_sq": torch.from_numpy(ck.arrays[f"optim.{name}.exp_avg_sq"].copy()),
        }


@torch.no_grad()
def embed(backbone: VisionTransformer, images: list[np.ndarray], aug: AugmentConfig, batch_size: int = 256) -> np.ndarray:
    out = []
    for i in range(0, len(images), batch_size):
        x = _stack([eval_transform(im, aug) for im in images[i:i + batch_size]])
        out.append(backbone(x).numpy())
    return np.concatenate(out).astype(np.float64)


@torch.no_grad()
def _rankmes(net: DinoNet, images: list[np.ndarray], aug: AugmentConfig) -> dict[str, float]:
    """RankMe of the backbone representation, plus the projector output as a collapse diagnostic."""
    r = embed(net.backbone, images, aug)
    z = net.head.project(torch.from_numpy(r).float()).numpy().astype(np.float64)
    return {"rankme": rankme(r), "rankme_projector": rankme(z)}


@torch.no_grad()
def predict(backbone: VisionTransformer, classifier: Classifier, images: list[np.ndarray], aug: AugmentConfig,
            batch_size: int = 256) -> tuple[np.ndarray, np.ndarray]:
    """Sigmoid class scores and backbone embeddings under the eval transform."""
    scores, embs = [], []
    for i in range(0, len(images), batch_size):
        x = _stack([eval_transform(im, aug) for im in images[i:i + batch_size]])
        r = backbone(x)
        scores.append(torch.sigmoid(classifier(r)).numpy())
        embs.append(r.numpy())
    return np.concatenate(scores).astype(np.float64), np.concatenate(embs).astype(np.float64)


def _prepare_splits(recipe: TrainRecipe, dataset: MultiLabelDataset, val: MultiLabelDataset | None):
    if val is None:
        dataset, val = split_validation(dataset, recipe.val_fraction, recipe.seed)
    if recipe.fraction < 1.0:
        dataset = subsample(dataset, recipe.fraction, recipe.seed)
    return dataset, val


def _with_size(aug: AugmentConfig, size: int) -> AugmentConfig:
    return aug if aug.image_size == size else replace(aug, image_size=size)


def _epoch_order(seed: int, epoch: int, n: int) -> np.ndarray:
    return np.random.default_rng([seed, 7, epoch]).permutation(n)


def _check_finite(loss: torch.Tensor, epoch: int, step: int) -> None:
    if not torch.isfinite(loss):
        raise TrainingError(f"non-finite loss {loss.item()} at epoch {epoch}, step {step}")


def _base_meta(recipe: TrainRecipe, epoch: int, step: int) -> dict[str, str]:
    return {"mode": recipe.mode, "epoch": str(epoch), "step": str(step), "seed": str(recipe.seed),
            "export": recipe.export}


# ---------------------------------------------------------------------------
# pretraining


def pretrain(recipe: TrainRecipe, dataset: MultiLabelDataset, val: MultiLabelDataset | None = None,
             ciw: CiwTable | None = None, run_dir: str | Path | None = None,
             resume: Checkpoint | None = None) -> RunResult:
    """DINO self-distillation with two global views; ``mode='hybrid'`` adds lambda * weighted BCE."""
    if recipe.mode not in ("pretrain", "hybrid"):
        raise ValueError(f"pretrain() needs mode pretrain or hybrid, got {recipe.mode!r}")
    hybrid = recipe.mode == "hybrid"
    train, val = _prepare_splits(recipe, dataset, val)
    bs = min(recipe.batch_size, len(train))
    if bs < 2:
        raise ValueError("pretraining needs a batch size of at least 2 (centering uses batch statistics)")
    cfg = recipe.model.replace(num_classes=train.num_classes)
    aug = _with_size(recipe.augment, cfg.image_size)

    steps_per_epoch = len(train) // bs
    total = recipe.epochs * steps_per_epoch
    oc = recipe.optim
    lr_spec = pretrain_lr_spec(bs, recipe.epochs, steps_per_epoch, oc.lr_per_256, oc.warmup_start,
                               oc.warmup_epochs, oc.min_lr)
    tspec = tau_spec(total, oc.tau_base, oc.tau_final)

    torch.manual_seed(recipe.seed)
    student: DinoNet = build(cfg, subseed(recipe.seed, _TAG_STUDENT))
    teacher: DinoNet = copy.deepcopy(student)
    for p in teacher.parameters():
        p.requires_grad_(False)
    modules = {"student": student}
    classifier = None
    if hybrid:
        classifier = build(cfg, subseed(recipe.seed, _TAG_HYBRID_HEAD), "classifier")
        modules["classifier"] = classifier
        ciw = (ciw or CiwTable.uniform(train.codes)).reorder(train.codes)
        pw = torch.from_numpy(pos_weights(ciw)).float()
    opt = make_optimizer(list(modules.values()), oc)
    named = _named_trainables(modules)
    dc = recipe.dino
    state = DinoState.zeros(cfg.prototypes, teacher_temp=dc.teacher_temp, student_temp=dc.student_temp,
                            momentum=dc.center_momentum)

    start_epoch = 0
    if resume is not None:
        resume.load_module("student", student)
        resume.load_module("teacher", teacher)
        if classifier is not None:
            resume.load_module("classifier", classifier)
        state.center = torch.from_numpy(resume.arrays["center"].copy())
        _load_optimizer(resume, opt, named)
        start_epoch = resume.epoch

    run_dir = Path(run_dir) if run_dir is not None else None
    runlog = RunLog(path=run_dir / "runlog.jsonl" if run_dir else None)
    images = train.images()
    val_images = val.images()[: recipe.rankme_samples]
    labels = torch.from_numpy(train.labels.astype(np.float32))

    def snapshot(epoch: int, step: int) -> Checkpoint:
        ck = Checkpoint(cfg, meta=_base_meta(recipe, epoch, step))
        ck.add_module("student", student)
        ck.add_module("teacher", teacher)
        if classifier is not None:
            ck.add_module("classifier", classifier)
        ck.arrays["center"] = state.center.numpy().astype("<f4", copy=True)
        _save_optimizer(ck, opt, named)
        return ck

    step = start_epoch * steps_per_epoch
    for epoch in range(start_epoch, recipe.epochs):
        t0 = time.perf_counter()
        state.teacher_temp = teacher_temp_at(epoch, dc.teacher_temp, dc.warmup_teacher_temp,
                                             dc.teacher_temp_warmup_epochs)
        order = _epoch_order(recipe.seed, epoch, len(train))
        losses = []
        lr = tau = float("nan")
        for b in range(steps_per_epoch):
            idx = order[b * bs:(b + 1) * bs]
            views = _map(lambda iv: pretrain_view(images[iv[0]], RngStream(recipe.seed, int(iv[0]), epoch, iv[1]), aug),
                         [(int(i), v) for v in (0, 1) for i in idx])
            x = _stack(views)
            r, s_logits = student(x)
            with torch.no_grad():
                _, t_logits = teacher(x)
            loss = dino_loss(s_logits.chunk(2), t_logits.chunk(2), state)
            if hybrid:
                y = labels[idx].repeat(2, 1)
                loss = hybrid_loss(loss, weighted_bce(classifier(r), y, pw), recipe.hybrid_lambda)
            _check_finite(loss, epoch, step)
            lr = lr_at(lr_spec, step)
            _set_lr(opt, lr)
            opt.zero_grad(set_to_none=True)
            loss.backward()
            opt.step()
            tau = tau_at(tspec, step)
            ema_update(teacher.parameters(), student.parameters(), tau)
            state.center = update_center(state, t_logits)
            losses.append(loss.item())
            step += 1

        exported = teacher if recipe.export == "teacher" else student
        rec = {"epoch": epoch, "step": step - 1, "mean_loss": float(np.mean(losses)), "lr": lr, "tau": tau,
               "teacher_temp": state.teacher_temp,
               **_rankmes(exported, val_images, aug)}
        if hybrid:
            scores, _ = predict(student.backbone, classifier, val.images(), aug)
            rep = evaluate(scores, val.labels, ciw, recipe.threshold)
            rec.update(val_f2_ciw=rep.f2_ciw, val_f1_normal=rep.f1_normal)
        rec["wall_time"] = time.perf_counter() - t0
        runlog.append(rec)
        log.info("epoch %d loss %.4f rankme %.2f (projector %.2f)", epoch, rec["mean_loss"], rec["rankme"],
                 rec["rankme_projector"])
        done = epoch + 1
        if run_dir is not None and recipe.checkpoint_every and done % recipe.checkpoint_every == 0:
            (run_dir / "checkpoints").mkdir(exist_ok=True)
            ckpt_io.save(snapshot(done, step), run_dir / "checkpoints" / f"epoch-{done:03d}.ckpt")

    final = snapshot(recipe.epochs, step)
    exported = teacher if recipe.export == "teacher" else student
    final.add_module("backbone", exported.backbone)
    report = scores = None
    embs = embed(exported.backbone, val.images(), aug)
    if hybrid:
        scores, _ = predict(student.backbone, classifier, val.images(), aug)
        report = evaluate(scores, val.labels, ciw, recipe.threshold, embeddings=embs)
    if run_dir is not None:
        ckpt_io.save(final, run_dir / "final.ckpt")
    return RunResult(final, runlog, report, val, scores, embs)


# ---------------------------------------------------------------------------
# supervised modes


def load_backbone(ck: Checkpoint, cfg: ModelConfig | None = None) -> VisionTransformer:
    """Backbone exported by a pretraining run (or a fine-tuned backbone)."""
    cfg = cfg or ck.config
    bb = VisionTransformer(cfg)
    for prefix in ("backbone", f"{ck.meta.get('export', 'teacher')}.backbone"):
        if ck.has(prefix):
            ck.load_module(prefix, bb)
            return bb
    raise ckpt_io.CheckpointError("checkpoint holds no backbone")


def finetune(recipe: TrainRecipe, pretrained: Checkpoint | None, dataset: MultiLabelDataset,
             val: MultiLabelDataset | None = None, ciw: CiwTable | None = None,
             run_dir: str | Path | None = None, resume: Checkpoint | None = None) -> RunResult:
    """Supervised training with CIW-weighted BCE and a multistep schedule.

    ``mode='finetune'`` trains everything from the pretrained backbone,
    ``'probe'`` freezes that backbone, ``'supervised'`` starts from random init.
    """
    if recipe.mode not in ("finetune", "probe", "supervised"):
        raise ValueError(f"finetune() needs mode finetune, probe or supervised, got {recipe.mode!r}")
    if recipe.mode != "supervised" and pretrained is None:
        raise ValueError(f"mode {recipe.mode!r} needs a pretrained checkpoint")
    train, val = _prepare_splits(recipe, dataset, val)
    base_cfg = pretrained.config if (pretrained is not None and recipe.mode != "supervised") else recipe.model
    cfg = base_cfg.replace(num_classes=train.num_classes)
    aug = _with_size(recipe.augment, cfg.image_size)
    ciw = (ciw or CiwTable.uniform(train.codes)).reorder(train.codes)
    pw = torch.from_numpy(pos_weights(ciw)).float()

    if recipe.mode == "supervised":
        torch.manual_seed(recipe.seed)
        backbone = build(cfg, subseed(recipe.seed, _TAG_SUPERVISED), "backbone")
    else:
        backbone = load_backbone(pretrained, cfg)
    classifier = build(cfg, subseed(recipe.seed, _TAG_FINETUNE_HEAD), "classifier")
    frozen = recipe.mode == "probe"
    if frozen:
        for p in backbone.parameters():
            p.requires_grad_(False)
    modules = {"classifier": classifier} if frozen else {"backbone": backbone, "classifier": classifier}
    oc = recipe.optim
    opt = make_optimizer(list(modules.values()), oc)
    named = _named_trainables(modules)

    bs = min(recipe.batch_size, len(train))
    steps_per_epoch = math.ceil(len(train) / bs)
    lr_spec = finetune_lr_spec(bs, recipe.epochs, steps_per_epoch, oc.lr_per_256, oc.milestones, oc.gamma)

    start_epoch = 0
    if resume is not None:
        resume.load_module("backbone", backbone)
        resume.load_module("classifier", classifier)
        _load_optimizer(resume, opt, named)
        start_epoch = resume.epoch

    run_dir = Path(run_dir) if run_dir is not None else None
    runlog = RunLog(path=run_dir / "runlog.jsonl" if run_dir else None)
    images = train.images()
    labels = torch.from_numpy(train.labels.astype(np.float32))

    def snapshot(epoch: int, step: int) -> Checkpoint:
        ck = Checkpoint(cfg, meta=_base_meta(recipe, epoch, step))
        ck.add_module("backbone", backbone)
        ck.add_module("classifier", classifier)
        _save_optimizer(ck, opt, named)
        return ck

    step = start_epoch * steps_per_epoch
    for epoch in range(start_epoch, recipe.epochs):
        t0 = time.perf_counter()
        order = _epoch_order(recipe.seed, epoch, len(train))
        losses = []
        lr = float("nan")
        for b in range(steps_per_epoch):
            idx = order[b * bs:(b + 1) * bs]
            x = _stack(_map(lambda i: finetune_augment(images[i], RngStream(recipe.seed, int(i), epoch, 0), aug),
                            [int(i) for i in idx]))
            if frozen:
                with torch.no_grad():
                    r = backbone(x)
            else:
                r = backbone(x)
            loss = weighted_bce(classifier(r), labels[idx], pw)
            _check_finite(loss, epoch, step)
            lr = lr_at(lr_spec, step)
            _set_lr(opt, lr)
            opt.zero_grad(set_to_none=True)
            loss.backward()
            opt.step()
            losses.append(loss.item())
            step += 1
        scores, _ = predict(backbone, classifier, val.images(), aug)
        rep = evaluate(scores, val.labels, ciw, recipe.threshold)
        runlog.append({"epoch": epoch, "step": step - 1, "mean_loss": float(np.mean(losses)), "lr": lr,
                       "val_f2_ciw": rep.f2_ciw, "val_f1_normal": rep.f1_normal,
                       "wall_time": time.perf_counter() - t0})
        log.info("epoch %d loss %.4f F2_CIW %.2f F1_Normal %.2f", epoch, np.mean(losses), rep.f2_ciw, rep.f1_normal)
        done = epoch + 1
        if run_dir is not None and recipe.checkpoint_every and done % recipe.checkpoint_every == 0:
            (run_dir / "checkpoints").mkdir(exist_ok=True)
            ckpt_io.save(snapshot(done, step), run_dir / "checkpoints" / f"epoch-{done:03d}.ckpt")

    scores, embs = predict(backbone, classifier, val.images(), aug)
    report = evaluate(scores, val.labels, ciw, recipe.threshold, embeddings=embs)
    final = snapshot(recipe.epochs, step)
    if run_dir is not None:
        ckpt_io.save(final, run_dir / "final.ckpt")
    return RunResult(final, runlog, report, val, scores, embs)


def linear_probe(recipe: TrainRecipe, pretrained: Checkpoint, dataset: MultiLabelDataset, **kw) -> RunResult:
    if recipe.mode != "probe":
        raise ValueError("linear_probe() needs mode 'probe'")
    return finetune(recipe, pretrained, dataset, **kw)


def supervised(recipe: TrainRecipe, dataset: MultiLabelDataset, **kw) -> RunResult:
    if recipe.mode != "supervised":
        raise ValueError("supervised() needs mode 'supervised'")
    return finetune(recipe, None, dataset, **kw)


def run(recipe: TrainRecipe, dataset: MultiLabelDataset, pretrained: Checkpoint | None = None, **kw) -> RunResult:
    """Dispatch on ``recipe.mode``."""
    if recipe.mode in ("pretrain", "hybrid"):
        return pretrain(recipe, dataset, **kw)
    return finetune(recipe, pretrained, dataset, **kw)
