"""``dino-forge`` command line.

Training subcommands (pretrain, hybrid, finetune, probe, supervised) read an
optional INI config, apply flag overrides, and write a run directory
``<mode>-<utc-timestamp>-<seed>`` holding the config echo, runlog.jsonl,
curves.csv, checkpoints, report.json / report.txt and validation dumps.

Exit codes: 0 success, 2 bad config or flags, 1 runtime failure.  Failures
print one JSON line ``{"error": <kind>, "message": ...}`` to stderr.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from . import checkpoint as ckpt_io
from . import config as config_io
from .data import (DatasetError, SynthSpec, generate_synthetic, load_dataset, read_embedding_dump, read_score_csv,
                   write_embedding_dump, write_label_csv)
from .engine import TrainingError, run
from .metrics import evaluate, rankme
from .objectives import CiwTable, load_ciw, save_ciw

TRAIN_MODES = ("pretrain", "hybrid", "finetune", "probe", "supervised")


class UsageError(Exception):
    """Bad flags or configuration (exit 2)."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ---------------------------------------------------------------------------
# argument parsing


def _train_parser(sub, mode: str):
    p = sub.add_parser(mode, help=f"{mode} run")
    p.add_argument("--config", type=Path, help="INI run configuration")
    p.add_argument("--dataset", help="label CSV (path,<codes...>)")
    p.add_argument("--image-root", help="directory the CSV paths are relative to")
    p.add_argument("--val", help="separate validation label CSV (default: split from --dataset)")
    p.add_argument("--ciw", help="class-importance-weight CSV (code,ciw); default uniform")
    p.add_argument("--pretrained", help="checkpoint with a pretrained backbone")
    p.add_argument("--resume", help="checkpoint to resume from")
    p.add_argument("--out", help="parent directory for run directories")
    p.add_argument("--run-dir", type=Path, help="exact run directory (overrides the generated name)")
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--fraction", type=float)
    p.add_argument("--preset", help="model preset (vit-mu, vit-t/16, vit-s/16)")
    p.add_argument("--lr", type=float, help="learning rate per 256 images")
    p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                   help="override any config key (repeatable)")
    p.set_defaults(func=cmd_train, mode=mode)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="dino-forge", description="Desk-scale DINO pretraining and multi-label evaluation.")
    ap.add_argument("--version", action="version", version=f"dino-forge {__version__}")
    ap.add_argument("-q", "--quiet", action="store_true", help="only warnings and errors on stderr")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for mode in TRAIN_MODES:
        _train_parser(sub, mode)

    p = sub.add_parser("evaluate", help="score a prediction CSV against a label CSV")
    p.add_argument("--predictions", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--ciw")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--embeddings", help="optional embedding dump for RankMe")
    p.add_argument("--out", type=Path, help="write the JSON report here instead of stdout")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("rankme", help="effective rank of an embedding dump")
    p.add_argument("embeddings")
    p.add_argument("--eps", type=float, default=1e-7)
    p.set_defaults(func=cmd_rankme)

    p = sub.add_parser("synth-data", help="generate a synthetic defect dataset")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--image-size", type=int, default=64)
    p.add_argument("--classes", type=int, default=6)
    p.add_argument("--prevalence", type=float, nargs="+", default=[0.3])
    p.add_argument("--normal-fraction", type=float, default=0.4)
    p.add_argument("--noise", type=float, default=0.03)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("gradcheck", help="finite-difference check of every primitive and the composed losses")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--shapes", type=int, default=10)
    p.add_argument("--tol", type=float, default=1e-4)
    p.set_defaults(func=cmd_gradcheck)
    return ap


# ---------------------------------------------------------------------------
# training


def _load_run_config(args) -> config_io.RunConfig:
    text = args.config.read_text() if args.config else ""
    overrides = []
    for item in args.set:
        key, sep, value = item.partition("=")
        section, dot, name = key.partition(".")
        if not sep or not dot:
            raise UsageError(f"--set expects SECTION.KEY=VALUE, got {item!r}")
        overrides.append((section.strip(), name.strip(), value))
    flag_map = {"seed": ("run", "seed"), "epochs": ("run", "epochs"), "batch_size": ("run", "batch_size"),
                "fraction": ("run", "fraction"), "preset": ("model", "preset"), "lr": ("optim", "lr_per_256"),
                "dataset": ("paths", "dataset"), "image_root": ("paths", "image_root"),
                "val": ("paths", "val_dataset"), "ciw": ("paths", "ciw"), "pretrained": ("paths", "pretrained"),
                "resume": ("paths", "resume"), "out": ("paths", "out_root")}
    for attr, (section, name) in flag_map.items():
        value = getattr(args, attr)
        if value is not None:
            overrides.append((section, name, str(value)))
    return config_io.parse(text, str(args.config or "<flags>"), mode=args.mode, overrides=overrides)


def _run_dir(cfg: config_io.RunConfig, explicit: Path | None) -> Path:
    if explicit is not None:
        path = explicit
    else:
        stamp = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%S%fZ")
        path = Path(cfg.paths.out_root) / f"{cfg.recipe.mode}-{stamp}-{cfg.recipe.seed}"
    path.mkdir(parents=True, exist_ok=explicit is not None)
    return path


def write_curves(records: list[dict], path: Path) -> None:
    keys: list[str] = []
    for r in records:
        keys += [k for k in r if k not in keys and k != "schema"]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys, lineterminator="\n")
        w.writeheader()
        for r in records:
            w.writerow({k: r.get(k, "") for k in keys})


def cmd_train(args) -> int:
    cfg = _load_run_config(args)
    p = cfg.paths
    if not p.dataset:
        raise UsageError("no dataset given (--dataset or [paths] dataset)")
    if args.mode in ("finetune", "probe") and not p.pretrained:
        raise UsageError(f"mode {args.mode} needs --pretrained")
    dataset = load_dataset(p.dataset, p.image_root or None)
    val = load_dataset(p.val_dataset, p.image_root or None) if p.val_dataset else None
    ciw = load_ciw(p.ciw).reorder(dataset.codes) if p.ciw else None
    pretrained = ckpt_io.load(p.pretrained) if p.pretrained else None
    resume = ckpt_io.load(p.resume) if p.resume else None

    run_dir = _run_dir(cfg, args.run_dir)
    (run_dir / "config.ini").write_text(config_io.dump(cfg))
    if resume is None:
        (run_dir / "runlog.jsonl").unlink(missing_ok=True)
    result = run(cfg.recipe, dataset, pretrained, val=val, ciw=ciw, run_dir=run_dir, resume=resume)

    write_curves(result.log.records, run_dir / "curves.csv")
    v = result.val
    write_label_csv(run_dir / "val_labels.csv", v.paths, v.codes, v.labels)
    write_embedding_dump(run_dir / "val_embeddings.txt", result.val_embeddings)
    if result.val_scores is not None:
        write_label_csv(run_dir / "val_predictions.csv", v.paths, v.codes, result.val_scores, fmt="{:.17g}")
    if result.report is not None:
        (run_dir / "report.json").write_text(json.dumps(result.report.to_dict(), indent=2, sort_keys=True) + "\n")
        (run_dir / "report.txt").write_text(result.report.table())
    else:
        summary = {"mode": cfg.recipe.mode, "rankme": rankme(result.val_embeddings),
                   "n_samples": len(v), "epochs": cfg.recipe.epochs}
        (run_dir / "report.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
        (run_dir / "report.txt").write_text(f"RankMe     {summary['rankme']:7.2f}\nsamples    {len(v):7d}\n")
    print(run_dir)
    return 0


# ---------------------------------------------------------------------------
# utilities


def _align(pred_paths, pred_codes, pred, label_paths, label_codes, labels):
    if sorted(pred_codes) != sorted(label_codes):
        raise UsageError("prediction and label CSVs have different class codes")
    if sorted(pred_paths) != sorted(label_paths) or len(set(label_paths)) != len(label_paths):
        raise UsageError("prediction and label CSVs cover different (or duplicated) paths")
    row = {q: i for i, q in enumerate(pred_paths)}
    col = [pred_codes.index(c) for c in label_codes]
    return pred[[row[q] for q in label_paths]][:, col]


def cmd_evaluate(args) -> int:
    pp, pc, pred = read_score_csv(args.predictions)
    lp, lc, labels = read_score_csv(args.labels)
    if np.any((pred < 0) | (pred > 1)):
        raise UsageError("prediction scores must lie in [0, 1]")
    if not np.all((labels == 0) | (labels == 1)):
        raise UsageError("labels must be 0 or 1")
    scores = _align(pp, pc, pred, lp, lc, labels)
    ciw = load_ciw(args.ciw).reorder(lc) if args.ciw else CiwTable.uniform(lc)
    emb = read_embedding_dump(args.embeddings) if args.embeddings else None
    report = evaluate(scores, labels.astype(np.int64), ciw, args.threshold, embeddings=emb)
    text = json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"
    if args.out:
        args.out.write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_rankme(args) -> int:
    print(repr(rankme(read_embedding_dump(args.embeddings), eps=args.eps)))
    return 0


def cmd_synth(args) -> int:
    try:
        spec = SynthSpec(n_samples=args.n, image_size=args.image_size, num_classes=args.classes,
                         prevalence=tuple(args.prevalence), normal_fraction=args.normal_fraction,
                         noise=args.noise, seed=args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    ds = generate_synthetic(spec, args.out)
    save_ciw(CiwTable.uniform(ds.codes), args.out / "ciw.csv")
    print(args.out / "labels.csv")
    return 0


def cmd_gradcheck(args) -> int:
    from .gradsuite import full_suite

    reports = full_suite(seed=args.seed, tol=args.tol, n_shapes=args.shapes)
    for r in reports:
        print(r.line())
    return 0 if all(r.passed for r in reports) else 1


# ---------------------------------------------------------------------------


def _fail(kind: str, exc: BaseException | str) -> None:
    msg = str(exc).replace("\n", " ")
    sys.stderr.write(json.dumps({"error": kind, "message": msg}) + "\n")


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        _fail("usage", exc)
        return 2
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s",
                        stream=sys.stderr)
    try:
        return args.func(args)
    except (UsageError, config_io.ConfigError) as exc:
        _fail("config", exc)
        return 2
    except (DatasetError, ckpt_io.CheckpointError, TrainingError, ValueError, OSError) as exc:
        _fail(type(exc).__name__, exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
