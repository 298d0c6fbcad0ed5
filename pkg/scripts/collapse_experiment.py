"""Centering ablation: default DINO pretraining vs. centering disabled (m=1, c=0).

Prints per-epoch validation RankMe of the exported backbone and of the
projector output for both runs.
"""
import argparse
import json
import logging
import tempfile
from pathlib import Path

from dino_forge import experiments
from dino_forge.data import SynthSpec, generate_synthetic
from dino_forge.engine import DESK_OPTIM, OptimConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=2000)
    ap.add_argument("--epochs", type=int, default=30)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--lr", type=float, default=None, help="lr per 256 images")
    ap.add_argument("--warmup", type=int, default=None)
    ap.add_argument("--out", type=Path, default=None, help="write a JSON summary here")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    optim = OptimConfig(**DESK_OPTIM)
    if args.lr is not None:
        optim.lr_per_256 = args.lr
    if args.warmup is not None:
        optim.warmup_epochs = args.warmup
    with tempfile.TemporaryDirectory() as tmp:
        ds = generate_synthetic(SynthSpec(n_samples=args.n, image_size=32, seed=args.seed), Path(tmp) / "synth")
        summary = experiments.collapse(ds, epochs=args.epochs, seed=args.seed, optim=optim)
    for name, arm in summary.items():
        print(f"{name}: RankMe {arm['rankme'][-1]:.2f} (projector {arm['rankme_projector'][-1]:.2f}), "
              f"loss {arm['loss'][-1]:.4f}, {arm['seconds'] / 60:.1f} min")
    if args.out:
        args.out.write_text(json.dumps(summary, indent=2))


if __name__ == "__main__":
    main()
