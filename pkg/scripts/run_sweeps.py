"""Median error against one parameter at a time, one CSV per parameter.

    python scripts/run_sweeps.py --out results/ hidden_layers dropout v
"""

import argparse
import csv
from pathlib import Path

from passifi import experiment as ex

DEFAULT_VALUES = {
    "hidden_layers": [1, 2, 4, 6],
    "dropout": [0.0, 0.1, 0.3, 0.5],
    "learning_rate": [0.0001, 0.001, 0.01],
    "train_fraction": [0.2, 0.4, 0.7, 1.0],
    "reference_density": [0.25, 0.5, 1.0],
    "n_responders": [4, 6, 8, 11],
    "initiator_index": [0, 4, 6, 10],
    "v": [1, 10, 25, 50],
}


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("parameters", nargs="*", default=list(DEFAULT_VALUES), choices=ex.SWEEP_PARAMETERS)
    ap.add_argument("--grid-spacing", type=float, default=4.0)
    ap.add_argument("--samples-per-point", type=int, default=10)
    ap.add_argument("--max-epochs", type=int, default=40)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="results")
    args = ap.parse_args()

    cfg = ex.ExperimentConfig(grid_spacing=args.grid_spacing, samples_per_point=args.samples_per_point,
                              model={"max_epochs": args.max_epochs}, window=50, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name in args.parameters:
        rows = ex.sweep(cfg, name, DEFAULT_VALUES[name])
        with open(out / f"sweep_{name}.csv", "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["value", "median_error"])
            w.writerows(rows)
        print(name, " ".join(f"{v}:{m:.3f}" for v, m in rows))


if __name__ == "__main__":
    main()
