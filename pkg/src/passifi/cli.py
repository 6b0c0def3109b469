"""Command-line driver: ``passifi gen|train|eval|compare|attack|sweep``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical non-convergence.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from . import experiment as ex
from .adversary import load_scenario
from .fingerprint import read_dataset, write_dataset
from .ftm import read_scans, write_scans
from .geometry import save_layout
from .model import NumericalError, load_model, save_model

EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 1, 2, 3

# CLI flag -> (ExperimentConfig field, or "model.<ModelConfig field>")
OVERRIDES = {
    "seed": "seed",
    "grid_spacing": "grid_spacing",
    "samples_per_point": "samples_per_point",
    "test_samples_per_point": "test_samples_per_point",
    "test_fraction": "test_fraction",
    "burst_size": "burst_size",
    "delta_ns": "delta_ns",
    "jitter_ns": "jitter_ns",
    "drop_probability": "drop_probability",
    "train_fraction": "train_fraction",
    "reference_density": "reference_density",
    "aug_sigma_ns": "aug_sigma_ns",
    "aug_copies": "aug_copies",
    "v": "window",
    "hidden_layers": "model.hidden_layers",
    "hidden_width": "model.hidden_width",
    "dropout": "model.dropout_rate",
    "lr": "model.learning_rate",
    "patience": "model.patience",
    "max_epochs": "model.max_epochs",
    "batch_size": "model.batch_size",
    "validation_fraction": "model.validation_fraction",
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--layout", help="layout JSON (default: built-in 50x30 m testbed)")
    p.add_argument("--config", help="experiment config JSON; flags override its values")
    p.add_argument("--seed", type=int, help="master seed (default 0)")
    p.add_argument("--out", default=".", help="output directory (default: current directory)")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")


def _sim_flags(p):
    g = p.add_argument_group("simulation")
    g.add_argument("--grid-spacing", type=float, help="reference grid spacing in m (default 1.0)")
    g.add_argument("--samples-per-point", type=int, help="scans per training reference point (default 100)")
    g.add_argument("--test-samples-per-point", type=int, help="scans per test point (default: samples-per-point)")
    g.add_argument("--test-fraction", type=float, help="fraction of reference points held out (default 0.4)")
    g.add_argument("--burst-size", type=int, help="FTM exchanges per burst (default 8)")
    g.add_argument("--delta-ns", type=float, help="initiator processing time in ns (default 10)")
    g.add_argument("--jitter-ns", type=float, help="timestamp jitter std in ns (default 1.0)")
    g.add_argument("--drop-probability", type=float, help="per-responder scan drop probability (default 0.05)")


def _train_flags(p):
    g = p.add_argument_group("training")
    g.add_argument("--hidden-layers", type=int, help="hidden layers (default 4)")
    g.add_argument("--hidden-width", type=int, help="neurons per hidden layer (default 300)")
    g.add_argument("--dropout", type=float, help="dropout rate (default 0.10)")
    g.add_argument("--lr", type=float, help="learning rate (default 0.001)")
    g.add_argument("--patience", type=int, help="early-stopping patience in epochs (default 50)")
    g.add_argument("--max-epochs", type=int, help="epoch cap (default 500)")
    g.add_argument("--batch-size", type=int, help="minibatch size (default 64)")
    g.add_argument("--validation-fraction", type=float, help="validation hold-out (default 0.2)")
    g.add_argument("--train-fraction", type=float, help="fraction of training records used (default 1.0)")
    g.add_argument("--reference-density", type=float, help="fraction of training reference points kept (default 1.0)")
    g.add_argument("--aug-sigma-ns", type=float, help="augmentation noise std in ns (default 1.0)")
    g.add_argument("--aug-copies", type=int, help="augmented copies per record (default 3)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="passifi", description="Passive Wi-Fi TDoA localization experiments.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen", help="simulate train/test scan datasets over the reference grid")
    _common(p)
    _sim_flags(p)

    p = sub.add_parser("train", help="train the localization model on a fingerprint dataset")
    _common(p)
    _train_flags(p)
    p.add_argument("--data", help="fingerprint JSONL (default: OUT/train_fingerprints.jsonl)")

    for name, text in (("eval", "evaluate the model with online smoothing"),
                       ("compare", "fingerprinting vs multilateration on the same scans")):
        p = sub.add_parser(name, help=text)
        _common(p)
        p.add_argument("--model", help="model file (default: OUT/model.bin)")
        p.add_argument("--data", help="test scan JSONL (default: OUT/test_scans.jsonl)")
        p.add_argument("--v", type=int, help="smoothing window size (default 100)")

    p = sub.add_parser("attack", help="paired clean/attacked runs for a spoofing scenario")
    _common(p)
    _sim_flags(p)
    p.add_argument("--scenario", required=True, help="attack scenario JSON")
    p.add_argument("--points", type=int, default=10, help="passive positions to test (default 10)")
    p.add_argument("--model", help="optional model file; adds a location-estimate equality check")

    p = sub.add_parser("sweep", help="median error as one parameter varies")
    _common(p)
    _sim_flags(p)
    _train_flags(p)
    p.add_argument("--parameter", required=True, choices=ex.SWEEP_PARAMETERS)
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--v", type=int, help="smoothing window size (default 100)")
    return parser


def make_config(args) -> ex.ExperimentConfig:
    base = ex.ExperimentConfig.load(args.config).to_dict() if args.config else {}
    base.setdefault("model", {})
    if args.layout:
        base["layout"] = args.layout
    for flag, target in OVERRIDES.items():
        value = getattr(args, flag, None)
        if value is None:
            continue
        if target.startswith("model."):
            base["model"] = {**base["model"], target[6:]: value}
        else:
            base[target] = value
    return ex.ExperimentConfig.from_dict(base)


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _write_cdf(path: Path, rows, header) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def cmd_gen(args, cfg, out: Path) -> None:
    layout = ex.build_layout(cfg)
    train_scans, test_scans = ex.generate(cfg, layout)
    save_layout(layout, out / "layout.json")
    _dump(out / "config.json", cfg.to_dict())
    write_scans(out / "train_scans.jsonl", train_scans)
    write_scans(out / "test_scans.jsonl", test_scans)
    write_dataset(out / "train_fingerprints.jsonl", ex.to_fingerprints(train_scans, layout))
    write_dataset(out / "test_fingerprints.jsonl", ex.to_fingerprints(test_scans, layout))


def cmd_train(args, cfg, out: Path) -> None:
    records = read_dataset(args.data or out / "train_fingerprints.jsonl")
    if not records:
        raise ValueError("training dataset is empty")
    n = len(records[0].features)
    model, nz = ex.train_pipeline(records, cfg, n)
    save_model(out / "model.bin", model, nz)
    _dump(out / "history.json", model.history)


def _load_eval_inputs(args, cfg, out: Path):
    model, nz = load_model(args.model or out / "model.bin")
    scans = read_scans(args.data or out / "test_scans.jsonl")
    if not scans:
        raise ValueError("test dataset is empty")
    layout = ex.build_layout(cfg)
    if model.config.input_size != layout.n:
        raise ValueError(f"model expects {model.config.input_size} responders, layout has {layout.n}")
    return model, nz, scans, layout


def cmd_eval(args, cfg, out: Path) -> None:
    model, nz, scans, layout = _load_eval_inputs(args, cfg, out)
    rep = ex.evaluate(model, nz, scans, layout, cfg.window)
    _dump(out / "eval_report.json", rep.summary())
    _write_cdf(out / "eval_cdf.csv", rep.cdf, ["error_m", "cumulative_probability"])


def cmd_compare(args, cfg, out: Path) -> None:
    model, nz, scans, layout = _load_eval_inputs(args, cfg, out)
    rep = ex.compare(model, nz, scans, layout, cfg.window)
    cdfs = rep.extra.pop("cdfs")
    _dump(out / "compare_report.json", rep.summary())
    rows = [(m, e, p) for m in ("fingerprint", "multilateration") for e, p in cdfs[m]]
    _write_cdf(out / "compare_cdf.csv", rows, ["method", "error_m", "cumulative_probability"])
    ml = rep.methods["multilateration"]
    if ml["not_converged"] + ml["underdetermined"] == len(scans):
        raise NumericalError("multilateration produced no converged estimate")


def cmd_attack(args, cfg, out: Path) -> None:
    scenario = load_scenario(args.scenario)
    model = nz = None
    if args.model:
        model, nz = load_model(args.model)
    rep = ex.attack_demo(cfg, scenario, model, nz, points=args.points)
    _dump(out / "attack_report.json", rep)


def cmd_sweep(args, cfg, out: Path) -> None:
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    if not values:
        raise UsageError("--values is empty")
    rows = ex.sweep(cfg, args.parameter, values)
    _write_cdf(out / f"sweep_{args.parameter}.csv", rows, ["value", "median_error"])


COMMANDS = {"gen": cmd_gen, "train": cmd_train, "eval": cmd_eval, "compare": cmd_compare,
            "attack": cmd_attack, "sweep": cmd_sweep}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = make_config(args)
    except (ValueError, TypeError, OSError) as exc:
        print(f"passifi: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](args, cfg, out)
    except UsageError as exc:
        print(f"passifi: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"passifi: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, KeyError, OSError) as exc:
        print(f"passifi: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return 0


if __name__ == "__main__":
    sys.exit(main())
