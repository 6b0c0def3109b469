import csv
import json
import subprocess
import sys

import pytest

from passifi.cli import EXIT_DATA, EXIT_NUMERIC, EXIT_USAGE, main
from passifi.fingerprint import read_dataset
from passifi.geometry import Point2D, Rect, Station, StationLayout, save_layout
from passifi.model import read_header

CONFIG = {"grid_spacing": 10.0, "samples_per_point": 3, "test_samples_per_point": 4,
          "model": {"hidden_layers": 1, "hidden_width": 16, "max_epochs": 3}, "window": 2}


@pytest.fixture
def cfg_path(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(CONFIG))
    return p


@pytest.fixture
def scenario_path(tmp_path):
    p = tmp_path / "attack.json"
    p.write_text(json.dumps({"kind": "ftm-payload-spoof", "t1_offset_ns": -100, "t4_offset_ns": 0, "targets": ["AP-3"]}))
    return p


def run_all(out, cfg_path, scenario_path, seed="5"):
    common = ["--config", str(cfg_path), "--seed", seed, "--out", str(out)]
    codes = [
        main(["gen", *common]),
        main(["train", *common]),
        main(["eval", *common]),
        main(["compare", *common]),
        main(["attack", *common, "--scenario", str(scenario_path), "--points", "2", "--model", str(out / "model.bin")]),
        main(["sweep", *common, "--parameter", "hidden_layers", "--values", "1,2"]),
    ]
    return codes


def test_every_command_is_byte_identical_across_reruns(tmp_path, cfg_path, scenario_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run_all(a, cfg_path, scenario_path) == [0] * 6
    assert run_all(b, cfg_path, scenario_path) == [0] * 6
    names = sorted(p.name for p in a.iterdir())
    assert names == sorted(p.name for p in b.iterdir())
    assert {"layout.json", "config.json", "train_scans.jsonl", "test_scans.jsonl", "train_fingerprints.jsonl",
            "test_fingerprints.jsonl", "model.bin", "history.json", "eval_report.json", "eval_cdf.csv",
            "compare_report.json", "compare_cdf.csv", "attack_report.json", "sweep_hidden_layers.csv"} <= set(names)
    for n in names:
        assert (a / n).read_bytes() == (b / n).read_bytes(), n
    c = tmp_path / "c"
    assert main(["gen", "--config", str(cfg_path), "--seed", "6", "--out", str(c)]) == 0
    assert (c / "train_scans.jsonl").read_bytes() != (a / "train_scans.jsonl").read_bytes()


def test_outputs_follow_their_contracts(tmp_path, cfg_path, scenario_path):
    out = tmp_path / "o"
    assert run_all(out, cfg_path, scenario_path) == [0] * 6
    assert read_header(out / "model.bin")["input_size"] == 11
    rows = list(csv.reader(open(out / "eval_cdf.csv")))
    assert rows[0] == ["error_m", "cumulative_probability"] and float(rows[-1][1]) == 1.0
    rep = json.loads((out / "compare_report.json").read_text())
    fp, ml = rep["methods"]["fingerprint"]["median_error"], rep["methods"]["multilateration"]["median_error"]
    assert rep["ratio"] == pytest.approx(ml / fp)
    methods = {r[0] for r in list(csv.reader(open(out / "compare_cdf.csv")))[1:]}
    assert methods == {"fingerprint", "multilateration"}
    att = json.loads((out / "attack_report.json").read_text())
    assert att["active_distance_shift_m"] == pytest.approx(15.0, abs=1e-6)
    assert att["fingerprint_features_equal"] and att["location_estimates_equal"] and att["passive_frames"] == 0
    sweep = list(csv.reader(open(out / "sweep_hidden_layers.csv")))
    assert sweep[0] == ["value", "median_error"] and len(sweep) == 3
    train = read_dataset(out / "train_fingerprints.jsonl")
    assert len(train) == 9 * 3 and all(len(r.features) == 11 for r in train)


def test_training_flags_reach_the_model(tmp_path, cfg_path):
    out = tmp_path / "o"
    common = ["--config", str(cfg_path), "--out", str(out)]
    assert main(["gen", *common]) == 0
    assert main(["train", *common, "--dropout", "0.7"]) == 0
    assert read_header(out / "model.bin")["dropout_rate"] == 0.7
    full = (out / "model.bin").read_bytes()
    assert main(["train", *common, "--dropout", "0.7", "--train-fraction", "0.4"]) == 0
    assert (out / "model.bin").read_bytes() != full


def test_usage_errors_exit_1(tmp_path, cfg_path):
    assert main(["gen", "--config", str(cfg_path), "--out", str(tmp_path), "--test-fraction", "2"]) == EXIT_USAGE
    with pytest.raises(SystemExit) as exc:
        main(["sweep", "--parameter", "colour", "--values", "1"])
    assert exc.value.code == EXIT_USAGE
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == EXIT_USAGE
    assert main(["sweep", "--config", str(cfg_path), "--out", str(tmp_path),
                 "--parameter", "v", "--values", ","]) == EXIT_USAGE


def test_data_errors_exit_2(tmp_path, cfg_path):
    out = tmp_path / "o"
    common = ["--config", str(cfg_path), "--out", str(out)]
    assert main(["train", *common]) == EXIT_DATA  # no dataset yet
    assert main(["gen", *common]) == 0 and main(["train", *common]) == 0
    small = StationLayout(tuple(Station(f"R{i}", Point2D(5.0 * i, 3.0 + i)) for i in range(1, 5)),
                          Station("I", Point2D(10, 20)), Rect(0, 0, 50, 30))
    save_layout(small, tmp_path / "small.json")
    assert main(["eval", *common, "--layout", str(tmp_path / "small.json")]) == EXIT_DATA
    (out / "bad.jsonl").write_text("{not json\n")
    assert main(["eval", *common, "--data", str(out / "bad.jsonl")]) == EXIT_DATA
    (tmp_path / "bad_attack.json").write_text(json.dumps({"kind": "jam"}))
    assert main(["attack", *common, "--scenario", str(tmp_path / "bad_attack.json")]) == EXIT_DATA


def test_compare_without_any_converged_solve_exits_3(tmp_path, cfg_path, monkeypatch):
    out = tmp_path / "o"
    common = ["--config", str(cfg_path), "--out", str(out)]
    assert main(["gen", *common]) == 0 and main(["train", *common]) == 0
    from passifi import experiment

    real = experiment.multilateration_estimates

    def never_converges(scans, layout):
        est, stats = real(scans, layout)
        return est, {"underdetermined": 0, "not_converged": len(scans)}

    monkeypatch.setattr(experiment, "multilateration_estimates", never_converges)
    assert main(["compare", *common]) == EXIT_NUMERIC


def test_help_documents_defaults():
    out = subprocess.run([sys.executable, "-m", "passifi.cli", "train", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    for flag in ("--hidden-layers", "--dropout", "--lr", "--patience", "--train-fraction", "--seed", "--out"):
        assert flag in out.stdout
    assert "default 300" in out.stdout
