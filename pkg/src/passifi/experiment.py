"""End-to-end experiments on a synthetic testbed.

Offline: simulate scans over a reference grid, build fingerprints, augment,
normalize, train. Online: feed windows of ``v`` consecutive scans through the
model and the smoother. Everything is seeded; the same config reproduces the
same numbers.
"""

from __future__ import annotations

import dataclasses
import json
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import testbed
from .adversary import AttackScenario, apply_attack, assert_passive_silence
from .fingerprint import (
    FingerprintRecord,
    Normalizer,
    augment,
    build_feature_vector,
    drop_responders,
    fit_normalizer,
    to_arrays,
)
from .ftm import (
    ChannelModel,
    ClockModel,
    ScanRecord,
    SessionConfig,
    active_distance,
    active_rtt,
    run_scan,
)
from .geometry import Point2D, Rect, StationLayout, distance, load_layout
from .model import ModelConfig, TrainedModel, init_model, predict, train
from .smoothing import smooth
from .tdoa import Underdetermined, compute_tdoa, multilaterate

log = logging.getLogger(__name__)

SWEEP_PARAMETERS = (
    "hidden_layers", "dropout", "learning_rate", "train_fraction",
    "reference_density", "n_responders", "initiator_index", "v",
)


@dataclass
class ExperimentConfig:
    layout: str | None = None  # path to a layout JSON; None uses the built-in testbed
    grid_spacing: float = 1.0
    samples_per_point: int = 100
    test_samples_per_point: int | None = None
    test_fraction: float = 0.4
    burst_size: int = 8
    delta_ns: float = 10.0
    delta_jitter_ns: float = 0.0
    jitter_ns: float = 1.0
    drop_probability: float = 0.05
    nlos_excess_m: dict[str, float] | None = None  # None: testbed defaults
    walls: list[list[float]] | None = None  # [[x0, y0, x1, y1], ...]; None: testbed default
    clock_offsets_ns: dict[str, float] = field(default_factory=dict)
    clock_drift_ppm: dict[str, float] = field(default_factory=dict)
    model: dict = field(default_factory=dict)  # ModelConfig overrides
    train_fraction: float = 1.0
    reference_density: float = 1.0
    aug_sigma_ns: float = 1.0
    aug_copies: int = 3
    window: int = 100
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.test_fraction < 1.0:
            raise ValueError("test_fraction must lie in (0, 1)")
        if not 0.0 < self.train_fraction <= 1.0 or not 0.0 < self.reference_density <= 1.0:
            raise ValueError("train_fraction and reference_density must lie in (0, 1]")
        if self.samples_per_point < 1 or self.window < 1:
            raise ValueError("samples_per_point and window must be >= 1")
        unknown = set(self.model) - {f.name for f in dataclasses.fields(ModelConfig)}
        if unknown:
            raise ValueError(f"unknown model settings {sorted(unknown)}")

    @classmethod
    def from_dict(cls, obj: dict) -> ExperimentConfig:
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(obj) - names
        if unknown:
            raise ValueError(f"unknown config keys {sorted(unknown)}")
        return cls(**obj)

    @classmethod
    def load(cls, path) -> ExperimentConfig:
        with open(path) as f:
            return cls.from_dict(json.load(f))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **changes) -> ExperimentConfig:
        return dataclasses.replace(self, **changes)


def derive_seed(*keys: int) -> int:
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1, dtype=np.uint64)[0] >> 1)


def build_layout(cfg: ExperimentConfig) -> StationLayout:
    return load_layout(cfg.layout) if cfg.layout else testbed.default_layout()


def build_session(cfg: ExperimentConfig) -> SessionConfig:
    return SessionConfig(burst_size=cfg.burst_size, delta=cfg.delta_ns * 1e-9,
                         delta_jitter_sigma=cfg.delta_jitter_ns * 1e-9)


def build_channel(cfg: ExperimentConfig) -> ChannelModel:
    default = cfg.layout is None
    nlos = cfg.nlos_excess_m if cfg.nlos_excess_m is not None else (dict(testbed.NLOS_EXCESS_M) if default else {})
    if cfg.walls is not None:
        walls = tuple(Rect(*w) for w in cfg.walls)
    else:
        walls = (testbed.WALL,) if default else ()
    return ChannelModel(cfg.jitter_ns * 1e-9, nlos, walls, cfg.drop_probability)


def build_clocks(cfg: ExperimentConfig) -> ClockModel:
    return ClockModel({k: v * 1e-9 for k, v in cfg.clock_offsets_ns.items()}, dict(cfg.clock_drift_ppm))


def model_config(cfg: ExperimentConfig, n: int) -> ModelConfig:
    settings = dict(cfg.model)
    settings.setdefault("seed", cfg.seed)
    settings["input_size"] = n
    return ModelConfig(**settings)


# ---- offline stage ------------------------------------------------------------------

def split_points(points: Sequence[Point2D], test_fraction: float, seed: int):
    order = np.random.default_rng(derive_seed(seed, 101)).permutation(len(points))
    n_test = int(round(test_fraction * len(points)))
    test = sorted(order[:n_test].tolist())
    train_idx = sorted(order[n_test:].tolist())
    return train_idx, test


def simulate_point(layout, point, k_point, samples, cfg, session, channel, clocks) -> list[ScanRecord]:
    out = []
    for s in range(samples):
        seed = derive_seed(cfg.seed, k_point, s)
        scan = run_scan(layout, point, session, channel, clocks, seed=seed)
        out.append(ScanRecord.from_scan(point, scan, seed))
    return out


def generate(cfg: ExperimentConfig, layout: StationLayout | None = None):
    """Simulated (train_scans, test_scans) over the reference grid, split by point."""
    layout = layout or build_layout(cfg)
    session, channel, clocks = build_session(cfg), build_channel(cfg), build_clocks(cfg)
    points = testbed.reference_grid(layout.bounds, cfg.grid_spacing)
    train_idx, test_idx = split_points(points, cfg.test_fraction, cfg.seed)
    n_test_samples = cfg.test_samples_per_point or cfg.samples_per_point
    train_scans, test_scans = [], []
    for k in train_idx:
        train_scans += simulate_point(layout, points[k], k, cfg.samples_per_point, cfg, session, channel, clocks)
    for k in test_idx:
        test_scans += simulate_point(layout, points[k], k, n_test_samples, cfg, session, channel, clocks)
    log.info("generated %d train / %d test scans over %d points", len(train_scans), len(test_scans), len(points))
    return train_scans, test_scans


def to_fingerprints(scans: Sequence[ScanRecord], layout: StationLayout, drop: Sequence[int] = ()) -> list[FingerprintRecord]:
    out = []
    for s in scans:
        fv = build_feature_vector(s.obs, layout)
        if drop:
            fv = drop_responders(fv, drop)
        out.append(FingerprintRecord(fv, s.point))
    return out


def thin_reference_points(records: Sequence[FingerprintRecord], density: float, seed: int) -> list[FingerprintRecord]:
    """Keep all samples of a random ``density`` fraction of the reference points."""
    if density >= 1.0:
        return list(records)
    points = sorted({(r.label.x, r.label.y) for r in records})
    rng = np.random.default_rng(derive_seed(seed, 202))
    keep_n = max(1, int(round(density * len(points))))
    keep = {points[i] for i in rng.choice(len(points), keep_n, replace=False)}
    return [r for r in records if (r.label.x, r.label.y) in keep]


def train_pipeline(records: Sequence[FingerprintRecord], cfg: ExperimentConfig, n: int):
    """Subsample, hold out validation, augment, fit the normalizer, train.

    Returns (model, normalizer). Augmented copies are made only from the
    training side of the validation split so they never leak into it.
    """
    records = [r for r in records if not r.augmented]
    if not records:
        raise ValueError("no training records")
    records = thin_reference_points(records, cfg.reference_density, cfg.seed)
    rng = np.random.default_rng(derive_seed(cfg.seed, 303))
    if cfg.train_fraction < 1.0:
        keep = max(2, int(round(cfg.train_fraction * len(records))))
        records = [records[i] for i in sorted(rng.choice(len(records), keep, replace=False))]
    mcfg = model_config(cfg, n)
    order = rng.permutation(len(records))
    n_val = min(max(1, int(round(mcfg.validation_fraction * len(records)))), len(records) - 1)
    if len(records) < 2:
        raise ValueError("need at least two training records")
    val = [records[i] for i in sorted(order[:n_val])]
    fit = [records[i] for i in sorted(order[n_val:])]
    augmented = []
    for i, r in enumerate(fit):
        augmented += augment(r, cfg.aug_sigma_ns, cfg.aug_copies, derive_seed(cfg.seed, 404, i))
    fit_all = fit + augmented
    nz = fit_normalizer(fit_all)
    x, y = to_arrays(fit_all)
    xv, yv = to_arrays(val)
    model = init_model(mcfg)
    model = train(model, nz.transform(x), y, mcfg, nz.transform(xv), yv)
    return model, nz


# ---- online stage -------------------------------------------------------------------

@dataclass
class EvalReport:
    median_error: float
    mean_error: float
    percentiles: dict[str, float]
    cdf: list[tuple[float, float]]
    count: int
    methods: dict[str, dict] = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def summary(self) -> dict:
        out = {
            "median_error": self.median_error, "mean_error": self.mean_error,
            "percentiles": self.percentiles, "count": self.count,
        }
        if self.methods:
            out["methods"] = self.methods
        out.update(self.extra)
        return out


def error_report(errors: Sequence[float]) -> EvalReport:
    e = np.sort(np.asarray(errors, dtype=float))
    if len(e) == 0:
        raise ValueError("no errors to report")
    m = len(e)
    cdf = [(float(v), (i + 1) / m) for i, v in enumerate(e)]
    pct = {str(q): float(np.percentile(e, q)) for q in (25, 50, 75, 90)}
    return EvalReport(float(np.median(e)), float(e.mean()), pct, cdf, m)


def group_windows(scans: Sequence[ScanRecord], v: int) -> list[list[int]]:
    """Indices of consecutive same-point scans, cut into windows of ``v``.

    A trailing partial window is kept only when it is the point's only window.
    """
    if v < 1:
        raise ValueError("window size must be >= 1")
    groups, cur = [], []
    for i, s in enumerate(scans):
        if cur and scans[cur[-1]].point != s.point:
            groups.append(cur)
            cur = []
        cur.append(i)
    if cur:
        groups.append(cur)
    windows = []
    for g in groups:
        full = [g[j:j + v] for j in range(0, len(g) - v + 1, v)]
        windows += full if full else [g]
    return windows


def windowed_errors(estimates: np.ndarray, scans: Sequence[ScanRecord], v: int) -> list[float]:
    errors = []
    for w in group_windows(scans, v):
        pts = [Point2D(float(estimates[i, 0]), float(estimates[i, 1])) for i in w]
        est = smooth(pts).smoothed if len(pts) > 1 else pts[0]
        errors.append(distance(est, scans[w[0]].point))
    return errors


def fingerprint_estimates(model: TrainedModel, nz: Normalizer, scans, layout, drop: Sequence[int] = ()) -> np.ndarray:
    if model.config.input_size != layout.n:
        raise ValueError(f"model expects {model.config.input_size} responders, layout has {layout.n}")
    x, _ = to_arrays(to_fingerprints(scans, layout, drop))
    return predict(model, nz.transform(x))


def multilateration_estimates(scans, layout) -> tuple[np.ndarray, dict]:
    """Per-scan solver output; unusable scans fall back to the responder centroid."""
    out = np.empty((len(scans), 2))
    stats = {"underdetermined": 0, "not_converged": 0}
    fallback = tuple(layout.centroid())
    for i, s in enumerate(scans):
        ms = [compute_tdoa(o) for o in s.obs if not o.dropped]
        try:
            est = multilaterate(ms, layout)
        except Underdetermined:
            stats["underdetermined"] += 1
            out[i] = fallback
            continue
        if not est.converged:
            stats["not_converged"] += 1
        out[i] = tuple(est.point)
    return out, stats


def evaluate(model, nz, scans, layout, v: int, drop: Sequence[int] = ()) -> EvalReport:
    est = fingerprint_estimates(model, nz, scans, layout, drop)
    rep = error_report(windowed_errors(est, scans, v))
    rep.extra = {"window": v, "median_error_v1": float(np.median(windowed_errors(est, scans, 1)))}
    return rep


def compare(model, nz, scans, layout, v: int) -> EvalReport:
    """Fingerprinting vs multilateration on the same scans, same smoothing window."""
    fp = fingerprint_estimates(model, nz, scans, layout)
    ml, stats = multilateration_estimates(scans, layout)
    fp_report = error_report(windowed_errors(fp, scans, v))
    ml_report = error_report(windowed_errors(ml, scans, v))
    fp_v1 = float(np.median(windowed_errors(fp, scans, 1)))
    ml_v1 = float(np.median(windowed_errors(ml, scans, 1)))
    methods = {
        "fingerprint": {**fp_report.summary(), "median_error_v1": fp_v1},
        "multilateration": {**ml_report.summary(), "median_error_v1": ml_v1, **stats},
    }
    rep = fp_report
    rep.methods = methods
    ratio = ml_report.median_error / fp_report.median_error if fp_report.median_error > 0 else float("inf")
    rep.extra = {"window": v, "ratio": ratio}
    rep.extra["cdfs"] = {"fingerprint": fp_report.cdf, "multilateration": ml_report.cdf}
    return rep


# ---- attacks ------------------------------------------------------------------------

def attack_points(layout: StationLayout, count: int, seed: int) -> list[Point2D]:
    rng = np.random.default_rng(derive_seed(seed, 505))
    b = layout.bounds
    xy = rng.uniform([b.x0, b.y0], [b.x1, b.y1], size=(count, 2))
    return [Point2D(float(x), float(y)) for x, y in xy]


def attack_demo(cfg: ExperimentConfig, scenario: AttackScenario, model=None, nz=None, points: int = 10) -> dict:
    """Paired clean/attacked runs on identical seeds."""
    layout = build_layout(cfg)
    unknown = scenario.target_responders - set(layout.responder_ids)
    if unknown:
        raise ValueError(f"attack targets not in layout: {sorted(unknown)}")
    session, channel, clocks = build_session(cfg), build_channel(cfg), build_clocks(cfg)
    a = scenario.t1_offset if scenario.kind == "ftm-payload-spoof" else 0.0
    b = scenario.t4_offset
    c = 3e8
    dist_shift, lam_shift, logs = [], [], []
    same_features, digests = True, []
    same_estimates = True
    for k, p in enumerate(attack_points(layout, points, cfg.seed)):
        seed = derive_seed(cfg.seed, 606, k)
        clean = run_scan(layout, p, session, channel, clocks, seed=seed)
        hit = apply_attack(clean, scenario)
        logs += [bu.frame_log for bu, _ in clean] + [bu.frame_log for bu, _ in hit]
        for (cb, co), (hb, ho) in zip(clean, hit):
            if hb.responder_id not in scenario.target_responders:
                continue
            dist_shift.append(active_distance(active_rtt(hb)) - active_distance(active_rtt(cb)))
            if not co.dropped:
                lam_shift.append(compute_tdoa(ho).lambda_rtt - compute_tdoa(co).lambda_rtt)
        f_clean = build_feature_vector([o for _, o in clean], layout)
        f_hit = build_feature_vector([o for _, o in hit], layout)
        digests.append(f_clean.digest())
        same_features &= f_clean.digest() == f_hit.digest()
        if model is not None:
            e_clean = predict(model, nz.transform(f_clean.values))
            e_hit = predict(model, nz.transform(f_hit.values))
            same_estimates &= bool(np.array_equal(e_clean, e_hit))
    report = {
        "scenario": scenario.to_json(),
        "points": points,
        "active_distance_shift_m": float(np.mean(dist_shift)) if dist_shift else 0.0,
        "expected_active_distance_shift_m": c * (b - a) / 2,
        "lambda_rtt_shift_m": float(np.mean(lam_shift)) if lam_shift else 0.0,
        "expected_lambda_rtt_shift_m": c * (a - b),
        "fingerprint_features_equal": bool(same_features),
        "fingerprint_digest": digests[0] if digests else None,
        "passive_frames": assert_passive_silence(logs)["passive_frames"],
    }
    if model is not None:
        report["location_estimates_equal"] = bool(same_estimates)
    return report


# ---- sweeps -------------------------------------------------------------------------

def _parse_value(parameter: str, raw):
    if parameter in ("hidden_layers", "n_responders", "initiator_index", "v"):
        return int(raw)
    return float(raw)


def sweep(cfg: ExperimentConfig, parameter: str, values: Sequence) -> list[tuple[float, float]]:
    """(value, median error) per sweep value; every run uses the same seed."""
    if parameter not in SWEEP_PARAMETERS:
        raise ValueError(f"unknown sweep parameter {parameter!r}; choose from {', '.join(SWEEP_PARAMETERS)}")
    values = [_parse_value(parameter, v) for v in values]
    layout = build_layout(cfg)
    rows = []
    if parameter == "initiator_index":
        for j in values:
            lay = layout.with_initiator(j)
            tr, te = generate(cfg, lay)
            model, nz = train_pipeline(to_fingerprints(tr, lay), cfg, lay.n)
            rows.append((j, evaluate(model, nz, te, lay, cfg.window).median_error))
        return rows

    tr, te = generate(cfg, layout)
    train_fp = to_fingerprints(tr, layout)
    if parameter == "v":
        model, nz = train_pipeline(train_fp, cfg, layout.n)
        return [(v, evaluate(model, nz, te, layout, v).median_error) for v in values]

    for val in values:
        run = cfg
        drop: list[int] = []
        if parameter == "hidden_layers":
            run = cfg.replace(model={**cfg.model, "hidden_layers": val})
        elif parameter == "dropout":
            run = cfg.replace(model={**cfg.model, "dropout_rate": val})
        elif parameter == "learning_rate":
            run = cfg.replace(model={**cfg.model, "learning_rate": val})
        elif parameter == "train_fraction":
            run = cfg.replace(train_fraction=val)
        elif parameter == "reference_density":
            run = cfg.replace(reference_density=val)
        elif parameter == "n_responders":
            if not 1 <= val <= layout.n:
                raise ValueError(f"n_responders must lie in 1..{layout.n}")
            rng = np.random.default_rng(derive_seed(cfg.seed, 707, val))
            drop = sorted(rng.choice(layout.n, layout.n - val, replace=False).tolist())
        fp = to_fingerprints(tr, layout, drop) if drop else train_fp
        model, nz = train_pipeline(fp, run, layout.n)
        rows.append((val, evaluate(model, nz, te, layout, run.window, drop).median_error))
    return rows
