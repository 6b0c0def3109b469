"""TDoA fingerprints: fixed-length feature vectors, normalization, augmentation.

Feature values are nanoseconds. Unheard responders get ``FILL_NS``.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .ftm import PassiveObservation
from .geometry import Point2D, StationLayout
from .tdoa import compute_tdoa

FILL_NS = 200.0


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    mask: np.ndarray  # True where the responder was heard

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        object.__setattr__(self, "mask", np.asarray(self.mask, dtype=bool))
        if self.values.shape != self.mask.shape or self.values.ndim != 1:
            raise ValueError("values and mask must be 1-D and of equal length")

    def __len__(self):
        return len(self.values)

    def __eq__(self, other):
        if not isinstance(other, FeatureVector):
            return NotImplemented
        return np.array_equal(self.values, other.values) and np.array_equal(self.mask, other.mask)

    def digest(self) -> str:
        h = hashlib.sha256(self.values.astype("<f8").tobytes())
        h.update(self.mask.astype(np.uint8).tobytes())
        return h.hexdigest()


@dataclass(frozen=True)
class FingerprintRecord:
    features: FeatureVector
    label: Point2D
    augmented: bool = False


def build_feature_vector(observations: Iterable[PassiveObservation], layout: StationLayout) -> FeatureVector:
    """Mean TDoA per responder, in layout order; unheard entries take the fill value."""
    by_id = {o.responder_id: o for o in observations}
    values = np.full(layout.n, FILL_NS)
    mask = np.zeros(layout.n, dtype=bool)
    for j, sid in enumerate(layout.responder_ids):
        o = by_id.get(sid)
        if o is None or o.dropped:
            continue
        values[j] = compute_tdoa(o).tdoa * 1e9
        mask[j] = True
    return FeatureVector(values, mask)


def drop_responders(fv: FeatureVector, indices: Sequence[int]) -> FeatureVector:
    values, mask = fv.values.copy(), fv.mask.copy()
    values[list(indices)] = FILL_NS
    mask[list(indices)] = False
    return FeatureVector(values, mask)


@dataclass(frozen=True)
class Normalizer:
    mins: np.ndarray
    maxs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mins", np.asarray(self.mins, dtype=float))
        object.__setattr__(self, "maxs", np.asarray(self.maxs, dtype=float))
        if self.mins.shape != self.maxs.shape or np.any(self.maxs < self.mins):
            raise ValueError("normalizer needs max >= min per feature")

    def __len__(self):
        return len(self.mins)

    def transform(self, values: np.ndarray) -> np.ndarray:
        """Row-wise scaling of raw values (shape (..., n)) into [0, 1]."""
        values = np.asarray(values, dtype=float)
        if values.shape[-1] != len(self):
            raise ValueError(f"expected {len(self)} features, got {values.shape[-1]}")
        span = self.maxs - self.mins
        flat = span == 0
        out = np.clip((values - self.mins) / np.where(flat, 1.0, span), 0.0, 1.0)
        return np.where(flat, 0.5, out)


def fit_normalizer(records: Sequence[FingerprintRecord]) -> Normalizer:
    if not records:
        raise ValueError("cannot fit a normalizer on an empty set")
    x = np.stack([r.features.values for r in records])
    return Normalizer(x.min(axis=0), x.max(axis=0))


def normalize(fv: FeatureVector, nz: Normalizer) -> FeatureVector:
    return FeatureVector(nz.transform(fv.values), fv.mask)


def augment(record: FingerprintRecord, sigma: float, copies: int, seed) -> list[FingerprintRecord]:
    """Copies of ``record`` with white Gaussian noise (ns) on heard entries only."""
    if sigma < 0 or copies < 0:
        raise ValueError("sigma and copies must be non-negative")
    rng = np.random.default_rng(seed)
    fv = record.features
    out = []
    for _ in range(copies):
        noise = rng.normal(0.0, sigma, len(fv)) if sigma > 0 else np.zeros(len(fv))
        values = np.where(fv.mask, fv.values + noise, fv.values)
        out.append(FingerprintRecord(FeatureVector(values, fv.mask), record.label, augmented=True))
    return out


def to_arrays(records: Sequence[FingerprintRecord]) -> tuple[np.ndarray, np.ndarray]:
    """Raw feature matrix (m, n) and label matrix (m, 2)."""
    if not records:
        return np.empty((0, 0)), np.empty((0, 2))
    x = np.stack([r.features.values for r in records])
    y = np.array([[r.label.x, r.label.y] for r in records], dtype=float)
    return x, y


def record_to_json(rec: FingerprintRecord) -> dict:
    return {
        "x": rec.label.x,
        "y": rec.label.y,
        "tdoa_ns": [float(v) for v in rec.features.values],
        "mask": [bool(v) for v in rec.features.mask],
        "aug": bool(rec.augmented),
    }


def record_from_json(obj: dict) -> FingerprintRecord:
    values, mask = obj["tdoa_ns"], obj["mask"]
    if len(values) != len(mask):
        raise ValueError("tdoa_ns and mask lengths differ")
    fv = FeatureVector(np.array(values, dtype=float), np.array(mask, dtype=bool))
    return FingerprintRecord(fv, Point2D(float(obj["x"]), float(obj["y"])), bool(obj.get("aug", False)))


def write_dataset(path, records: Iterable[FingerprintRecord]) -> None:
    with open(path, "w") as f:
        for rec in records:
            f.write(json.dumps(record_to_json(rec)) + "\n")


def read_dataset(path) -> list[FingerprintRecord]:
    out = []
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                out.append(record_from_json(json.loads(line)))
            except (ValueError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}: line {lineno}: malformed fingerprint record ({exc})") from exc
    return out
