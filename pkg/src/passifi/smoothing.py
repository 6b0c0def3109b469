"""Outlier rejection and temporal averaging over a window of location estimates."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .geometry import Point2D

DEFAULT_WINDOW = 100


@dataclass(frozen=True)
class EstimateWindow:
    estimates: tuple[Point2D, ...]
    inter_distances: tuple[float, ...]
    survivors: int
    smoothed: Point2D


def _xy(estimates) -> np.ndarray:
    return np.array([(p.x, p.y) for p in estimates], dtype=float).reshape(-1, 2)


def inter_location_distances(estimates: Sequence[Point2D]) -> np.ndarray:
    """Mean distance from each estimate to all the others."""
    v = len(estimates)
    if v < 2:
        raise ValueError("inter-location distances need at least two estimates")
    xy = _xy(estimates)
    diff = xy[:, None, :] - xy[None, :, :]
    pair = np.hypot(diff[..., 0], diff[..., 1])
    return pair.sum(axis=1) / (v - 1)


def _survivor_mask(estimates: Sequence[Point2D]) -> tuple[np.ndarray, np.ndarray]:
    if len(estimates) == 1:
        return np.zeros(1), np.ones(1, dtype=bool)
    d = inter_location_distances(estimates)
    return d, ~(d > d.mean())


def reject_outliers(estimates: Sequence[Point2D]) -> list[Point2D]:
    """Single pass: drop every estimate whose inter-location distance exceeds the mean."""
    if not estimates:
        raise ValueError("empty window")
    _, keep = _survivor_mask(estimates)
    return [p for p, k in zip(estimates, keep) if k]


def temporal_average(survivors: Sequence[Point2D]) -> Point2D:
    if not survivors:
        raise ValueError("cannot average an empty set of estimates")
    m = _xy(survivors).mean(axis=0)
    return Point2D(float(m[0]), float(m[1]))


def smooth(estimates: Sequence[Point2D]) -> EstimateWindow:
    if not estimates:
        raise ValueError("empty window")
    estimates = tuple(estimates)
    d, keep = _survivor_mask(estimates)
    survivors = [p for p, k in zip(estimates, keep) if k]
    return EstimateWindow(estimates, tuple(float(x) for x in d), len(survivors), temporal_average(survivors))
