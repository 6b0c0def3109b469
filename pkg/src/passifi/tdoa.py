"""Passive TDoA measurements, the hyperbolic locus and multilateration.

A passive listener at P measures TDoA = t4' - t1' for each responder R. With
the payload gap t4 - t1 overheard from the next FTM frame,

    lambda_rtt = c * (TDoA - (t4 - t1))

places P on the hyperbola |P - I| - |P - R| = lambda_rtt + |R - I| with foci
at the initiator I and responder R.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .ftm import PassiveObservation
from .geometry import PhysicalConstants, Point2D, Rect, StationLayout

MAX_ITERATIONS = 100
STEP_TOLERANCE = 1e-6
_NORM_FLOOR = 1e-9


class UnheardResponder(ValueError):
    """The passive station did not overhear this responder's burst."""


class Underdetermined(ValueError):
    """Fewer than three usable hyperbolae."""


@dataclass(frozen=True)
class TdoaMeasurement:
    responder_id: str
    tdoa: float
    payload_gap: float | None = None
    lambda_rtt: float | None = None

    def __post_init__(self):
        if not np.isfinite(self.tdoa):
            raise ValueError("tdoa must be finite")
        if (self.payload_gap is None) != (self.lambda_rtt is None):
            raise ValueError("lambda_rtt is present exactly when payload_gap is")


@dataclass(frozen=True)
class LocationEstimate:
    point: Point2D
    residual_norm: float
    iterations: int
    converged: bool


def compute_tdoa(obs: PassiveObservation, k: PhysicalConstants = PhysicalConstants()) -> TdoaMeasurement:
    """Burst-averaged TDoA, plus the overheard payload gap when available."""
    if obs.dropped or len(obs.t1_prime) == 0:
        raise UnheardResponder(f"responder {obs.responder_id} unheard")
    tdoa = float(np.mean(obs.t4_prime - obs.t1_prime))
    if len(obs.overheard_payload_t1) == 0:
        return TdoaMeasurement(obs.responder_id, tdoa)
    gap = float(np.mean(obs.overheard_payload_t4 - obs.overheard_payload_t1))
    return TdoaMeasurement(obs.responder_id, tdoa, gap, k.c * (tdoa - gap))


def lambda_rtt(m: TdoaMeasurement, k: PhysicalConstants = PhysicalConstants()) -> float:
    if m.payload_gap is None:
        raise ValueError(f"measurement for {m.responder_id} has no payload gap")
    return k.c * (m.tdoa - m.payload_gap)


def hyperbolic_residual(candidate: Point2D, responder: Point2D, initiator: Point2D, lam: float) -> float:
    c, r, i = candidate.as_array(), responder.as_array(), initiator.as_array()
    return float((np.hypot(*(c - i)) - np.hypot(*(c - r))) - (lam + np.hypot(*(r - i))))


def _usable(measurements: Sequence[TdoaMeasurement], layout: StationLayout):
    use = [m for m in measurements if m.lambda_rtt is not None]
    if not use:
        return np.empty((0, 2)), np.empty(0)
    foci = np.array([tuple(layout.responder(m.responder_id).pos) for m in use], dtype=float)
    lam = np.array([m.lambda_rtt for m in use], dtype=float)
    return foci, lam


def _residuals(p: np.ndarray, foci: np.ndarray, ini: np.ndarray, offset: np.ndarray) -> np.ndarray:
    return (np.hypot(*(p - ini)) - np.hypot(foci[:, 0] - p[0], foci[:, 1] - p[1])) - offset


def multilaterate(
    measurements: Sequence[TdoaMeasurement],
    layout: StationLayout,
    init: Point2D | str = "centroid",
    max_iterations: int = MAX_ITERATIONS,
) -> LocationEstimate:
    """Levenberg-damped Gauss-Newton over the TDoA hyperbolae."""
    foci, lam = _usable(measurements, layout)
    if len(lam) < 3:
        raise Underdetermined(f"need >= 3 usable measurements, got {len(lam)}")
    ini = layout.initiator.pos.as_array()
    pts = np.vstack([foci, ini])
    if np.linalg.matrix_rank(pts - pts.mean(axis=0), tol=1e-9) < 2:
        raise ValueError("responders are collinear with the initiator")
    offset = lam + np.hypot(foci[:, 0] - ini[0], foci[:, 1] - ini[1])

    p = layout.centroid().as_array() if isinstance(init, str) else init.as_array()
    damping = 1e-3
    r = _residuals(p, foci, ini, offset)
    cost = float(r @ r)
    converged = False
    it = 0
    for it in range(1, max_iterations + 1):
        di = p - ini
        dr = p - foci
        ni = max(np.hypot(*di), _NORM_FLOOR)
        nr = np.maximum(np.hypot(dr[:, 0], dr[:, 1]), _NORM_FLOOR)
        jac = di / ni - dr / nr[:, None]
        jtj = jac.T @ jac
        g = jac.T @ r
        step = -np.linalg.solve(jtj + damping * np.eye(2), g)
        trial = p + step
        r_trial = _residuals(trial, foci, ini, offset)
        cost_trial = float(r_trial @ r_trial)
        if cost_trial < cost:
            p, r, cost = trial, r_trial, cost_trial
            damping = max(damping / 10.0, 1e-12)
        else:
            damping = min(damping * 10.0, 1e12)
        if np.hypot(*step) < STEP_TOLERANCE:
            converged = True
            break
    return LocationEstimate(Point2D(float(p[0]), float(p[1])), float(np.sqrt(cost)), it, converged)


def grid_oracle(
    measurements: Sequence[TdoaMeasurement],
    layout: StationLayout,
    bounds: Rect | None = None,
    resolution: float = 0.01,
) -> Point2D:
    """Exhaustive argmin of the summed squared residual on a regular grid.

    Grid nodes run from the lower-left corner of ``bounds`` in steps of
    ``resolution``. Ties go to the smallest x, then the smallest y.
    """
    if not resolution > 0:
        raise ValueError("resolution must be positive")
    foci, lam = _usable(measurements, layout)
    if len(lam) == 0:
        raise ValueError("grid oracle needs at least one usable measurement")
    b = bounds or layout.bounds
    ini = layout.initiator.pos.as_array()
    offset = lam + np.hypot(foci[:, 0] - ini[0], foci[:, 1] - ini[1])
    nx = int(np.floor(b.width / resolution + 1e-9)) + 1
    ny = int(np.floor(b.height / resolution + 1e-9)) + 1
    xs = b.x0 + resolution * np.arange(nx)
    ys = b.y0 + resolution * np.arange(ny)
    # float32 keeps ~1e-5 m of distance precision here, far below any useful resolution.
    f32 = np.float32
    ys32 = ys.astype(f32)
    dyi2 = (ys32 - f32(ini[1])) ** 2
    dyr2 = (ys32[None, :] - foci[:, 1, None].astype(f32)) ** 2  # (m, ny)
    fx = foci[:, 0].astype(f32)
    off = offset.astype(f32)

    best_cost, best = np.inf, (0, 0)
    chunk = max(1, 400_000 // ny)
    for start in range(0, nx, chunk):
        xc = xs[start:start + chunk].astype(f32)
        d_i = np.sqrt((xc[:, None] - f32(ini[0])) ** 2 + dyi2[None, :])  # (cx, ny)
        cost = np.zeros_like(d_i)
        tmp = np.empty_like(d_i)
        for j in range(len(lam)):
            np.subtract(xc[:, None], fx[j], out=tmp)
            np.square(tmp, out=tmp)
            tmp += dyr2[j][None, :]
            np.sqrt(tmp, out=tmp)
            np.subtract(d_i, tmp, out=tmp)
            tmp -= off[j]
            np.square(tmp, out=tmp)
            cost += tmp
        flat = int(np.argmin(cost))
        c = float(cost.flat[flat])
        if c < best_cost:
            best_cost = c
            best = (start + flat // ny, flat % ny)
    return Point2D(float(xs[best[0]]), float(ys[best[1]]))
