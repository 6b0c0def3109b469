"""Default synthetic testbed: ~50 m x 30 m office, 11 responders, a concrete core.

The initiator sits close to the responders' center of mass, just east of a
thick central wall. Links crossing the wall pick up a fixed excess path of
3-10 m depending on the responder.
"""

from __future__ import annotations

import numpy as np

from .ftm import ChannelModel, SessionConfig
from .geometry import Point2D, Rect, Station, StationLayout

BOUNDS = Rect(0.0, 0.0, 50.0, 30.0)
WALL = Rect(19.0, 11.0, 22.0, 20.0)

RESPONDERS = (
    ("AP-1", 6.0, 5.0), ("AP-2", 25.0, 4.0), ("AP-3", 44.0, 5.0), ("AP-4", 6.0, 25.0),
    ("AP-5", 25.0, 26.0), ("AP-6", 44.0, 25.0), ("AP-7", 13.0, 15.0), ("AP-8", 37.0, 15.0),
    ("AP-9", 16.0, 9.0), ("AP-10", 35.0, 21.0), ("AP-11", 30.0, 8.0),
)
INITIATOR = ("I", 27.0, 16.0)

NLOS_EXCESS_M = {
    "AP-1": 6.6, "AP-2": 9.7, "AP-3": 4.0, "AP-4": 9.6, "AP-5": 5.2, "AP-6": 6.0,
    "AP-7": 8.8, "AP-8": 5.9, "AP-9": 6.8, "AP-10": 3.2, "AP-11": 8.3,
}


def default_layout() -> StationLayout:
    return StationLayout(
        tuple(Station(sid, Point2D(x, y)) for sid, x, y in RESPONDERS),
        Station(INITIATOR[0], Point2D(INITIATOR[1], INITIATOR[2])),
        BOUNDS,
    )


def default_channel(jitter: float = 1e-9, drop_probability: float = 0.05, nlos: bool = True) -> ChannelModel:
    return ChannelModel(
        los_jitter_sigma=jitter,
        nlos_links=dict(NLOS_EXCESS_M) if nlos else {},
        walls=(WALL,) if nlos else (),
        drop_probability=drop_probability,
    )


def default_session() -> SessionConfig:
    return SessionConfig()


def reference_grid(bounds: Rect, spacing: float) -> list[Point2D]:
    """Cell centers of a uniform grid over ``bounds`` (x-major order)."""
    if not spacing > 0:
        raise ValueError("grid spacing must be positive")
    nx = int(np.floor(bounds.width / spacing + 1e-9))
    ny = int(np.floor(bounds.height / spacing + 1e-9))
    return [
        Point2D(bounds.x0 + (i + 0.5) * spacing, bounds.y0 + (j + 0.5) * spacing)
        for i in range(nx) for j in range(ny)
    ]
