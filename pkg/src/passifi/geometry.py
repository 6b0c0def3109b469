"""Planar geometry, station layouts and time-of-flight arithmetic."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

SPEED_OF_LIGHT = 3e8


@dataclass(frozen=True)
class Point2D:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"non-finite coordinates ({self.x}, {self.y})")

    def __iter__(self):
        yield self.x
        yield self.y

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=float)


@dataclass(frozen=True)
class PhysicalConstants:
    c: float = SPEED_OF_LIGHT

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError("propagation speed must be positive")


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle [x0, x1] x [y0, y1]."""

    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self):
        if self.x1 < self.x0 or self.y1 < self.y0:
            raise ValueError(f"degenerate rectangle {self}")

    @property
    def width(self) -> float:
        return self.x1 - self.x0

    @property
    def height(self) -> float:
        return self.y1 - self.y0

    def contains(self, p: Point2D) -> bool:
        return self.x0 <= p.x <= self.x1 and self.y0 <= p.y <= self.y1


@dataclass(frozen=True)
class Station:
    id: str
    pos: Point2D


@dataclass(frozen=True)
class StationLayout:
    """Responders (in feature order), one initiator, and the bounding area.

    The passive station is not part of the layout: it is wherever the user is.
    """

    responders: tuple[Station, ...]
    initiator: Station
    bounds: Rect

    def __post_init__(self):
        object.__setattr__(self, "responders", tuple(self.responders))
        if not self.responders:
            raise ValueError("layout needs at least one responder")
        ids = [s.id for s in self.responders] + [self.initiator.id]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate station ids in {ids}")
        for s in (*self.responders, self.initiator):
            if not self.bounds.contains(s.pos):
                raise ValueError(f"station {s.id} at {tuple(s.pos)} lies outside bounds")

    @property
    def n(self) -> int:
        return len(self.responders)

    @property
    def responder_ids(self) -> list[str]:
        return [s.id for s in self.responders]

    def responder(self, station_id: str) -> Station:
        for s in self.responders:
            if s.id == station_id:
                return s
        raise KeyError(f"unknown responder {station_id!r}")

    def responder_array(self) -> np.ndarray:
        return np.array([[s.pos.x, s.pos.y] for s in self.responders], dtype=float)

    def centroid(self) -> Point2D:
        xy = self.responder_array().mean(axis=0)
        return Point2D(float(xy[0]), float(xy[1]))

    def with_initiator(self, responder_index: int) -> StationLayout:
        """Swap roles: responder ``responder_index`` becomes the initiator.

        The old initiator position takes the vacated responder slot (and id),
        so the feature length stays ``n``.
        """
        old = self.responders[responder_index]
        responders = list(self.responders)
        responders[responder_index] = Station(old.id, self.initiator.pos)
        return StationLayout(tuple(responders), Station(self.initiator.id, old.pos), self.bounds)

    def to_json(self) -> dict:
        return {
            "bounds": {"w": self.bounds.width, "h": self.bounds.height},
            "initiator": {"id": self.initiator.id, "x": self.initiator.pos.x, "y": self.initiator.pos.y},
            "responders": [{"id": s.id, "x": s.pos.x, "y": s.pos.y} for s in self.responders],
        }

    @classmethod
    def from_json(cls, obj: dict) -> StationLayout:
        try:
            b = obj["bounds"]
            bounds = Rect(float(b.get("x0", 0.0)), float(b.get("y0", 0.0)),
                          float(b.get("x0", 0.0)) + float(b["w"]), float(b.get("y0", 0.0)) + float(b["h"]))
            ini = obj["initiator"]
            initiator = Station(str(ini["id"]), Point2D(float(ini["x"]), float(ini["y"])))
            responders = tuple(
                Station(str(r["id"]), Point2D(float(r["x"]), float(r["y"]))) for r in obj["responders"]
            )
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed layout: {exc!r}") from exc
        return cls(responders, initiator, bounds)


def load_layout(path) -> StationLayout:
    with open(path) as f:
        return StationLayout.from_json(json.load(f))


def save_layout(layout: StationLayout, path) -> None:
    Path(path).write_text(json.dumps(layout.to_json(), indent=2) + "\n")


def distance(a: Point2D, b: Point2D) -> float:
    return math.hypot(a.x - b.x, a.y - b.y)


def time_of_flight(a: Point2D, b: Point2D, k: PhysicalConstants = PhysicalConstants()) -> float:
    return distance(a, b) / k.c


def segment_crosses_rect(a: Point2D, b: Point2D, r: Rect) -> bool:
    """True if the closed segment a-b touches the interior or boundary of ``r``.

    Liang-Barsky clipping of the segment against the rectangle.
    """
    dx, dy = b.x - a.x, b.y - a.y
    t0, t1 = 0.0, 1.0
    for p, q in ((-dx, a.x - r.x0), (dx, r.x1 - a.x), (-dy, a.y - r.y0), (dy, r.y1 - a.y)):
        if p == 0.0:
            if q < 0.0:
                return False
            continue
        t = q / p
        if p < 0.0:
            if t > t1:
                return False
            t0 = max(t0, t)
        else:
            if t < t0:
                return False
            t1 = min(t1, t)
    return t0 <= t1
