"""Frame-level simulation of 802.11mc FTM bursts with a passive listener.

Each burst runs N timestamped FTM/ACK exchanges between one responder and
the initiator. A passive station at ``passive_at`` overhears both frames of
every exchange and records their arrival times on its own clock; it never
transmits.

Times are float seconds internally; the scan JSONL format stores nanoseconds.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .geometry import (
    PhysicalConstants,
    Point2D,
    Rect,
    StationLayout,
    distance,
    segment_crosses_rect,
)

PASSIVE_ID = "passive"
JITTER_TRUNCATION = 5.0

FRAME_FTM_REQUEST = "ftm-request"
FRAME_FTM = "ftm"
FRAME_ACK = "ack"


@dataclass(frozen=True)
class ChannelModel:
    """Timestamp jitter, NLoS excess path and scan-level drops.

    ``nlos_links`` maps a station id to an excess path length (meters). For a
    responder it applies to its link with the initiator and with the passive
    station; for the initiator it applies to the initiator-passive link. When
    ``walls`` is non-empty the excess only applies to links whose straight
    segment crosses a wall, otherwise to every link of that station.
    """

    los_jitter_sigma: float = 0.0
    nlos_links: Mapping[str, float] = field(default_factory=dict)
    walls: tuple[Rect, ...] = ()
    drop_probability: float = 0.0

    def __post_init__(self):
        if self.los_jitter_sigma < 0:
            raise ValueError("jitter sigma must be >= 0")
        if any(v < 0 for v in self.nlos_links.values()):
            raise ValueError("NLoS excess path must be >= 0")
        if not 0.0 <= self.drop_probability <= 1.0:
            raise ValueError("drop_probability must lie in [0, 1]")
        object.__setattr__(self, "walls", tuple(self.walls))

    def excess(self, station_id: str, a: Point2D, b: Point2D) -> float:
        extra = self.nlos_links.get(station_id, 0.0)
        if extra == 0.0:
            return 0.0
        if self.walls and not any(segment_crosses_rect(a, b, w) for w in self.walls):
            return 0.0
        return extra


@dataclass(frozen=True)
class ClockModel:
    """Per-station local clock: local = true * (1 + drift_ppm * 1e-6) + offset."""

    offsets: Mapping[str, float] = field(default_factory=dict)
    drift_ppm: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        for sid, d in self.drift_ppm.items():
            if not abs(d) < 100:
                raise ValueError(f"drift of {sid} must be below 100 ppm in magnitude")

    def local(self, station_id: str, t):
        drift = self.drift_ppm.get(station_id, 0.0)
        offset = self.offsets.get(station_id, 0.0)
        if drift:
            t = t * (1.0 + drift * 1e-6)
        return t + offset


@dataclass(frozen=True)
class SessionConfig:
    burst_size: int = 8
    delta: float = 10e-9
    delta_jitter_sigma: float = 0.0
    exchange_spacing: float = 100e-6

    def __post_init__(self):
        if self.burst_size < 1:
            raise ValueError("burst_size must be >= 1")
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if self.delta_jitter_sigma < 0 or not self.exchange_spacing > 0:
            raise ValueError("invalid session timing")

    @property
    def burst_period(self) -> float:
        return (self.burst_size + 2) * self.exchange_spacing


@dataclass(frozen=True)
class Frame:
    sender: str
    kind: str
    time: float


@dataclass(frozen=True)
class FtmBurstRecord:
    """Active-side record of one burst.

    t1/t4 are on the responder clock, t2/t3 on the initiator clock. The
    payload copies are what the next FTM frame carries, i.e. what the
    initiator (and any listener) reads for t1/t4.
    """

    responder_id: str
    t1: np.ndarray
    t2: np.ndarray
    t3: np.ndarray
    t4: np.ndarray
    payload_t1: np.ndarray
    payload_t4: np.ndarray
    frame_log: tuple[Frame, ...]


@dataclass(frozen=True)
class PassiveObservation:
    responder_id: str
    t1_prime: np.ndarray
    t4_prime: np.ndarray
    overheard_payload_t1: np.ndarray
    overheard_payload_t4: np.ndarray
    dropped: bool = False

    @classmethod
    def unheard(cls, responder_id: str) -> PassiveObservation:
        empty = np.empty(0)
        return cls(responder_id, empty, empty, empty, empty, dropped=True)


# Callbacks receiving every frame log produced by run_burst (used for audits).
_frame_log_listeners: list[Callable[[tuple[Frame, ...]], None]] = []


def add_frame_log_listener(fn: Callable[[tuple[Frame, ...]], None]) -> None:
    _frame_log_listeners.append(fn)


def remove_frame_log_listener(fn: Callable[[tuple[Frame, ...]], None]) -> None:
    _frame_log_listeners.remove(fn)


def _jitter(rng: np.random.Generator, sigma: float, size: int) -> np.ndarray:
    if sigma == 0.0:
        return np.zeros(size)
    z = np.clip(rng.standard_normal(size), -JITTER_TRUNCATION, JITTER_TRUNCATION)
    return sigma * z


def run_burst(
    layout: StationLayout,
    passive_at: Point2D,
    responder_id: str,
    session: SessionConfig = SessionConfig(),
    channel: ChannelModel = ChannelModel(),
    clocks: ClockModel = ClockModel(),
    seed=0,
    start: float = 0.0,
    k: PhysicalConstants = PhysicalConstants(),
) -> tuple[FtmBurstRecord, PassiveObservation]:
    """Simulate one FTM burst between ``responder_id`` and the initiator."""
    if not layout.bounds.contains(passive_at):
        raise ValueError(f"passive station {tuple(passive_at)} lies outside layout bounds")
    resp = layout.responder(responder_id)
    ini = layout.initiator
    rng = np.random.default_rng(seed)
    dropped = bool(rng.random() < channel.drop_probability)

    r, i, p = resp.pos, ini.pos, passive_at
    t_ri = (distance(r, i) + channel.excess(resp.id, r, i)) / k.c
    t_rp = (distance(r, p) + channel.excess(resp.id, r, p)) / k.c
    t_ip = (distance(i, p) + channel.excess(ini.id, i, p)) / k.c

    n = session.burst_size
    sigma = channel.los_jitter_sigma
    # Exchange n+1 only carries the payload of exchange n; it is logged but not measured.
    t1_true = start + session.exchange_spacing * np.arange(1, n + 2)
    t2_true = t1_true + t_ri
    delta = session.delta + _jitter(rng, session.delta_jitter_sigma, n + 1)
    t3_true = t2_true + np.maximum(delta, 0.0)
    t4_true = t3_true + t_ri
    t1p_true = t1_true + t_rp
    t4p_true = t3_true + t_ip

    m = slice(0, n)
    # One independent recording error per timestamping event: t1, t2, t3, t4, t1', t4'.
    e = _jitter(rng, sigma, 6 * n).reshape(6, n)
    t1 = clocks.local(resp.id, t1_true[m] + e[0])
    t2 = clocks.local(ini.id, t2_true[m] + e[1])
    t3 = clocks.local(ini.id, t3_true[m] + e[2])
    t4 = clocks.local(resp.id, t4_true[m] + e[3])
    t1p = clocks.local(PASSIVE_ID, t1p_true[m] + e[4])
    t4p = clocks.local(PASSIVE_ID, t4p_true[m] + e[5])

    req = start
    frames = [Frame(ini.id, FRAME_FTM_REQUEST, req), Frame(resp.id, FRAME_ACK, req + t_ri + session.delta)]
    for j in range(n + 1):
        frames.append(Frame(resp.id, FRAME_FTM, float(t1_true[j])))
        frames.append(Frame(ini.id, FRAME_ACK, float(t3_true[j])))
    frame_log = tuple(frames)
    for fn in _frame_log_listeners:
        fn(frame_log)

    burst = FtmBurstRecord(resp.id, t1, t2, t3, t4, t1.copy(), t4.copy(), frame_log)
    if dropped:
        return burst, PassiveObservation.unheard(resp.id)
    obs = PassiveObservation(resp.id, t1p, t4p, t1.copy(), t4.copy())
    return burst, obs


def active_rtt(burst: FtmBurstRecord) -> float:
    """Burst-averaged round trip time as the initiator computes it."""
    if len(burst.t1) == 0:
        raise ValueError("empty burst")
    return float(np.mean((burst.payload_t4 - burst.payload_t1) - (burst.t3 - burst.t2)))


def active_distance(avg_rtt: float, k: PhysicalConstants = PhysicalConstants()) -> float:
    return 0.5 * avg_rtt * k.c


def run_scan(
    layout: StationLayout,
    passive_at: Point2D,
    session: SessionConfig = SessionConfig(),
    channel: ChannelModel = ChannelModel(),
    clocks: ClockModel = ClockModel(),
    seed: int = 0,
    k: PhysicalConstants = PhysicalConstants(),
) -> list[tuple[FtmBurstRecord, PassiveObservation]]:
    """One burst per responder, in layout order, with per-responder derived seeds."""
    return [
        run_burst(layout, passive_at, s.id, session, channel, clocks,
                  seed=(int(seed), j), start=j * session.burst_period, k=k)
        for j, s in enumerate(layout.responders)
    ]


@dataclass(frozen=True)
class ScanRecord:
    """Passive-side view of one scan at a reference point."""

    point: Point2D
    obs: tuple[PassiveObservation, ...]
    seed: int

    @classmethod
    def from_scan(cls, point: Point2D, results, seed: int) -> ScanRecord:
        return cls(point, tuple(o for _, o in results), int(seed))


def _ns(a: np.ndarray) -> list[float]:
    return [float(v) for v in np.asarray(a) * 1e9]


def _s(ns: Sequence[float]) -> np.ndarray:
    return np.asarray(ns, dtype=float) / 1e9


def scan_to_json(rec: ScanRecord) -> dict:
    obs = []
    for o in rec.obs:
        if o.dropped:
            obs.append({"ap": o.responder_id, "dropped": True})
        else:
            obs.append({
                "ap": o.responder_id,
                "t1p_ns": _ns(o.t1_prime),
                "t4p_ns": _ns(o.t4_prime),
                "payload_t1_ns": _ns(o.overheard_payload_t1),
                "payload_t4_ns": _ns(o.overheard_payload_t4),
            })
    return {"point": {"x": rec.point.x, "y": rec.point.y}, "obs": obs, "seed": rec.seed}


def scan_from_json(obj: dict) -> ScanRecord:
    obs = []
    for o in obj["obs"]:
        if o.get("dropped"):
            obs.append(PassiveObservation.unheard(str(o["ap"])))
        else:
            obs.append(PassiveObservation(
                str(o["ap"]), _s(o["t1p_ns"]), _s(o["t4p_ns"]),
                _s(o["payload_t1_ns"]), _s(o["payload_t4_ns"]),
            ))
    pt = obj["point"]
    return ScanRecord(Point2D(float(pt["x"]), float(pt["y"])), tuple(obs), int(obj["seed"]))


def write_scans(path, scans: Iterable[ScanRecord]) -> None:
    with open(path, "w") as f:
        for rec in scans:
            f.write(json.dumps(scan_to_json(rec)) + "\n")


def read_scans(path) -> list[ScanRecord]:
    out = []
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                out.append(scan_from_json(json.loads(line)))
            except (ValueError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}: line {lineno}: malformed scan record ({exc})") from exc
    return out
