"""FTM payload and ACK power spoofing applied to simulated bursts.

Attacks are record transformations: they rewrite what the responder records
or what the FTM frames carry, never the passive station's own arrival times.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import Iterable

import numpy as np

from .ftm import PASSIVE_ID, Frame, FtmBurstRecord, PassiveObservation

KINDS = ("none", "ftm-payload-spoof", "ack-power-spoof")


@dataclass(frozen=True)
class AttackScenario:
    kind: str = "none"
    t1_offset: float = 0.0
    t4_offset: float = 0.0
    target_responders: frozenset[str] = frozenset()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown attack kind {self.kind!r}")
        if not (np.isfinite(self.t1_offset) and np.isfinite(self.t4_offset)):
            raise ValueError("attack offsets must be finite")
        if self.kind == "none" and (self.t1_offset or self.t4_offset):
            raise ValueError("kind 'none' requires zero offsets")
        if self.kind == "ack-power-spoof" and self.t1_offset:
            raise ValueError("an ACK spoof can only move t4")
        object.__setattr__(self, "target_responders", frozenset(self.target_responders))

    def targets(self, responder_id: str) -> bool:
        return responder_id in self.target_responders

    @classmethod
    def from_json(cls, obj: dict) -> AttackScenario:
        try:
            return cls(
                kind=str(obj["kind"]),
                t1_offset=float(obj.get("t1_offset_ns", 0.0)) / 1e9,
                t4_offset=float(obj.get("t4_offset_ns", 0.0)) / 1e9,
                target_responders=frozenset(str(t) for t in obj.get("targets", [])),
            )
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed attack scenario: {exc!r}") from exc

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "t1_offset_ns": self.t1_offset * 1e9,
            "t4_offset_ns": self.t4_offset * 1e9,
            "targets": sorted(self.target_responders),
        }


def load_scenario(path) -> AttackScenario:
    with open(path) as f:
        return AttackScenario.from_json(json.load(f))


def spoof_ftm_payload(burst: FtmBurstRecord, obs: PassiveObservation, scenario: AttackScenario):
    """Falsify the t1/t4 values carried in FTM frames (initiator and listener copies)."""
    if scenario.kind != "ftm-payload-spoof":
        raise ValueError("scenario is not an FTM payload spoof")
    if not scenario.targets(burst.responder_id):
        return burst, obs
    a, b = scenario.t1_offset, scenario.t4_offset
    burst = replace(burst, payload_t1=burst.payload_t1 + a, payload_t4=burst.payload_t4 + b)
    if not obs.dropped:
        obs = replace(obs, overheard_payload_t1=obs.overheard_payload_t1 + a,
                      overheard_payload_t4=obs.overheard_payload_t4 + b)
    return burst, obs


def spoof_ack_power(burst: FtmBurstRecord, obs: PassiveObservation, scenario: AttackScenario):
    """The responder locks onto a stronger fake ACK, so its recorded t4 moves.

    The falsified t4 then travels in the next FTM frame, so the listener's
    overheard payload copy moves too; its own t1'/t4' arrival times do not.
    """
    if scenario.kind != "ack-power-spoof":
        raise ValueError("scenario is not an ACK power spoof")
    b = scenario.t4_offset
    if not scenario.targets(burst.responder_id) or b == 0.0:
        return burst, obs
    burst = replace(burst, t4=burst.t4 + b, payload_t4=burst.payload_t4 + b)
    if not obs.dropped:
        obs = replace(obs, overheard_payload_t4=obs.overheard_payload_t4 + b)
    return burst, obs


def apply_attack(scan, scenario: AttackScenario):
    """Apply ``scenario`` to a whole scan (list of (burst, observation) pairs)."""
    if scenario.kind == "none":
        return list(scan)
    fn = spoof_ftm_payload if scenario.kind == "ftm-payload-spoof" else spoof_ack_power
    return [fn(b, o, scenario) for b, o in scan]


def assert_passive_silence(frame_logs: Iterable[Iterable[Frame]], passive_id: str = PASSIVE_ID) -> dict:
    """Count frames sent by the passive station across ``frame_logs``."""
    count = sum(1 for log in frame_logs for fr in log if fr.sender == passive_id)
    return {"passive_frames": count}
