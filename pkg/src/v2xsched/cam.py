"""ETSI CAM generation rules and the per-vehicle packet arrival stream."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _kernels
from .mobility import GRID_MS, ConfigurationError, Kinematics, Trace

CAUSES = ("none", "time", "position", "heading", "speed")
CAUSE_CODE = {name: i for i, name in enumerate(CAUSES)}
# float slack on threshold comparisons, so 20 m/s x 0.2 s counts as 4 m on any grid offset
THRESHOLD_EPS = 1e-9


@dataclass(frozen=True)
class CamThresholds:
    position_m: float = 4.0
    heading_deg: float = 4.0
    # 4 m/s as printed; ETSI EN 302 637-2 uses 0.5 m/s
    speed_mps: float = 4.0
    max_interval_ms: int = 1000
    # strict=True evaluates "> threshold"; the default counts reaching it as exceeding
    strict: bool = False

    def exceeds(self, delta: float, threshold: float) -> bool:
        if self.strict:
            return delta > threshold + THRESHOLD_EPS
        return delta >= threshold - THRESHOLD_EPS


DEFAULT_THRESHOLDS = CamThresholds()


@dataclass(frozen=True)
class CamState:
    last_tx: Kinematics
    last_tx_time: int


@dataclass(frozen=True)
class CamEvent:
    vehicle: int
    t: int
    trigger_cause: str
    payload_size: int = 190
    ipt: int | None = None


def heading_diff(a: float, b: float) -> float:
    """Unsigned angular distance in degrees, in [0, 180]."""
    d = abs(a - b) % 360.0
    return min(d, 360.0 - d)


def check_trigger(
    state: CamState,
    cur: Kinematics,
    now: int,
    thresholds: CamThresholds = DEFAULT_THRESHOLDS,
) -> str | None:
    """First satisfied trigger in order time, position, heading, speed; None otherwise."""
    ref = state.last_tx
    if now - state.last_tx_time >= thresholds.max_interval_ms:
        return "time"
    if thresholds.exceeds(math.hypot(cur.x - ref.x, cur.y - ref.y), thresholds.position_m):
        return "position"
    if thresholds.exceeds(heading_diff(cur.heading, ref.heading), thresholds.heading_deg):
        return "heading"
    if thresholds.exceeds(abs(cur.speed - ref.speed), thresholds.speed_mps):
        return "speed"
    return None


def first_trigger_step(
    ref: Kinematics,
    future: Sequence[Kinematics],
    thresholds: CamThresholds = DEFAULT_THRESHOLDS,
) -> tuple[int, str]:
    """Walk grid steps after a CAM and return (steps until the next CAM, cause).

    ``future[k]`` is the state ``k + 1`` grid steps after ``ref``. If nothing fires within
    the given steps, the time trigger ceiling applies.
    """
    state = CamState(ref, ref.t)
    for k, cur in enumerate(future):
        cause = check_trigger(state, cur, ref.t + (k + 1) * GRID_MS, thresholds)
        if cause is not None:
            return k + 1, cause
    return thresholds.max_interval_ms // GRID_MS, "time"


def generate_cam_stream(
    trace: Trace,
    thresholds: CamThresholds = DEFAULT_THRESHOLDS,
    payload_size: int = 190,
) -> list[CamEvent]:
    """Fold the trigger rules over a grid trace; the first CAM goes out at the first sample."""
    if len(trace) == 0:
        return []
    idx, causes = _kernels.cam_scan(
        np.ascontiguousarray(trace.x),
        np.ascontiguousarray(trace.y),
        np.ascontiguousarray(trace.speed),
        np.ascontiguousarray(trace.heading),
        thresholds.position_m,
        thresholds.heading_deg,
        thresholds.speed_mps,
        thresholds.max_interval_ms // GRID_MS,
        thresholds.strict,
        THRESHOLD_EPS,
    )
    events = []
    prev = None
    for i, c in zip(idx.tolist(), causes.tolist()):
        t = trace.t0 + GRID_MS * i
        events.append(CamEvent(trace.vehicle, t, CAUSES[c], payload_size, None if prev is None else t - prev))
        prev = t
    return events


def generate_periodic_stream(
    trace: Trace,
    period: int,
    allowed: Sequence[int] | None = None,
    payload_size: int = 190,
    phase: int = 0,
) -> list[CamEvent]:
    """Events every ``period`` ms from ``phase`` ms after the trace start."""
    if allowed is not None and period not in allowed:
        raise ConfigurationError(f"period {period} ms not in allowed RRI set")
    if period <= 0:
        raise ConfigurationError("period must be positive")
    if not 0 <= phase < period:
        raise ConfigurationError("phase must lie in [0, period)")
    if len(trace) == 0:
        return []
    times = range(trace.t0 + phase, trace.t_end + 1, period)
    return [
        CamEvent(trace.vehicle, t, "time", payload_size, None if k == 0 else period)
        for k, t in enumerate(times)
    ]


def hybrid_assignment(vehicle_ids: Sequence[int], periodic_fraction: float) -> dict[int, bool]:
    """Map vehicle id -> True when it carries periodic traffic.

    Vehicles are taken in id order and the periodic share is spread evenly, so a 0.5
    fraction alternates ETSI / periodic.
    """
    out = {}
    for k, vid in enumerate(sorted(vehicle_ids)):
        out[vid] = math.floor((k + 1) * periodic_fraction + 1e-12) > math.floor(k * periodic_fraction + 1e-12)
    return out


def stream_ipts(events: Sequence[CamEvent]) -> list[int]:
    return [e.ipt for e in events if e.ipt is not None]


def dump_cam_events(events, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["vehicle_id", "t_ms", "cause", "ipt_ms"])
        for e in events:
            w.writerow([e.vehicle, e.t, e.trigger_cause, "" if e.ipt is None else e.ipt])


@dataclass
class CamTracker:
    """Stateful per-vehicle trigger evaluation for streaming use."""

    thresholds: CamThresholds = DEFAULT_THRESHOLDS
    state: CamState | None = field(default=None)

    def update(self, cur: Kinematics) -> str | None:
        if self.state is None:
            self.state = CamState(cur, cur.t)
            return "time"
        cause = check_trigger(self.state, cur, cur.t, self.thresholds)
        if cause is not None:
            self.state = CamState(cur, cur.t)
        return cause
