"""Vehicle kinematic traces: synthetic highway generators, CSV import/export and sampling.

Every trace lives on a 100 ms grid anchored at its own start time ``t0``. Headings are
compass degrees (0 = +y, 90 = +x, clockwise) normalized to [0, 360).
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

GRID_MS = 100
MAX_GAP_MS = 1000
CSV_COLUMNS = ("vehicle_id", "t_ms", "x_m", "y_m", "speed_mps", "heading_deg")


class ConfigurationError(ValueError):
    """Invalid scenario or generator parameters."""


class TraceParseError(ValueError):
    pass


class TraceQueryError(ValueError):
    pass


def normalize_heading(deg):
    """Wrap degrees into [0, 360). Works on scalars and arrays."""
    out = np.mod(deg, 360.0)
    # np.mod(-1e-17, 360) rounds to 360.0
    out = np.where(out >= 360.0, 0.0, out)
    return float(out) if np.ndim(out) == 0 else out


def interp_heading(h0, h1, frac):
    """Shortest-arc circular interpolation between two headings."""
    d = (np.asarray(h1) - np.asarray(h0) + 180.0) % 360.0 - 180.0
    return normalize_heading(h0 + frac * d)


@dataclass(frozen=True)
class Kinematics:
    t: int
    x: float
    y: float
    speed: float
    heading: float


@dataclass(frozen=True, eq=False)
class Trace:
    """One vehicle's grid samples, stored column-wise."""

    vehicle: int
    t0: int
    x: np.ndarray
    y: np.ndarray
    speed: np.ndarray
    heading: np.ndarray

    def __post_init__(self):
        n = len(self.x)
        for name in ("y", "speed", "heading"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"trace column {name} has wrong length")
        for name in ("x", "y", "speed", "heading"):
            arr = getattr(self, name)
            arr.flags.writeable = False

    def __len__(self):
        return len(self.x)

    @property
    def t(self) -> np.ndarray:
        return self.t0 + GRID_MS * np.arange(len(self.x), dtype=np.int64)

    @property
    def t_end(self) -> int:
        return self.t0 + GRID_MS * (len(self.x) - 1)

    @property
    def samples(self) -> list[Kinematics]:
        return [self.at_index(i) for i in range(len(self))]

    def at_index(self, i: int) -> Kinematics:
        return Kinematics(
            int(self.t0 + GRID_MS * i),
            float(self.x[i]),
            float(self.y[i]),
            float(self.speed[i]),
            float(self.heading[i]),
        )

    def covers(self, start: int, end: int) -> bool:
        return len(self) > 0 and self.t0 <= start and self.t_end >= end


def make_trace(vehicle, t0, x, y, speed, heading) -> Trace:
    speed = np.asarray(speed, dtype=float)
    if np.any(speed < 0):
        raise ConfigurationError("speed must be non-negative")
    return Trace(
        int(vehicle),
        int(t0),
        np.array(x, dtype=float),
        np.array(y, dtype=float),
        speed.copy(),
        np.asarray(normalize_heading(np.asarray(heading, dtype=float)), dtype=float).reshape(-1),
    )


def sample(trace: Trace, t: float) -> Kinematics:
    """Kinematics at time ``t``: the stored sample on grid points, interpolated between."""
    if len(trace) == 0 or t < trace.t0 or t > trace.t_end:
        raise TraceQueryError(
            f"t={t} outside trace span of vehicle {trace.vehicle}"
        )
    pos = (t - trace.t0) / GRID_MS
    i = int(math.floor(pos))
    frac = pos - i
    if frac == 0.0 or i == len(trace) - 1:
        k = trace.at_index(i)
        return Kinematics(int(t), k.x, k.y, k.speed, k.heading) if frac == 0.0 else k
    j = i + 1
    return Kinematics(
        int(t),
        float(trace.x[i] + frac * (trace.x[j] - trace.x[i])),
        float(trace.y[i] + frac * (trace.y[j] - trace.y[i])),
        float(trace.speed[i] + frac * (trace.speed[j] - trace.speed[i])),
        float(interp_heading(trace.heading[i], trace.heading[j], frac)),
    )


class TraceSet:
    """Stacked view of several traces for vectorized position lookups."""

    def __init__(self, traces: Sequence[Trace]):
        self.traces = list(traces)
        self.ids = np.array([tr.vehicle for tr in self.traces], dtype=np.int64)
        if len(set(self.ids.tolist())) != len(self.ids):
            raise ConfigurationError("duplicate vehicle ids in trace set")
        self.t0 = np.array([tr.t0 for tr in self.traces], dtype=np.int64)
        n = max((len(tr) for tr in self.traces), default=0)
        self._x = np.full((len(self.traces), max(n, 1)), np.nan)
        self._y = np.full_like(self._x, np.nan)
        self.length = np.array([len(tr) for tr in self.traces], dtype=np.int64)
        for k, tr in enumerate(self.traces):
            self._x[k, : len(tr)] = tr.x
            self._y[k, : len(tr)] = tr.y

    def __len__(self):
        return len(self.traces)

    def positions(self, t: int) -> np.ndarray:
        """(N, 2) positions at time t, linearly interpolated between grid samples."""
        pos = (t - self.t0) / GRID_MS
        i = np.floor(pos).astype(np.int64)
        i = np.clip(i, 0, self.length - 1)
        j = np.minimum(i + 1, self.length - 1)
        frac = np.clip(pos - i, 0.0, 1.0)
        rows = np.arange(len(self.traces))
        x = self._x[rows, i] + frac * (self._x[rows, j] - self._x[rows, i])
        y = self._y[rows, i] + frac * (self._y[rows, j] - self._y[rows, i])
        return np.column_stack([x, y])


def _start_offsets(n, history_ms, phase_jitter, rng):
    jitter = rng.integers(0, GRID_MS, size=n) if phase_jitter else np.zeros(n, dtype=np.int64)
    # grid anchors at or before both 0 and -history so the trace covers [0, duration]
    return -int(history_ms) - jitter


def _n_samples(t0, duration_ms):
    return int(math.ceil((duration_ms - t0) / GRID_MS)) + 1


def gen_straight_highway(
    lanes: int,
    vehicles_per_lane: int,
    spacing: float,
    speed_per_lane,
    duration: int,
    seed: int = 0,
    *,
    directions: Sequence[int] | None = None,
    lane_width: float = 3.5,
    history_ms: int = 0,
    phase_jitter: bool = False,
    position_jitter: float = 0.0,
) -> list[Trace]:
    """Constant-speed straight-line motion along x, one speed per lane.

    ``directions`` gives +1/-1 per lane (default all +1). Vehicles in a lane start
    ``spacing`` metres apart.
    """
    speeds = _per_lane(speed_per_lane, lanes, "speed_per_lane")
    if lanes < 1 or vehicles_per_lane < 1:
        raise ConfigurationError("lanes and vehicles_per_lane must be >= 1")
    if spacing <= 0 or any(v <= 0 for v in speeds):
        raise ConfigurationError("spacing and speeds must be positive")
    directions = list(directions) if directions is not None else [1] * lanes
    if len(directions) != lanes or any(d not in (1, -1) for d in directions):
        raise ConfigurationError("directions must list +1/-1 per lane")
    rng = np.random.default_rng(seed)
    n = lanes * vehicles_per_lane
    t0s = _start_offsets(n, history_ms, phase_jitter, rng)
    traces = []
    vid = 0
    for lane in range(lanes):
        d, v = directions[lane], speeds[lane]
        heading = 90.0 if d > 0 else 270.0
        for k in range(vehicles_per_lane):
            t0 = int(t0s[vid])
            m = _n_samples(t0, duration)
            x_start = k * spacing + (rng.uniform(-position_jitter, position_jitter) if position_jitter else 0.0)
            # position at trace time t is x_start + d*v*t/1000, so x = x_start at t = 0
            t_ms = (t0 + GRID_MS * np.arange(m)).astype(float)
            x = x_start + d * (v * t_ms) / 1000.0
            y = np.full(m, lane * lane_width)
            traces.append(make_trace(vid, t0, x, y, np.full(m, v), np.full(m, heading)))
            vid += 1
    return traces


def _per_lane(value, lanes, name):
    if np.ndim(value) == 0:
        return [float(value)] * lanes
    vals = [float(v) for v in value]
    if len(vals) != lanes:
        raise ConfigurationError(f"{name} must have one entry per lane")
    return vals


class _CurvedRoad:
    """Centerline built from repeating [arc, straight] segments.

    Consecutive arcs alternate turning direction, giving an S-shaped road. A full
    circle (``arc_angle >= 360`` with no straight) is a ring road.
    """

    def __init__(self, radius, arc_angle, straight_length, alternate=True):
        self.radius = float(radius)
        self.arc_rad = math.radians(arc_angle)
        self.straight = float(straight_length)
        self.alternate = alternate
        if math.isinf(self.radius):
            self.arc_len = math.inf
        else:
            self.arc_len = self.radius * self.arc_rad
        self.period = self.arc_len + self.straight

    def pose(self, s: np.ndarray):
        s = np.asarray(s, dtype=float)
        if math.isinf(self.radius):
            return s.copy(), np.zeros_like(s), np.zeros_like(s)
        if np.any(s < 0):
            # straight approach road along +x before the first arc
            x, y, phi = self.pose(np.maximum(s, 0.0))
            neg = s < 0
            return np.where(neg, s, x), np.where(neg, 0.0, y), np.where(neg, 0.0, phi)
        if self.straight == 0 and self.arc_rad >= 2 * math.pi:
            phi = s / self.radius  # ring, turning left (counter-clockwise in x-y)
            return self.radius * np.sin(phi), self.radius * (1 - np.cos(phi)), phi
        n_seg = np.floor(s / self.period).astype(np.int64)
        u = s - n_seg * self.period
        n_max = int(n_seg.max()) + 1 if s.size else 1
        # start pose of every period, accumulated segment by segment
        px, py, pphi = np.zeros(n_max + 1), np.zeros(n_max + 1), np.zeros(n_max + 1)
        for k in range(n_max):
            sign = -1.0 if (self.alternate and k % 2) else 1.0
            x1, y1, p1 = self._arc_end(px[k], py[k], pphi[k], sign, self.arc_len)
            px[k + 1] = x1 + self.straight * math.cos(p1)
            py[k + 1] = y1 + self.straight * math.sin(p1)
            pphi[k + 1] = p1
        sign = np.where(self.alternate & (n_seg % 2 == 1), -1.0, 1.0)
        x0, y0, phi0 = px[n_seg], py[n_seg], pphi[n_seg]
        on_arc = u < self.arc_len
        ua = np.minimum(u, self.arc_len)
        xa, ya, pa = self._arc_end(x0, y0, phi0, sign, ua)
        us = np.where(on_arc, 0.0, u - self.arc_len)
        x = xa + us * np.cos(pa)
        y = ya + us * np.sin(pa)
        return x, y, pa

    def _arc_end(self, x0, y0, phi0, sign, length):
        r = self.radius
        dphi = sign * length / r
        # circle center to the left (sign=+1) or right (sign=-1) of travel direction
        cx = x0 - sign * r * np.sin(phi0)
        cy = y0 + sign * r * np.cos(phi0)
        phi = phi0 + dphi
        return cx + sign * r * np.sin(phi), cy - sign * r * np.cos(phi), phi


def _math_angle_to_heading(phi):
    # travel direction angle phi from +x (counter-clockwise) -> compass heading
    return normalize_heading(90.0 - np.degrees(phi))


def gen_curved_highway(
    radius: float,
    arc_angle: float,
    lanes: int,
    vehicles: int,
    speeds,
    duration: int,
    seed: int = 0,
    *,
    straight_length: float = 0.0,
    spacing: float | None = None,
    lane_width: float = 3.5,
    speed_jitter: float = 0.0,
    history_ms: int = 0,
    phase_jitter: bool = False,
    start_jitter: bool = False,
) -> list[Trace]:
    """Constant-speed motion along a road of circular arcs and optional straights.

    On an arc the heading turns at speed/radius rad/s. ``vehicles`` is the total count,
    spread round-robin across lanes; lane k is the centerline translated by k lane widths in y.
    ``radius=math.inf`` degenerates to a straight road.
    """
    if not radius > 0:
        raise ConfigurationError("radius must be positive")
    if arc_angle <= 0 or lanes < 1 or vehicles < 1 or straight_length < 0:
        raise ConfigurationError("invalid curved highway geometry")
    lane_speeds = _per_lane(speeds, lanes, "speeds")
    if any(v <= 0 for v in lane_speeds):
        raise ConfigurationError("speeds must be positive")
    road = _CurvedRoad(radius, arc_angle, straight_length)
    rng = np.random.default_rng(seed)
    t0s = _start_offsets(vehicles, history_ms, phase_jitter, rng)
    if spacing is None:
        spacing = 30.0
    traces = []
    for vid in range(vehicles):
        lane = vid % lanes
        slot = vid // lanes
        v = lane_speeds[lane]
        if speed_jitter:
            v = max(0.1, v + rng.uniform(-speed_jitter, speed_jitter))
        s_start = slot * spacing
        if start_jitter and math.isfinite(road.period):
            s_start += rng.uniform(0, road.period)
        t0 = int(t0s[vid])
        m = _n_samples(t0, duration)
        t_ms = (t0 + GRID_MS * np.arange(m)).astype(float)
        x, y, phi = road.pose(s_start + (v * t_ms) / 1000.0)
        # lanes are the centerline shifted sideways, so every lane keeps the same radius
        # and the speed column is the true path speed
        y = y + lane * lane_width
        traces.append(make_trace(vid, t0, x, y, np.full(m, v), _math_angle_to_heading(phi)))
    return traces


def export_trace(traces: Iterable[Trace], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for tr in sorted(traces, key=lambda tr: tr.vehicle):
            for i in range(len(tr)):
                w.writerow([
                    tr.vehicle,
                    tr.t0 + GRID_MS * i,
                    repr(float(tr.x[i])),
                    repr(float(tr.y[i])),
                    repr(float(tr.speed[i])),
                    repr(float(tr.heading[i])),
                ])


def import_trace(path) -> list[Trace]:
    """Read a trace CSV and resample every vehicle onto its own 100 ms grid.

    The grid is anchored at each vehicle's first row. Rows that land on the grid are
    taken verbatim, so export -> import round-trips exactly.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            warnings.warn(f"{path}: empty trace file", stacklevel=2)
            return []
        header = [h.strip() for h in header]
        missing = [c for c in CSV_COLUMNS if c not in header]
        if missing:
            raise TraceParseError(f"{path}: row 1: missing columns {missing}")
        col = {c: header.index(c) for c in CSV_COLUMNS}
        rows: dict[int, list] = {}
        prev = None
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                vid = int(row[col["vehicle_id"]])
                t = int(round(float(row[col["t_ms"]])))
                vals = [float(row[col[c]]) for c in CSV_COLUMNS[2:]]
            except (ValueError, IndexError) as exc:
                raise TraceParseError(f"{path}: row {lineno}: {exc}") from None
            if prev is not None and (vid, t) <= prev:
                raise TraceParseError(f"{path}: row {lineno}: rows not sorted by (vehicle, t)")
            if prev is not None and prev[0] == vid and t - prev[1] > MAX_GAP_MS:
                raise TraceParseError(
                    f"{path}: row {lineno}: gap of {t - prev[1]} ms exceeds {MAX_GAP_MS} ms"
                )
            prev = (vid, t)
            rows.setdefault(vid, []).append((t, *vals))
    if not rows:
        warnings.warn(f"{path}: trace file has no rows", stacklevel=2)
        return []
    return [_resample(vid, data) for vid, data in rows.items()]


def _resample(vid, data) -> Trace:
    arr = np.array(data, dtype=float)
    t = arr[:, 0]
    t0 = int(t[0])
    n = int((t[-1] - t0) // GRID_MS) + 1
    grid = t0 + GRID_MS * np.arange(n)
    idx = np.searchsorted(t, grid, side="right") - 1
    idx = np.clip(idx, 0, len(t) - 1)
    nxt = np.minimum(idx + 1, len(t) - 1)
    span = t[nxt] - t[idx]
    frac = np.where(span > 0, (grid - t[idx]) / np.where(span > 0, span, 1.0), 0.0)
    exact = t[idx] == grid
    out = []
    for c in (1, 2, 3):
        lerp = arr[idx, c] + frac * (arr[nxt, c] - arr[idx, c])
        out.append(np.where(exact, arr[idx, c], lerp))
    hd = np.where(exact, arr[idx, 4], interp_heading(arr[idx, 4], arr[nxt, 4], frac))
    return make_trace(vid, t0, out[0], out[1], np.maximum(out[2], 0.0), hd)
