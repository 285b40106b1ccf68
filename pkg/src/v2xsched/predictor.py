"""IPT/RRI predictors: periodic, pooled mean IPT, oracle, and GRU trajectory based."""
from __future__ import annotations

import bisect
import math
import os
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .cam import DEFAULT_THRESHOLDS, CamEvent, CamThresholds, first_trigger_step
from .gru.dataset import DEFAULT_MAX_SPEED, HISTORY_STEPS, heading_from_features, trace_features
from .gru.model import ARCHITECTURES, GruModel
from .gru.serialize import check_architecture, load_model
from .gru.train import model_inputs, predict as batch_predict
from .mobility import GRID_MS, ConfigurationError, Kinematics, Trace

COLD_START_IPT = 1000
HORIZON_STEPS = 10


def map_ipt_to_rri(ipt: float, allowed) -> int:
    """Nearest allowed RRI; an exact midpoint rounds up to the longer reservation."""
    allowed = sorted(allowed)
    if not allowed:
        raise ConfigurationError("empty RRI set")
    if ipt <= 0:
        raise ValueError("ipt must be positive")
    k = bisect.bisect_left(allowed, ipt)
    if k == 0:
        return allowed[0]
    if k == len(allowed):
        return allowed[-1]
    lo, hi = allowed[k - 1], allowed[k]
    return hi if hi - ipt <= ipt - lo else lo


@dataclass(frozen=True)
class IptPrediction:
    predicted_ipt: int
    cause: str = "time"
    trajectory: np.ndarray | None = field(default=None, compare=False, repr=False)
    cold: bool = False


class KinematicHistory:
    """Ring of the last 600 grid samples of (speed / max_speed, sin, cos)."""

    def __init__(self, steps: int = HISTORY_STEPS, max_speed: float = DEFAULT_MAX_SPEED):
        self.steps = steps
        self.max_speed = max_speed
        self._buf = deque(maxlen=steps)

    def push(self, k: Kinematics):
        rad = math.radians(k.heading)
        self._buf.append((k.speed / self.max_speed, math.sin(rad), math.cos(rad)))

    @property
    def warm(self) -> bool:
        return len(self._buf) == self.steps

    def __len__(self):
        return len(self._buf)

    def features(self) -> np.ndarray:
        return np.array(self._buf, dtype=float).reshape(-1, 3)


class Predictor:
    """Interface: ``predict(vehicle, event)`` at each CAM transmission."""

    name = "base"

    def predict(self, vehicle: int, event: CamEvent) -> IptPrediction:
        raise NotImplementedError


class PeriodicPredictor(Predictor):
    name = "periodic"

    def __init__(self, period: int):
        self.period = int(period)

    def predict(self, vehicle, event):
        return IptPrediction(self.period)


class MeanIptPredictor(Predictor):
    """Scenario-wide mean IPT rounded to the closest RRI, fixed a priori."""

    name = "mean-ipt"

    def __init__(self, mean_ipt: float, allowed):
        self.mean_ipt = float(mean_ipt)
        self.rri = map_ipt_to_rri(self.mean_ipt, allowed)

    @classmethod
    def from_streams(cls, streams: dict, allowed):
        ipts = [e.ipt for evs in streams.values() for e in evs if e.ipt is not None]
        if not ipts:
            return cls(COLD_START_IPT, allowed)
        return cls(float(np.mean(ipts)), allowed)

    def predict(self, vehicle, event):
        return IptPrediction(self.rri)


class OraclePredictor(Predictor):
    """Reads the true next IPT from the precomputed CAM streams."""

    name = "oracle"

    def __init__(self, streams: dict):
        self._next = {}
        for vid, evs in streams.items():
            for a, b in zip(evs, evs[1:]):
                self._next[(vid, a.t)] = b.t - a.t

    def predict(self, vehicle, event):
        ipt = self._next.get((vehicle, event.t))
        if ipt is None:
            return IptPrediction(COLD_START_IPT, cold=True)
        return IptPrediction(ipt, "oracle")


@dataclass
class GruModels:
    speed: GruModel
    sine: GruModel
    cosine: GruModel
    max_speed: float = DEFAULT_MAX_SPEED

    @classmethod
    def load(cls, directory, max_speed: float = DEFAULT_MAX_SPEED, check_arch: bool = True):
        models = {}
        for name in ("speed", "sine", "cosine"):
            path = os.path.join(directory, f"{name}.gru")
            m = load_model(path, expect_name=name)
            if m.input_dim not in (1, 3):
                raise ConfigurationError(f"{path}: input dim {m.input_dim}, expected 1 or 3")
            if check_arch:
                check_architecture(m, ARCHITECTURES[name])
            if m.output_dim != HORIZON_STEPS:
                raise ConfigurationError(f"{path}: output dim {m.output_dim} != {HORIZON_STEPS}")
            models[name] = m
        return cls(models["speed"], models["sine"], models["cosine"], max_speed)

    def run(self, X: np.ndarray, batch: int = 256) -> np.ndarray:
        """(N, 600, 3) normalized histories -> (N, 10, 3) predicted features."""
        out = np.empty((len(X), HORIZON_STEPS, 3))
        for f, m in enumerate((self.speed, self.sine, self.cosine)):
            y = batch_predict(m, model_inputs(m, X, f), batch)
            if m.meta.get("residual", True):
                y = y + X[:, -1, f][:, None]
            out[:, :, f] = y
        return out


def trajectory_to_kinematics(ref: Kinematics, feats: np.ndarray, max_speed: float) -> list[Kinematics]:
    """Dead-reckon positions from predicted (speed, sin, cos) steps after ``ref``.

    Each 100 ms step moves by the trapezoid of the bounding speeds along the mean of
    the bounding unit heading vectors.
    """
    speed = np.maximum(feats[:, 0] * max_speed, 0.0)
    sin_v, cos_v = feats[:, 1], feats[:, 2]
    heading = heading_from_features(sin_v, cos_v)
    norm = np.hypot(sin_v, cos_v)
    norm = np.where(norm > 0, norm, 1.0)
    ux, uy = sin_v / norm, cos_v / norm
    rad = math.radians(ref.heading)
    px, py, pv, pux, puy = ref.x, ref.y, ref.speed, math.sin(rad), math.cos(rad)
    dt = GRID_MS / 1000.0
    out = []
    for k in range(len(feats)):
        v_mean = 0.5 * (pv + speed[k])
        dx, dy = 0.5 * (pux + ux[k]), 0.5 * (puy + uy[k])
        n = math.hypot(dx, dy)
        if n > 0:
            dx, dy = dx / n, dy / n
        px += v_mean * dt * dx
        py += v_mean * dt * dy
        pv, pux, puy = speed[k], ux[k], uy[k]
        out.append(Kinematics(ref.t + (k + 1) * GRID_MS, px, py, float(speed[k]), float(heading[k])))
    return out


def ipt_from_trajectory(ref: Kinematics, future, thresholds: CamThresholds = DEFAULT_THRESHOLDS):
    """Apply the CAM trigger rules to a predicted future; returns (ipt_ms, cause)."""
    steps, cause = first_trigger_step(ref, future, thresholds)
    return steps * GRID_MS, cause


def gru_predict(history: np.ndarray, models: GruModels, ref: Kinematics,
                thresholds: CamThresholds = DEFAULT_THRESHOLDS) -> IptPrediction:
    """Predict the next IPT from a warm (600, 3) history and the reference CAM state."""
    history = np.asarray(history, dtype=float)
    if history.shape != (HISTORY_STEPS, 3):
        return IptPrediction(COLD_START_IPT, cold=True)
    feats = models.run(history[None])[0]
    future = trajectory_to_kinematics(ref, feats, models.max_speed)
    ipt, cause = ipt_from_trajectory(ref, future, thresholds)
    return IptPrediction(ipt, cause, feats)


class GruPredictor(Predictor):
    """GRU predictions for every CAM of the given streams, computed up front in batch.

    Each prediction uses only the 600 samples up to the CAM's own time and the CAM
    reference kinematics, so batching does not look ahead. ``window = (start, end)``
    limits the work to CAMs generated in [start, end).
    """

    name = "gru"

    def __init__(self, models: GruModels, traces, streams: dict,
                 thresholds: CamThresholds = DEFAULT_THRESHOLDS, window: tuple | None = None):
        self.models = models
        self.thresholds = thresholds
        self._pred = {}
        by_id = {tr.vehicle: tr for tr in traces}
        keys, hists, refs = [], [], []
        for vid, evs in streams.items():
            tr = by_id[vid]
            feats = trace_features(tr, models.max_speed)
            for e in evs:
                if window is not None and not window[0] <= e.t < window[1]:
                    continue
                i = (e.t - tr.t0) // GRID_MS
                if i + 1 < HISTORY_STEPS:
                    self._pred[(vid, e.t)] = IptPrediction(COLD_START_IPT, cold=True)
                    continue
                keys.append((vid, e.t))
                hists.append(feats[i + 1 - HISTORY_STEPS : i + 1])
                refs.append(tr.at_index(i))
        if keys:
            out = models.run(np.stack(hists))
            for key, ref, f in zip(keys, refs, out):
                future = trajectory_to_kinematics(ref, f, models.max_speed)
                ipt, cause = ipt_from_trajectory(ref, future, thresholds)
                self._pred[key] = IptPrediction(ipt, cause, f)

    def predict(self, vehicle, event):
        p = self._pred.get((vehicle, event.t))
        return p if p is not None else IptPrediction(COLD_START_IPT, cold=True)


def true_future(trace: Trace, i: int, steps: int = HORIZON_STEPS) -> list[Kinematics]:
    return [trace.at_index(j) for j in range(i + 1, min(i + 1 + steps, len(trace)))]
