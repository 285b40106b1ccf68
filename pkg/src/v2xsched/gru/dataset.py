"""Sliding-window datasets of normalized kinematics for the three predictors."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass

import numpy as np

from ..mobility import GRID_MS, Trace

log = logging.getLogger(__name__)

HISTORY_STEPS = 600
HORIZON_STEPS = 10
STRIDE_STEPS = 10
FEATURES = ("speed", "sine", "cosine")
FEATURE_INDEX = {name: i for i, name in enumerate(FEATURES)}
DEFAULT_MAX_SPEED = 50.0
SPLITS = ("train", "val", "test")


def trace_features(trace: Trace, max_speed: float = DEFAULT_MAX_SPEED) -> np.ndarray:
    """(n, 3) per-sample (speed / max_speed, sin heading, cos heading)."""
    rad = np.radians(trace.heading)
    return np.column_stack([trace.speed / max_speed, np.sin(rad), np.cos(rad)])


def heading_from_features(sin_v, cos_v):
    """Compass heading in [0, 360) from its sine and cosine."""
    deg = np.degrees(np.arctan2(sin_v, cos_v)) % 360.0
    return np.where(deg >= 360.0, 0.0, deg)


@dataclass
class Dataset:
    """Sequences for one target feature with a fixed train/val/test partition.

    ``X`` holds inputs (N, 600, 3); ``Y`` the absolute normalized target feature over
    the next 10 steps. Models are fit to ``Y - base`` (offsets from the last input of
    the target feature); MSE is identical in either encoding.
    """

    name: str
    X: np.ndarray
    Y: np.ndarray
    split: dict
    feature: int
    index: list

    @property
    def base(self):
        return self.X[:, -1, self.feature]

    def part(self, which: str):
        idx = self.split[which]
        return self.X[idx], self.Y[idx]

    def residual_targets(self, idx=None):
        if idx is None:
            return self.Y - self.base[:, None]
        return self.Y[idx] - self.X[idx, -1, self.feature][:, None]

    def __len__(self):
        return len(self.Y)


def window_starts(n_samples: int, history=HISTORY_STEPS, horizon=HORIZON_STEPS, stride=STRIDE_STEPS):
    if n_samples < history + horizon:
        return []
    return list(range(0, n_samples - history - horizon + 1, stride))


def split_indices(n: int, rng: np.random.Generator, fractions=(0.8, 0.1, 0.1)) -> dict:
    perm = rng.permutation(n)
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    if n_train + n_val > n:
        n_val = n - n_train
    return {
        "train": np.sort(perm[:n_train]),
        "val": np.sort(perm[n_train : n_train + n_val]),
        "test": np.sort(perm[n_train + n_val :]),
    }


def build_dataset(
    traces,
    seed: int = 0,
    *,
    max_speed: float = DEFAULT_MAX_SPEED,
    stride: int = STRIDE_STEPS,
    history: int = HISTORY_STEPS,
    horizon: int = HORIZON_STEPS,
    max_sequences: int | None = None,
) -> dict:
    """Windows of ``history`` input steps and ``horizon`` target steps, stride ``stride``.

    Returns one Dataset per target feature; all three share inputs and partition.
    Traces too short for a single window are skipped with a warning.
    """
    chunks, index = [], []
    for tr in traces:
        starts = window_starts(len(tr), history, horizon, stride)
        if not starts:
            log.warning("trace of vehicle %s too short (%d samples), skipped", tr.vehicle, len(tr))
            continue
        feats = trace_features(tr, max_speed)
        for s in starts:
            chunks.append(feats[s : s + history + horizon])
            index.append((tr.vehicle, tr.t0 + s * GRID_MS))
        if max_sequences is not None and len(index) >= max_sequences:
            chunks, index = chunks[:max_sequences], index[:max_sequences]
            break
    if chunks:
        windows = np.stack(chunks)
    else:
        windows = np.zeros((0, history + horizon, len(FEATURES)))
    rng = np.random.default_rng(seed)
    split = split_indices(len(windows), rng)
    X = np.ascontiguousarray(windows[:, :history])
    out = {}
    for name, f in FEATURE_INDEX.items():
        out[name] = Dataset(name, X, np.ascontiguousarray(windows[:, history:, f]), split, f, index)
    return out


def write_index(dataset: Dataset, path) -> None:
    """Sequence-index file: one row per sequence naming its trace window and split."""
    which = np.empty(len(dataset), dtype=object)
    for name in SPLITS:
        which[dataset.split[name]] = name
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["seq", "vehicle_id", "start_t_ms", "split"])
        for k, (vid, t) in enumerate(dataset.index):
            w.writerow([k, vid, t, which[k]])


def read_index(traces, path, *, max_speed: float = DEFAULT_MAX_SPEED,
               history: int = HISTORY_STEPS, horizon: int = HORIZON_STEPS) -> dict:
    """Rebuild the datasets written by ``write_index`` from the same traces."""
    by_id = {tr.vehicle: tr for tr in traces}
    feats = {}
    chunks, index, split = [], [], {s: [] for s in SPLITS}
    with open(path, newline="") as fh:
        for k, row in enumerate(csv.DictReader(fh)):
            vid, t = int(row["vehicle_id"]), int(row["start_t_ms"])
            tr = by_id[vid]
            if vid not in feats:
                feats[vid] = trace_features(tr, max_speed)
            s = (t - tr.t0) // GRID_MS
            chunks.append(feats[vid][s : s + history + horizon])
            index.append((vid, t))
            split[row["split"]].append(k)
    windows = np.stack(chunks)
    split = {s: np.array(v, dtype=np.int64) for s, v in split.items()}
    X = np.ascontiguousarray(windows[:, :history])
    return {
        name: Dataset(name, X, np.ascontiguousarray(windows[:, history:, f]), split, f, index)
        for name, f in FEATURE_INDEX.items()
    }
