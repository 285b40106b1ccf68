"""Evaluation quantities, all computed from the event log alone."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .config import DEFAULT_RRIS
from .eventlog import EventLog

DEFAULT_BIN_M = 50.0
DEFAULT_MAX_M = 500.0
DCOL_RANGE_M = 500.0


@dataclass
class PdrCurve:
    edges: np.ndarray  # bin lower edges
    width: float
    delivered: np.ndarray
    expected: np.ndarray

    @property
    def ratio(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.expected > 0, self.delivered / np.maximum(self.expected, 1), np.nan)

    def rows(self):
        """(lo, hi, ratio, delivered, expected) for bins with at least one expectation."""
        r = self.ratio
        return [
            (float(lo), float(lo + self.width), float(r[k]), int(self.delivered[k]), int(self.expected[k]))
            for k, lo in enumerate(self.edges)
            if self.expected[k] > 0
        ]

    def as_dict(self) -> dict:
        return {(lo, hi): ratio for lo, hi, ratio, _, _ in self.rows()}


def pdr_by_distance(log: EventLog, bin_width: float = DEFAULT_BIN_M, max_distance: float = DEFAULT_MAX_M) -> PdrCurve:
    """Delivered / expected per distance bin over every (transmission, neighbor) pair.

    Half-duplex losses count as failures.
    """
    rx = log["rx"]
    n_bins = int(round(max_distance / bin_width))
    edges = bin_width * np.arange(n_bins)
    d = rx["distance"]
    keep = d < max_distance
    b = np.minimum((d[keep] // bin_width).astype(np.int64), n_bins - 1)
    expected = np.bincount(b, minlength=n_bins)
    delivered = np.bincount(b, weights=rx["decoded"][keep].astype(float), minlength=n_bins).astype(np.int64)
    return PdrCurve(edges, bin_width, delivered, expected)


def collision_flags(log: EventLog, range_m: float = DCOL_RANGE_M) -> tuple[np.ndarray, int]:
    """Per-transmission flag: overlapped in subframe and subchannels by a sender within
    ``range_m``. Also returns the number of overlapping pairs."""
    tx = log["tx"]
    flags = np.zeros(len(tx), dtype=bool)
    pairs = 0
    if len(tx) == 0:
        return flags, 0
    order = np.argsort(tx["t"], kind="stable")
    t = tx["t"][order]
    cuts = np.flatnonzero(np.diff(t)) + 1
    for grp in np.split(order, cuts):
        if len(grp) < 2:
            continue
        s0 = tx["sub_start"][grp]
        s1 = s0 + tx["sub_len"][grp]
        overlap = (s0[:, None] < s1[None, :]) & (s0[None, :] < s1[:, None])
        dx = tx["x"][grp][:, None] - tx["x"][grp][None, :]
        dy = tx["y"][grp][:, None] - tx["y"][grp][None, :]
        near = np.hypot(dx, dy) <= range_m
        hit = overlap & near
        np.fill_diagonal(hit, False)
        flags[grp] |= hit.any(axis=1)
        pairs += int(np.triu(hit, 1).sum())
    return flags, pairs


def delta_col(log: EventLog, range_m: float = DCOL_RANGE_M, pairwise: bool = False) -> int:
    """Transmissions experiencing co-resource interference from a sender within range.

    ``pairwise`` counts overlapping pairs once instead.
    """
    flags, pairs = collision_flags(log, range_m)
    return pairs if pairwise else int(flags.sum())


def _per_vehicle_diffs(vehicle, t):
    order = np.lexsort((t, vehicle))
    v, tt = vehicle[order], t[order]
    same = v[1:] == v[:-1]
    return (tt[1:] - tt[:-1])[same], order


@dataclass
class IptStats:
    cam_mean: float
    cam_std: float
    ipt_mean: float
    ipt_std: float
    cams: int
    txs: int


def _mean_std(x):
    if len(x) == 0:
        return float("nan"), float("nan")
    return float(np.mean(x)), float(np.std(x))


def cam_ipt_stats(log: EventLog) -> IptStats:
    """Application trigger intervals (CAM rate) and MAC inter-transmission times (IPT)."""
    cam, tx = log["cam"], log["tx"]
    cam_d, _ = _per_vehicle_diffs(cam["vehicle"], cam["t"])
    tx_d, _ = _per_vehicle_diffs(tx["vehicle"], tx["t"])
    cm, cs = _mean_std(cam_d)
    im, is_ = _mean_std(tx_d)
    return IptStats(cm, cs, im, is_, len(cam), len(tx))


@dataclass
class RriStats:
    mean: float
    std: float
    predictions: int
    inaccuracies: int

    @property
    def accuracy(self) -> float:
        return 1.0 - self.inaccuracies / self.predictions if self.predictions else float("nan")


def rri_pairs(log: EventLog) -> tuple[np.ndarray, np.ndarray]:
    """(advertised RRI, realized next MAC IPT) for every SCI with rri > 0 and a successor."""
    tx = log["tx"]
    order = np.lexsort((tx["t"], tx["vehicle"]))
    v, t, rri = tx["vehicle"][order], tx["t"][order], tx["rri"][order]
    has_next = np.zeros(len(order), dtype=bool)
    has_next[:-1] = v[1:] == v[:-1]
    realized = np.zeros(len(order), dtype=np.int64)
    realized[:-1] = t[1:] - t[:-1]
    keep = has_next & (rri > 0)
    return rri[keep], realized[keep]


def rri_error(log: EventLog) -> RriStats:
    adv, real = rri_pairs(log)
    err = adv - real
    m, s = _mean_std(err)
    return RriStats(m, s, len(err), int(np.count_nonzero(err)))


@dataclass
class ConfusionMatrix:
    grid: tuple
    counts: np.ndarray  # [predicted, actual]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.counts) / self.total) if self.total else float("nan")

    def percentage(self) -> np.ndarray:
        return 100.0 * self.counts / self.total if self.total else np.zeros_like(self.counts, dtype=float)

    def write_csv(self, path, percent: bool = True) -> None:
        """Rows are predicted RRI, columns actual IPT; cells are % of all predictions."""
        cells = self.percentage() if percent else self.counts
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["predicted_rri_ms\\actual_ipt_ms"] + [str(g) for g in self.grid])
            for g, row in zip(self.grid, cells):
                w.writerow([g] + [f"{x:.4f}" if percent else int(x) for x in row])


def snap_to_grid(values, grid) -> np.ndarray:
    grid = np.asarray(grid)
    values = np.asarray(values, dtype=float)
    idx = np.abs(values[:, None] - grid[None, :]).argmin(axis=1) if len(values) else np.zeros(0, dtype=int)
    return idx


def confusion_from_pairs(predicted, actual, grid=DEFAULT_RRIS) -> ConfusionMatrix:
    """Predicted values must lie on ``grid``; actual IPTs are clipped to the nearest cell."""
    grid = tuple(grid)
    counts = np.zeros((len(grid), len(grid)), dtype=np.int64)
    pi = snap_to_grid(predicted, grid)
    ai = snap_to_grid(actual, grid)
    np.add.at(counts, (pi, ai), 1)
    return ConfusionMatrix(grid, counts)


def confusion(log: EventLog, grid=DEFAULT_RRIS) -> ConfusionMatrix:
    adv, real = rri_pairs(log)
    return confusion_from_pairs(adv, real, grid)


def missed_opportunities(log: EventLog) -> int:
    return len(log["miss"])


@dataclass
class MetricsBundle:
    pdr: PdrCurve
    delta_col: int
    ipt: IptStats
    rri: RriStats
    confusion: ConfusionMatrix
    misses: int
    drops: int
    extra: dict = field(default_factory=dict)

    def summary_row(self) -> dict:
        """Application and RRI performance in the column order of the comparison table."""
        return {
            "cam_rate_mean_ms": self.ipt.cam_mean,
            "cam_rate_std_ms": self.ipt.cam_std,
            "ipt_mean_ms": self.ipt.ipt_mean,
            "ipt_std_ms": self.ipt.ipt_std,
            "delta_col": self.delta_col,
            "rri_error_mean_ms": self.rri.mean,
            "rri_error_std_ms": self.rri.std,
            "predictions": self.rri.predictions,
            "inaccuracies": self.rri.inaccuracies,
            "missed_opportunities": self.misses,
            "dropped_packets": self.drops,
        }


def compute_metrics(log: EventLog, bin_width: float = DEFAULT_BIN_M, grid=DEFAULT_RRIS) -> MetricsBundle:
    return MetricsBundle(
        pdr=pdr_by_distance(log, bin_width),
        delta_col=delta_col(log),
        ipt=cam_ipt_stats(log),
        rri=rri_error(log),
        confusion=confusion(log, grid),
        misses=missed_opportunities(log),
        drops=len(log["drop"]),
    )


def write_pdr_csv(curve: PdrCurve, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bin_lo_m", "bin_hi_m", "pdr", "delivered", "expected"])
        for lo, hi, r, dl, ex in curve.rows():
            w.writerow([repr(lo), repr(hi), repr(r), dl, ex])


def write_summary_csv(rows: dict, path) -> None:
    """``rows`` maps a label to a summary_row dict."""
    keys = None
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        for label, row in rows.items():
            if keys is None:
                keys = list(row)
                w.writerow(["config"] + keys)
            w.writerow([label] + [repr(row[k]) if isinstance(row[k], float) else row[k] for k in keys])
