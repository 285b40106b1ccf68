"""SB-SPS MAC: sensing window, candidate selection, grant lifecycle, dynamic grant."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .config import MacConfig
from .mobility import ConfigurationError


@dataclass(frozen=True)
class SidelinkResource:
    subframe: int
    sub_start: int
    sub_len: int = 1

    def __post_init__(self):
        if self.sub_len < 1 or self.sub_start < 0:
            raise ValueError("subchannel range must be non-empty and in bounds")

    @property
    def subchannels(self) -> range:
        return range(self.sub_start, self.sub_start + self.sub_len)


@dataclass(frozen=True)
class Sci:
    sender: int
    rri: int
    reserved_resource: SidelinkResource
    priority: int = 0


@dataclass
class Grant:
    grant_id: int
    sub_start: int
    sub_len: int
    next_tx: int
    rri: int
    c_resel: int
    c_initial: int
    scis: int = 0


@dataclass
class Packet:
    gen_t: int
    ipt: int | None = None


class SensingWindow:
    """Decoded SCIs and per-subchannel RSSI behind ``now``, one instance per vehicle.

    RSSI is kept in a ring indexed by subframe; subframes with no stored row read as the
    noise floor (nothing was on the air). Own transmission subframes are unmonitored.
    """

    def __init__(self, window_ms: int, n_sub: int, noise_dbm: float = -100.4):
        self.window_ms = int(window_ms)
        self.n_sub = int(n_sub)
        self.noise_dbm = float(noise_dbm)
        self._rssi = np.full((self.window_ms, self.n_sub), self.noise_dbm)
        self._stamp = np.full(self.window_ms, -(1 << 60), dtype=np.int64)
        # decoded SCIs: subframe, sub_start, sub_len, rri, rsrp
        self._sci = []
        self.own_tx = []
        self.latest = -(1 << 60)

    def __len__(self):
        return len(self._sci) + int((self._stamp >= self.latest - self.window_ms + 1).sum())

    def _check_time(self, subframe: int, now: int | None):
        if now is not None and subframe > now:
            raise ValueError(f"sensing entry stamped {subframe} is in the future of {now}")

    def record_sci(self, subframe, sub_start, sub_len, rri, rsrp_dbm, now=None):
        self._check_time(subframe, now)
        self._sci.append((int(subframe), int(sub_start), int(sub_len), int(rri), float(rsrp_dbm)))
        self.latest = max(self.latest, int(subframe))

    def record_rssi(self, subframe, rssi_dbm_row, now=None):
        self._check_time(subframe, now)
        k = subframe % self.window_ms
        self._rssi[k] = rssi_dbm_row
        self._stamp[k] = subframe
        self.latest = max(self.latest, int(subframe))

    def record_own_tx(self, subframe, now=None):
        self._check_time(subframe, now)
        self.own_tx.append(int(subframe))
        self.latest = max(self.latest, int(subframe))

    def evict(self, now: int):
        lo = now - self.window_ms
        if self._sci and self._sci[0][0] < lo:
            self._sci = [e for e in self._sci if e[0] >= lo]
        if self.own_tx and self.own_tx[0] < lo:
            self.own_tx = [s for s in self.own_tx if s >= lo]

    def scis(self, now: int) -> np.ndarray:
        """(n, 5) decoded SCIs inside [now - window, now)."""
        lo = now - self.window_ms
        rows = [e for e in self._sci if lo <= e[0] < now]
        return np.array(rows, dtype=float).reshape(-1, 5)

    def own_tx_in_window(self, now: int) -> list[int]:
        lo = now - self.window_ms
        return [s for s in self.own_tx if lo <= s < now]

    def rssi_at(self, subframes: np.ndarray) -> np.ndarray:
        """(len, n_sub) RSSI in dBm; NaN where unmonitored or outside the window."""
        subframes = np.asarray(subframes, dtype=np.int64)
        k = subframes % self.window_ms
        out = np.where((self._stamp[k] == subframes)[:, None], self._rssi[k], self.noise_dbm)
        inside = subframes >= self.latest - self.window_ms + 1
        own = np.isin(subframes, np.array(self.own_tx, dtype=np.int64))
        out[~inside | own] = np.nan
        return out


def update_sensing(win: SensingWindow, now: int, scis=(), rssi_dbm=None, own_tx=False) -> None:
    """Append this subframe's measurements and evict entries older than the window."""
    for sf, start, length, rri, rsrp in scis:
        win.record_sci(sf, start, length, rri, rsrp, now=now)
    if own_tx:
        win.record_own_tx(now, now=now)
    elif rssi_dbm is not None:
        win.record_rssi(now, rssi_dbm, now=now)
    win.evict(now + 1)


@dataclass
class Selection:
    resource: SidelinkResource
    candidate_count: int
    total: int
    threshold_dbm: float
    mask: np.ndarray = field(repr=False)


def selection_bounds(now: int, rri: int, cfg: MacConfig) -> tuple[int, int]:
    t2 = min(cfg.t2, rri)
    lo, hi = now + cfg.t1, now + t2
    if hi < lo:
        raise ConfigurationError(f"empty selection window [{lo}, {hi}] for rri {rri}")
    return lo, hi


def select_resource(
    win: SensingWindow,
    now: int,
    rri: int,
    cfg: MacConfig,
    rng: np.random.Generator,
    n_subchannels: int,
    mode: str | None = None,
) -> Selection:
    """Pick a single-subframe resource in [now+T1, now+min(T2, rri)].

    Exclusion: subframes a half-duplex past transmission left unmonitored (projected at
    every allowed RRI), then resources a decoded SCI reserves one RRI ahead with RSRP
    above threshold. The threshold climbs in ``threshold_step_db`` until at least
    ``min_candidate_fraction`` of the candidates survive. NR modes pick uniformly;
    cv2x-sps keeps the lowest-RSSI fraction of the total and picks uniformly there.
    """
    mode = mode or cfg.scheduler
    width = cfg.subchannels_per_packet
    lo, hi = selection_bounds(now, rri, cfg)
    n_sf = hi - lo + 1
    n_pos = n_subchannels - width + 1
    if n_pos < 1:
        raise ConfigurationError("packet wider than the channel")
    total = n_sf * n_pos
    floor = cfg.min_candidate_fraction * total

    blocked = np.zeros(n_sf, dtype=np.uint8)
    for y in win.own_tx_in_window(now):
        for p in cfg.allowed_rri:
            o = y + p - lo
            if 0 <= o < n_sf:
                blocked[o] = 1
    if (n_sf - blocked.sum()) * n_pos < floor:
        blocked[:] = 0  # half-duplex exclusion alone may not breach the floor

    sci = win.scis(now)
    live = sci[:, 3] > 0 if len(sci) else np.zeros(0, dtype=bool)
    sci = sci[live]
    res_off = (sci[:, 0] + sci[:, 3]).astype(np.int64) - lo
    res_start = sci[:, 1].astype(np.int64)
    res_len = sci[:, 2].astype(np.int64)
    res_rsrp = np.ascontiguousarray(sci[:, 4])
    threshold = cfg.rsrp_threshold_dbm
    top = float(res_rsrp.max()) if len(res_rsrp) else threshold
    while True:
        mask = _kernels.candidate_mask(n_sf, n_pos, width, res_off, res_start, res_len, res_rsrp,
                                       threshold, blocked)
        count = int(mask.sum())
        if count >= floor or threshold >= top:
            break
        threshold += cfg.threshold_step_db
    cand = np.flatnonzero(mask.reshape(-1))
    if mode == "cv2x-sps":
        keep = max(1, math.ceil(cfg.min_candidate_fraction * total - 1e-9))
        if len(cand) > keep:
            score = _mean_rssi(win, lo, n_sf, n_pos, width)[cand]
            order = np.lexsort((cand, score))
            cand = cand[order[:keep]]
    pick = int(cand[rng.integers(len(cand))])
    o, p = divmod(pick, n_pos)
    return Selection(SidelinkResource(lo + o, p, width), count, total, threshold, mask)


def _mean_rssi(win: SensingWindow, lo: int, n_sf: int, n_pos: int, width: int) -> np.ndarray:
    """Flattened (n_sf * n_pos) mean RSSI over the sensed subframes s - 100 j."""
    periods = max(1, win.window_ms // 100)
    sf = lo + np.arange(n_sf)
    past = sf[:, None] - 100 * np.arange(1, periods + 1)[None, :]
    rssi = win.rssi_at(past.reshape(-1)).reshape(n_sf, periods, win.n_sub)
    lin = np.power(10.0, rssi / 10.0)
    per_pos = np.stack([lin[:, :, p : p + width].mean(axis=2) for p in range(n_pos)], axis=2)
    with np.errstate(invalid="ignore"):
        mean = np.nanmean(per_pos, axis=1) if periods else per_pos[:, 0]
    mean = np.where(np.isnan(mean), np.power(10.0, win.noise_dbm / 10.0), mean)
    return mean.reshape(-1)


def draw_c_resel(cfg: MacConfig, rng: np.random.Generator) -> int:
    return int(rng.integers(cfg.c_resel_min, cfg.c_resel_max + 1))


def create_grant(win, now, rri, cfg: MacConfig, rng, n_subchannels, grant_id=0, mode=None):
    """New persistent grant; returns (Grant, Selection)."""
    sel = select_resource(win, now, rri, cfg, rng, n_subchannels, mode)
    c = draw_c_resel(cfg, rng)
    r = sel.resource
    return Grant(grant_id, r.sub_start, r.sub_len, r.subframe, rri, c, c), sel


@dataclass
class TxAction:
    """What a grant did at one opportunity."""

    kind: str  # "tx" | "miss"
    sci: Sci | None = None
    packet: Packet | None = None
    ended: str | None = None  # reason the grant ended here, if it did


def on_tx_opportunity(grant: Grant, queue: list, now: int, cfg: MacConfig, rng,
                      sender: int = 0, next_rri: int | None = None) -> TxAction:
    """Serve ``grant`` at ``now == grant.next_tx``.

    ``queue`` is the (depth-1) packet list and is consumed on transmission. ``next_rri``
    is the reservation to advertise instead of the grant's current one (predicted RRI).
    """
    if now != grant.next_tx:
        raise ValueError(f"opportunity at {now} but grant is due at {grant.next_tx}")
    grant.c_resel -= 1
    if queue:
        pkt = queue.pop()
        rri = grant.rri if next_rri is None else int(next_rri)
        ended = None
        if grant.c_resel <= 0:
            if cfg.keep_probability > 0 and rng.random() < cfg.keep_probability:
                grant.c_resel = draw_c_resel(cfg, rng)
            else:
                rri = 0
                ended = "expired"
        res = SidelinkResource(now, grant.sub_start, grant.sub_len)
        sci = Sci(sender, rri, res)
        grant.scis += 1
        if rri:
            inject_predicted_rri(grant, rri, now)
        return TxAction("tx", sci, pkt, ended)
    if cfg.grant_breaking:
        return TxAction("miss", ended="break")
    grant.next_tx = now + grant.rri
    return TxAction("miss", ended="expired-silent" if grant.c_resel <= 0 else None)


def inject_predicted_rri(grant: Grant, rri: int, now: int) -> Grant:
    """Move the next reservation to ``now + rri`` on the same subchannels; c_resel untouched."""
    grant.rri = int(rri)
    grant.next_tx = now + int(rri)
    return grant


def dynamic_grant_tx(win, now, cfg: MacConfig, rng, n_subchannels, sender=0, mode="nr-dynamic"):
    """One-shot resource for one packet; its SCI reserves nothing ahead."""
    sel = select_resource(win, now, cfg.t2, cfg, rng, n_subchannels, mode)
    return Sci(sender, 0, sel.resource), sel
