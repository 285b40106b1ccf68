"""Deterministic subframe-stepped simulation of the sidelink scheduler."""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from .cam import (
    CAUSE_CODE,
    CamEvent,
    CamThresholds,
    generate_cam_stream,
    generate_periodic_stream,
    hybrid_assignment,
)
from .config import ScenarioConfig
from .eventlog import GRANT_REASONS, HOOKS, EventLog
from .mac import (
    Grant,
    Packet,
    SensingWindow,
    create_grant,
    dynamic_grant_tx,
    on_tx_opportunity,
)
from .mobility import ConfigurationError, Trace, TraceSet
from .phy import TxRecord, mw_to_db, noise_floor, resolve_subframe
from .predictor import (
    GruModels,
    GruPredictor,
    MeanIptPredictor,
    OraclePredictor,
    PeriodicPredictor,
    Predictor,
    map_ipt_to_rri,
)

REASON = {name: i for i, name in enumerate(GRANT_REASONS)}
HOOK = {name: i for i, name in enumerate(HOOKS)}


def thresholds_of(cfg: ScenarioConfig) -> CamThresholds:
    a = cfg.app
    return CamThresholds(a.position_m, a.heading_deg, a.speed_mps, 1000, a.strict_thresholds)


def etsi_streams(cfg: ScenarioConfig, traces) -> dict:
    th = thresholds_of(cfg)
    return {tr.vehicle: generate_cam_stream(tr, th, cfg.app.packet_bytes) for tr in traces}


def pooled_mean_ipt(streams: dict, start: int, end: int) -> float | None:
    ipts = [e.ipt for evs in streams.values() for e in evs if e.ipt is not None and start <= e.t < end]
    return float(np.mean(ipts)) if ipts else None


def resolve_period(cfg: ScenarioConfig, etsi: dict) -> int:
    """Period of the periodic traffic: configured, else the ETSI mean rounded to an RRI."""
    if cfg.app.period_ms is not None:
        return cfg.app.period_ms
    mean = pooled_mean_ipt(etsi, 0, cfg.duration_ms)
    return map_ipt_to_rri(mean if mean is not None else 1000, cfg.mac.allowed_rri)


def build_streams(cfg: ScenarioConfig, traces) -> tuple[dict, dict, int | None]:
    """Per-vehicle application streams, periodic flags and the periodic period used."""
    etsi = etsi_streams(cfg, traces)
    ids = [tr.vehicle for tr in traces]
    mode = cfg.app.traffic
    if mode == "etsi":
        return etsi, {v: False for v in ids}, None
    period = resolve_period(cfg, etsi)
    if mode == "periodic":
        flags = {v: True for v in ids}
    else:
        flags = hybrid_assignment(ids, cfg.app.periodic_fraction)
    streams = {}
    # phases come from their own generator so the channel and vehicle streams are untouched;
    # without them every trace start falls in the same 100 ms slot
    phases = np.random.default_rng([cfg.seed, 1]).integers(0, period, size=len(traces))
    for tr, ph in zip(traces, phases):
        if flags[tr.vehicle]:
            streams[tr.vehicle] = generate_periodic_stream(tr, period, cfg.mac.allowed_rri,
                                                           cfg.app.packet_bytes, int(ph))
        else:
            streams[tr.vehicle] = etsi[tr.vehicle]
    return streams, flags, period


def make_predictor(cfg: ScenarioConfig, traces, streams: dict, period: int | None) -> Predictor | None:
    kind = cfg.predictor.kind
    if kind == "none":
        return None
    if kind == "periodic":
        p = cfg.predictor.period_ms or period or cfg.mac.rri_ms
        return PeriodicPredictor(p)
    if kind == "mean-ipt":
        mean = pooled_mean_ipt(streams, 0, cfg.duration_ms)
        return MeanIptPredictor(mean if mean is not None else 1000, cfg.mac.allowed_rri)
    if kind == "oracle":
        return OraclePredictor(streams)
    if kind == "gru":
        if not cfg.predictor.weights_dir:
            raise ConfigurationError("predictor.kind = gru needs predictor.weights_dir")
        models = GruModels.load(cfg.predictor.weights_dir, cfg.predictor.max_speed)
        return GruPredictor(models, traces, streams, thresholds_of(cfg), (0, cfg.duration_ms))
    raise ConfigurationError(f"unknown predictor {kind!r}")


@dataclass
class _Vehicle:
    vid: int
    row: int
    rng: np.random.Generator
    win: SensingWindow
    dynamic: bool
    base_rri: int
    grant: Grant | None = None
    queue: list = None
    pending: tuple | None = None  # dynamic grant: (subframe, Sci)


@dataclass
class RunResult:
    log: EventLog
    config: ScenarioConfig
    streams: dict
    periodic: dict
    period: int | None
    metrics: object = None


class Simulation:
    """Advances all vehicles one 1 ms subframe at a time.

    Each subframe fires, in order: mobility sampling, CAM arrivals, MAC grant work,
    PHY reception, sensing updates. With ``config.log_hooks`` every hook is logged.
    """

    def __init__(self, config: ScenarioConfig, traces, predictor: Predictor | None = None,
                 streams: dict | None = None, periodic: dict | None = None, period: int | None = None):
        cfg = config.validate()
        self.cfg = cfg
        traces = sorted(traces, key=lambda tr: tr.vehicle)
        for tr in traces:
            if not tr.covers(0, cfg.duration_ms):
                raise ConfigurationError(
                    f"trace of vehicle {tr.vehicle} covers [{tr.t0}, {tr.t_end}], needs [0, {cfg.duration_ms}]"
                )
        self.traces = traces
        self.tset = TraceSet(traces)
        if streams is None:
            streams, periodic, period = build_streams(cfg, traces)
        elif periodic is None:
            periodic = {tr.vehicle: False for tr in traces}
        self.streams, self.periodic, self.period = streams, periodic, period
        if predictor is None:
            predictor = make_predictor(cfg, traces, streams, period)
        self.predictor = predictor
        self.log = EventLog()
        self.now = 0
        ss = np.random.SeedSequence(cfg.seed)
        children = ss.spawn(len(traces) + 1)
        self.channel_rng = np.random.default_rng(children[0])
        n_sub = cfg.channel.subchannels
        nf = float(noise_floor(cfg.channel.subchannel_hz, cfg.phy.noise_figure_db))
        self.noise_dbm = nf
        dyn_sched = cfg.mac.scheduler == "nr-dynamic"
        self.vehicles = []
        for row, tr in enumerate(traces):
            is_periodic = periodic.get(tr.vehicle, False)
            dynamic = dyn_sched and not (
                cfg.app.traffic == "hybrid" and cfg.mac.hybrid_grant == "mixed" and is_periodic
            )
            base = period if (is_periodic and period is not None) else cfg.mac.rri_ms
            self.vehicles.append(_Vehicle(
                tr.vehicle, row, np.random.default_rng(children[row + 1]),
                SensingWindow(cfg.mac.window_ms, n_sub, nf), dynamic, base, None, [],
            ))
        self.ids = np.array([v.vid for v in self.vehicles], dtype=np.int64)
        self.arrivals = defaultdict(list)
        for v in self.vehicles:
            for e in streams.get(v.vid, []):
                if 0 <= e.t < cfg.duration_ms:
                    self.arrivals[e.t].append((v, e))
        self.due = defaultdict(list)
        self.need_grant = []
        self._grant_seq = 0
        self._tx_seq = 0
        # SB-SPS vehicles that hold periodic traffic in a hybrid run use their period
        self._sps_mode = "nr-sps" if dyn_sched else cfg.mac.scheduler

    # hooks -----------------------------------------------------------------
    def _hook(self, name):
        if self.cfg.log_hooks:
            self.log.add("hook", self.now, HOOK[name])

    def _on_cam(self):
        for v, e in self.arrivals.pop(self.now, ()):
            self.log.add("cam", v.vid, e.t, CAUSE_CODE[e.trigger_cause], -1 if e.ipt is None else e.ipt)
            if v.queue:
                self.log.add("drop", v.vid, self.now, v.queue[0][0].gen_t)
            v.queue[:] = [(Packet(e.t, e.ipt), e)]
            if v.dynamic:
                if v.pending is None:
                    self.need_grant.append(v)
            elif v.grant is None:
                self.need_grant.append(v)

    def _rri_for(self, v: _Vehicle, event: CamEvent) -> int:
        if self.periodic.get(v.vid) and self.period:
            return v.base_rri
        if self.predictor is None:
            return v.grant.rri
        pred = self.predictor.predict(v.vid, event)
        rri = map_ipt_to_rri(pred.predicted_ipt, self.cfg.mac.allowed_rri)
        self.log.add("predict", v.vid, self.now, event.t, pred.predicted_ipt, rri, int(pred.cold))
        return rri

    def _on_mac(self):
        cfg = self.cfg
        n_sub = cfg.channel.subchannels
        txs = []
        for v in self.need_grant:
            if v.dynamic:
                if v.pending is None and v.queue:
                    sci, sel = dynamic_grant_tx(v.win, self.now, cfg.mac, v.rng, n_sub, v.vid)
                    v.pending = (sel.resource.subframe, sci)
                    self.due[sel.resource.subframe].append(v)
            elif v.grant is None and v.queue:
                grant, sel = create_grant(v.win, self.now, v.base_rri, cfg.mac, v.rng, n_sub,
                                          self._grant_seq, self._sps_mode)
                self._grant_seq += 1
                v.grant = grant
                self.log.add("grant", v.vid, self.now, grant.grant_id, 0, REASON["create"], grant.rri,
                             grant.c_resel, grant.sub_start, sel.candidate_count, sel.total)
                self.due[grant.next_tx].append(v)
        self.need_grant = []
        for v in self.due.pop(self.now, ()):
            if v.dynamic:
                sf, sci = v.pending
                v.pending = None
                pkt, _ = v.queue.pop()
                txs.append(self._emit(v, sci.reserved_resource.sub_start, sci.reserved_resource.sub_len,
                                      0, -1, pkt, True))
                continue
            g = v.grant
            next_rri = self._rri_for(v, v.queue[0][1]) if v.queue else None
            queue = [q[0] for q in v.queue]
            act = on_tx_opportunity(g, queue, self.now, cfg.mac, v.rng, v.vid, next_rri)
            if act.kind == "tx":
                v.queue.clear()
                txs.append(self._emit(v, g.sub_start, g.sub_len, act.sci.rri, g.grant_id, act.packet, False))
            else:
                self.log.add("miss", v.vid, self.now, g.grant_id)
            if act.ended is not None:
                self.log.add("grant", v.vid, self.now, g.grant_id, 1, REASON[act.ended], g.rri,
                             g.c_resel, g.sub_start, -1, -1)
                v.grant = None
                if v.queue:
                    self.need_grant.append(v)
            else:
                self.due[g.next_tx].append(v)
        return txs

    def _emit(self, v, sub_start, sub_len, rri, grant_id, pkt, dynamic):
        x, y = self._positions()[v.row]
        tid = self._tx_seq
        self._tx_seq += 1
        self.log.add("tx", tid, v.vid, self.now, sub_start, sub_len, rri, grant_id, pkt.gen_t,
                     float(x), float(y), int(dynamic))
        return tid, v, TxRecord(v.vid, sub_start, sub_len, float(x), float(y)), rri

    def _positions(self):
        if self._pos_t != self.now:
            self._pos = self.tset.positions(self.now)
            self._pos_t = self.now
        return self._pos

    def _on_phy(self, txs):
        if not txs:
            return None
        res = resolve_subframe([t[2] for t in txs], self._positions(), self.ids, self.cfg.channel,
                               self.cfg.phy, self.channel_rng)
        tids = np.array([t[0] for t in txs], dtype=np.int64)
        self.log.add_block(
            "rx", tx_id=tids[res.tx_index], receiver=self.ids[res.receiver], distance=res.distance,
            decoded=res.decoded.astype(np.int8), cause=res.cause, sinr=res.sinr_db, rsrp=res.rsrp_dbm,
        )
        return res

    def _on_sensing(self, txs, res):
        if res is None:
            if self.now % 100 == 0:
                for v in self.vehicles:
                    v.win.evict(self.now + 1)
            return
        rssi_db = mw_to_db(res.rssi_mw)
        senders = {t[1].row for t in txs}
        by_rx = defaultdict(list)
        for k, j, ok, p in zip(res.tx_index.tolist(), res.receiver.tolist(), res.decoded.tolist(),
                               res.rsrp_dbm.tolist()):
            if ok:
                _, _, rec, rri = txs[k]
                by_rx[j].append((self.now, rec.sub_start, rec.sub_len, rri, p))
        for v in self.vehicles:
            if v.row in senders:
                v.win.record_own_tx(self.now, now=self.now)
            else:
                v.win.record_rssi(self.now, rssi_db[v.row], now=self.now)
                for entry in by_rx.get(v.row, ()):
                    v.win.record_sci(*entry, now=self.now)
            if self.now % 100 == 0:
                v.win.evict(self.now + 1)

    # clock -------------------------------------------------------------------
    _pos_t = -1
    _pos = None

    def advance_clock(self) -> int:
        """Run every hook of the current subframe, then move to the next one."""
        self._hook("mobility")
        self._hook("cam")
        self._on_cam()
        self._hook("mac")
        txs = self._on_mac()
        self._hook("phy")
        res = self._on_phy(txs)
        self._hook("sensing")
        self._on_sensing(txs, res)
        self.now += 1
        return self.now

    def finish(self):
        for v in self.vehicles:
            g = v.grant
            if g is not None:
                self.log.add("grant", v.vid, self.now, g.grant_id, 1, REASON["end-of-run"], g.rri,
                             g.c_resel, g.sub_start, -1, -1)
                v.grant = None

    def run(self) -> RunResult:
        while self.now < self.cfg.duration_ms:
            self.advance_clock()
        self.finish()
        from .metrics import compute_metrics

        result = RunResult(self.log, self.cfg, self.streams, self.periodic, self.period)
        result.metrics = compute_metrics(self.log)
        return result


def run(config: ScenarioConfig, traces, predictor: Predictor | None = None, **kwargs) -> RunResult:
    """Simulate ``config`` over ``traces`` and return the event log with metrics."""
    return Simulation(config, traces, predictor, **kwargs).run()
