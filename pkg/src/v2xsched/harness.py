"""Scenario presets, the comparison matrix and offline predictor evaluation."""
from __future__ import annotations

import copy
import csv
import logging
import os
from dataclasses import dataclass, field, replace

import numpy as np

from . import sim
from .cam import generate_cam_stream
from .config import ScenarioConfig
from .gru.dataset import HISTORY_STEPS
from .metrics import (
    MetricsBundle,
    confusion_from_pairs,
    pdr_by_distance,
    write_pdr_csv,
    write_summary_csv,
)
from .mobility import GRID_MS, ConfigurationError, gen_curved_highway, gen_straight_highway, import_trace
from .predictor import GruModels, GruPredictor, OraclePredictor, map_ipt_to_rri

log = logging.getLogger(__name__)

MATRIX_CONFIGS = ("periodic", "default-no-gb", "mean-ipt", "predicted-ipt", "oracle")
# traces run past the simulated span so the oracle knows the IPT after the last CAM
TRACE_MARGIN_MS = 2000


@dataclass
class Scenario:
    """Mobility recipe; the run seed drives start phases and jitter."""

    kind: str = "straight"  # straight | curved | import
    lanes: int = 2
    vehicles: int = 20  # total
    speeds: tuple = (20.0, 25.0)
    spacing: float = 50.0
    directions: tuple | None = None
    radius: float = 22.0
    arc_angle: float = 90.0
    straight_length: float = 120.0
    speed_jitter: float = 0.0
    history_ms: int = 0
    trace_path: str | None = None
    extra: dict = field(default_factory=dict)

    def traces(self, duration_ms: int, seed: int = 0):
        span = duration_ms + TRACE_MARGIN_MS
        if self.kind == "straight":
            if self.vehicles % self.lanes:
                raise ConfigurationError("straight scenario needs vehicles divisible by lanes")
            return gen_straight_highway(
                self.lanes, self.vehicles // self.lanes, self.spacing, list(self.speeds), span, seed,
                directions=self.directions, history_ms=self.history_ms, phase_jitter=True,
                **self.extra,
            )
        if self.kind == "curved":
            return gen_curved_highway(
                self.radius, self.arc_angle, self.lanes, self.vehicles, list(self.speeds), span, seed,
                straight_length=self.straight_length, spacing=self.spacing,
                speed_jitter=self.speed_jitter, history_ms=self.history_ms, phase_jitter=True,
                start_jitter=True, **self.extra,
            )
        if self.kind == "import":
            if not self.trace_path:
                raise ConfigurationError("import scenario needs trace_path")
            return import_trace(self.trace_path)
        raise ConfigurationError(f"unknown scenario kind {self.kind!r}")


# Desk-scale defaults: 20 vehicles on 2 straight lanes, 30 on the curved road.
# 15 and 16 m/s both cross 4 m within 300 ms, the highway CAM rate of the comparison.
STRAIGHT = Scenario("straight", 2, 20, (15.0, 16.0), 50.0)
# denser straight variant where reservation waste shows up as collisions
STRAIGHT_DENSE = Scenario("straight", 2, 40, (15.0, 16.0), 25.0)
# 22 m arcs at 11 m/s turn 28.6 deg/s (200 ms heading triggers); the 120 m straights
# give 400 ms position triggers
CURVED = Scenario("curved", 2, 30, (11.0, 11.0), 30.0, speed_jitter=0.5, history_ms=60_000)
SCENARIOS = {"straight": STRAIGHT, "straight-dense": STRAIGHT_DENSE, "curved": CURVED}


def matrix_base(duration_ms: int = 10_000, seed: int = 0) -> ScenarioConfig:
    """NR-V2X SB-SPS with random selection among candidates, as in the comparison."""
    cfg = ScenarioConfig(duration_ms=duration_ms, seed=seed)
    cfg.mac.scheduler = "nr-sps"
    return cfg


def matrix_config(name: str, base: ScenarioConfig, weights_dir: str | None = None) -> ScenarioConfig:
    """Config of one matrix column. All columns share the base seed and channel."""
    cfg = copy.deepcopy(base)
    if name == "periodic":
        cfg.app.traffic = "periodic"
        cfg.predictor.kind = "none"
    elif name == "default-no-gb":
        cfg.app.traffic = "etsi"
        cfg.mac.grant_breaking = False
        cfg.predictor.kind = "none"
    elif name == "mean-ipt":
        cfg.app.traffic = "etsi"
        cfg.predictor.kind = "mean-ipt"
    elif name == "predicted-ipt":
        cfg.app.traffic = "etsi"
        cfg.predictor.kind = "gru"
        cfg.predictor.weights_dir = weights_dir
    elif name == "oracle":
        cfg.app.traffic = "etsi"
        cfg.predictor.kind = "oracle"
    else:
        raise ConfigurationError(f"unknown matrix config {name!r}")
    return cfg


def weights_available(weights_dir: str | None) -> bool:
    return bool(weights_dir) and all(
        os.path.exists(os.path.join(weights_dir, f"{n}.gru")) for n in ("speed", "sine", "cosine")
    )


@dataclass
class MatrixResult:
    bundles: dict  # config -> [MetricsBundle per seed]
    skipped: list

    def mean(self, config: str, attr: str = "delta_col") -> float:
        return float(np.mean([getattr(b, attr) for b in self.bundles[config]]))

    def mean_pdr(self, config: str) -> dict:
        """Bin -> PDR of the pooled delivered/expected counts over seeds."""
        bs = self.bundles[config]
        dl = np.sum([b.pdr.delivered for b in bs], axis=0)
        ex = np.sum([b.pdr.expected for b in bs], axis=0)
        edges, w = bs[0].pdr.edges, bs[0].pdr.width
        return {(float(lo), float(lo + w)): dl[k] / ex[k] for k, lo in enumerate(edges) if ex[k] > 0}


def run_matrix(scenario: Scenario, configs=MATRIX_CONFIGS, seeds=(0,), base: ScenarioConfig | None = None,
               weights_dir: str | None = None, out_dir: str | None = None, pdr_bin: float = 50.0,
               traces_by_seed: dict | None = None) -> MatrixResult:
    """Run every config per seed on identical traces and channel seed.

    Writes ``<out>/<config>/seed<k>/`` CSVs and ``<out>/comparison.csv`` when ``out_dir`` is set.
    """
    base = base if base is not None else matrix_base()
    configs = list(configs)
    skipped = []
    if "predicted-ipt" in configs and not weights_available(weights_dir):
        log.warning("GRU weights not found in %r; skipping predicted-ipt", weights_dir)
        configs.remove("predicted-ipt")
        skipped.append("predicted-ipt")
    bundles = {c: [] for c in configs}
    for seed in seeds:
        cfg_seed = replace(base, seed=seed)
        traces = (traces_by_seed or {}).get(seed) or scenario.traces(base.duration_ms, seed)
        for name in configs:
            cfg = matrix_config(name, cfg_seed, weights_dir)
            res = sim.run(cfg, traces)
            m = res.metrics
            if pdr_bin != m.pdr.width:
                m.pdr = pdr_by_distance(res.log, pdr_bin)
            bundles[name].append(m)
            if out_dir:
                d = os.path.join(out_dir, name, f"seed{seed}")
                os.makedirs(d, exist_ok=True)
                write_bundle(m, d)
    result = MatrixResult(bundles, skipped)
    if out_dir:
        write_comparison(result, os.path.join(out_dir, "comparison.csv"))
    return result


def write_bundle(m: MetricsBundle, directory: str) -> None:
    os.makedirs(directory, exist_ok=True)
    write_pdr_csv(m.pdr, os.path.join(directory, "pdr.csv"))
    write_summary_csv({"run": m.summary_row()}, os.path.join(directory, "summary.csv"))
    m.confusion.write_csv(os.path.join(directory, "confusion.csv"))


def write_comparison(result: MatrixResult, path: str) -> None:
    """One row per config: seed means of the summary columns, then pooled PDR per bin."""
    rows = {}
    for name, bs in result.bundles.items():
        if not bs:
            continue
        keys = list(bs[0].summary_row())
        row = {k: float(np.mean([b.summary_row()[k] for b in bs])) for k in keys}
        row["seeds"] = len(bs)
        for (lo, hi), v in result.mean_pdr(name).items():
            row[f"pdr_{int(lo)}_{int(hi)}"] = float(v)
        rows[name] = row
    allkeys = []
    for r in rows.values():
        allkeys += [k for k in r if k not in allkeys]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["config"] + allkeys)
        for name, r in rows.items():
            w.writerow([name] + [repr(r[k]) if k in r else "" for k in allkeys])


@dataclass
class PredictEval:
    predicted: np.ndarray  # advertised RRI per CAM
    actual: np.ndarray  # true next IPT
    confusion: object

    @property
    def accuracy(self) -> float:
        return self.confusion.accuracy


def predict_eval(traces, kind: str = "gru", weights_dir: str | None = None, base: ScenarioConfig | None = None,
                 warm_only: bool = True) -> PredictEval:
    """Offline per-CAM accuracy: predicted RRI against the true next IPT of the ETSI stream.

    CAM events without a full 600-sample history are skipped when ``warm_only``.
    """
    base = base if base is not None else ScenarioConfig()
    th = sim.thresholds_of(base)
    allowed = base.mac.allowed_rri
    streams = {tr.vehicle: generate_cam_stream(tr, th, base.app.packet_bytes) for tr in traces}
    if kind == "oracle":
        pred = OraclePredictor(streams)
    elif kind == "gru":
        if not weights_available(weights_dir):
            raise ConfigurationError(f"GRU weights not found in {weights_dir!r}")
        pred = GruPredictor(GruModels.load(weights_dir), traces, streams, th)
    else:
        raise ConfigurationError(f"predict-eval supports gru and oracle, not {kind!r}")
    by_id = {tr.vehicle: tr for tr in traces}
    p, a = [], []
    for vid, evs in streams.items():
        t0 = by_id[vid].t0
        for e, nxt in zip(evs, evs[1:]):
            if warm_only and (e.t - t0) // GRID_MS + 1 < HISTORY_STEPS:
                continue
            p.append(map_ipt_to_rri(pred.predict(vid, e).predicted_ipt, allowed))
            a.append(nxt.t - e.t)
    p, a = np.array(p, dtype=np.int64), np.array(a, dtype=np.int64)
    return PredictEval(p, a, confusion_from_pairs(p, a, allowed))


# Training corpus: the curved road with a wider speed spread than the simulated scenario.
TRAINING_SCENARIO = Scenario("curved", 2, 60, (11.0, 11.0), 30.0, speed_jitter=0.5)
TRAINING_DURATION_MS = 200_000
DEFAULT_BUDGET_S = {"speed": 120.0, "sine": 480.0, "cosine": 480.0}


def training_traces(seed: int = 1, scenario: Scenario = TRAINING_SCENARIO,
                    duration_ms: int = TRAINING_DURATION_MS):
    return scenario.traces(duration_ms - TRACE_MARGIN_MS, seed)


@dataclass
class TrainReport:
    models: dict
    test_mse: dict
    sequences: int
    seconds: dict


def train_predictors(traces, out_dir: str | None = None, *, seed: int = 0, budgets: dict | None = None,
                     epochs: int = 100, batch: int = 64, lr: float = 2e-3, bptt_steps: int | None = 100,
                     max_sequences: int | None = None, single_feature: bool = False,
                     progress=None) -> TrainReport:
    """Train the speed, sine and cosine models on windows of ``traces``; save if ``out_dir``.

    ``single_feature`` feeds each model only its own target feature instead of all three.
    """
    from .gru import build_dataset, build_model, heldout_mse, save_model, train
    from .gru.dataset import write_index

    budgets = {**DEFAULT_BUDGET_S, **(budgets or {})}
    ds = build_dataset(traces, seed, max_sequences=max_sequences)
    models, mse, secs = {}, {}, {}
    for name in ("speed", "sine", "cosine"):
        m = build_model(name, input_dim=1 if single_feature else 3, seed=seed)
        m, hist = train(m, ds[name], epochs=epochs, batch=batch, lr=lr, seed=seed,
                        time_budget_s=budgets.get(name), bptt_steps=bptt_steps, progress=progress)
        models[name], mse[name], secs[name] = m, heldout_mse(m, ds[name]), hist.seconds
        if out_dir:
            os.makedirs(out_dir, exist_ok=True)
            save_model(m, os.path.join(out_dir, f"{name}.gru"))
    if out_dir:
        write_index(ds["speed"], os.path.join(out_dir, "sequences.csv"))
        with open(os.path.join(out_dir, "mse.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["model", "test_mse", "seconds", "sequences"])
            for name in models:
                w.writerow([name, repr(mse[name]), repr(secs[name]), len(ds[name])])
    return TrainReport(models, mse, len(ds["speed"]), secs)
