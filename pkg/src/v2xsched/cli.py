"""Command line entry point: ``v2xsched <verb> [options]``.

Outputs go under ``--out``, else ``$V2XSCHED_OUT``, else ``./v2xsched-out``.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace

from . import harness, sim
from .config import ScenarioConfig, dump_config, load_config, set_key
from .mobility import ConfigurationError, TraceParseError, export_trace, import_trace

OUT_ENV = "V2XSCHED_OUT"


def _out_dir(args) -> str:
    d = args.out or os.environ.get(OUT_ENV) or "v2xsched-out"
    os.makedirs(d, exist_ok=True)
    return d


def _config(args) -> ScenarioConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else ScenarioConfig()
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise ConfigurationError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        set_key(cfg, k.strip(), v.strip())
    return cfg.validate()


def _scenario(args) -> harness.Scenario:
    if getattr(args, "traces", None):
        return harness.Scenario("import", trace_path=args.traces)
    sc = harness.SCENARIOS[args.scenario]
    if getattr(args, "vehicles", None):
        sc = replace(sc, vehicles=args.vehicles)
    return sc


def _scenario_traces(args, cfg: ScenarioConfig):
    return _scenario(args).traces(cfg.duration_ms, cfg.seed)


def cmd_simulate(args):
    cfg = _config(args)
    out = _out_dir(args)
    traces = _scenario_traces(args, cfg)
    res = sim.run(cfg, traces)
    res.log.write_csv(os.path.join(out, "log"))
    harness.write_bundle(res.metrics, out)
    with open(os.path.join(out, "scenario.cfg"), "w") as fh:
        fh.write(dump_config(cfg))
    row = res.metrics.summary_row()
    print(" ".join(f"{k}={v:.4g}" if isinstance(v, float) else f"{k}={v}" for k, v in row.items()))
    return 0


def cmd_matrix(args):
    base = harness.matrix_base(args.duration)
    if args.config or args.set:
        base = _config(args)
    out = _out_dir(args)
    configs = args.configs.split(",") if args.configs else list(harness.MATRIX_CONFIGS)
    res = harness.run_matrix(_scenario(args), configs, seeds=range(args.seeds), base=base,
                             weights_dir=args.weights, out_dir=out, pdr_bin=args.bin)
    for name in res.bundles:
        print(f"{name}: delta_col={res.mean(name):.1f} misses={res.mean(name, 'misses'):.1f}")
    for name in res.skipped:
        print(f"{name}: skipped")
    return 0


def cmd_build_dataset(args):
    from .gru import build_dataset
    from .gru.dataset import write_index

    out = _out_dir(args)
    traces = import_trace(args.traces) if args.traces else harness.training_traces(args.seed)
    ds = build_dataset(traces, args.seed, max_sequences=args.max_sequences)
    export_trace(traces, os.path.join(out, "traces.csv"))
    write_index(ds["speed"], os.path.join(out, "sequences.csv"))
    sizes = {k: len(v) for k, v in ds["speed"].split.items()}
    print(f"sequences={len(ds['speed'])} " + " ".join(f"{k}={v}" for k, v in sizes.items()))
    return 0


def cmd_train(args):
    out = _out_dir(args)
    traces = import_trace(args.traces) if args.traces else harness.training_traces(args.seed)
    budgets = {n: args.budget * f for n, f in (("speed", 0.25), ("sine", 1.0), ("cosine", 1.0))} if args.budget else None
    rep = harness.train_predictors(
        traces, out, seed=args.seed, budgets=budgets, epochs=args.epochs, lr=args.lr,
        bptt_steps=args.bptt or None, max_sequences=args.max_sequences,
        single_feature=args.single_feature,
        progress=lambda n, e, t, v, s: print(f"{n} epoch {e} train {t:.3g} val {v:.3g} {s:.0f}s", flush=True),
    )
    for name, mse in rep.test_mse.items():
        print(f"{name}: test_mse={mse:.4g}")
    return 0


def cmd_predict_eval(args):
    out = _out_dir(args)
    if args.traces:
        traces = import_trace(args.traces)
    else:
        traces = harness.CURVED.traces(args.duration, args.seed)
    ev = harness.predict_eval(traces, args.predictor, args.weights)
    ev.confusion.write_csv(os.path.join(out, f"confusion_{args.predictor}.csv"))
    print(f"{args.predictor}: accuracy={ev.accuracy:.4f} predictions={len(ev.predicted)}")
    return 0


def cmd_grad_check(args):
    from .gru import grad_check, small_problem

    model, X, Y = small_problem(args.seed, hidden=args.hidden, steps=args.steps)
    err = grad_check(model, X, Y, eps=args.eps)
    ok = err <= args.tol
    print(f"max_relative_error={err:.3e} {'ok' if ok else 'FAIL'}")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="v2xsched", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="verb", required=True)

    def common(sp, scenario=True):
        sp.add_argument("--out", help=f"output directory (default ${OUT_ENV})")
        if scenario:
            sp.add_argument("--config", help="scenario config file (key = value lines)")
            sp.add_argument("--set", action="append", metavar="KEY=VALUE",
                            help="override a config key, e.g. mac.scheduler=nr-sps")
            sp.add_argument("--scenario", choices=sorted(harness.SCENARIOS), default="straight")
            sp.add_argument("--traces", help="trace CSV to use instead of a generated scenario")
            sp.add_argument("--vehicles", type=int)

    sp = sub.add_parser("simulate", help="run one scenario, write log and metrics CSVs")
    common(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("matrix", help="compare periodic, default, mean-ipt, predicted-ipt, oracle")
    common(sp)
    sp.add_argument("--seeds", type=int, default=5)
    sp.add_argument("--duration", type=int, default=10_000)
    sp.add_argument("--configs", help="comma separated subset of " + ",".join(harness.MATRIX_CONFIGS))
    sp.add_argument("--weights", help="directory with speed.gru, sine.gru, cosine.gru")
    sp.add_argument("--bin", type=float, default=50.0)
    sp.set_defaults(func=cmd_matrix)

    sp = sub.add_parser("build-dataset", help="export training traces and the sequence index")
    common(sp, scenario=False)
    sp.add_argument("--traces")
    sp.add_argument("--seed", type=int, default=1)
    sp.add_argument("--max-sequences", type=int)
    sp.set_defaults(func=cmd_build_dataset)

    sp = sub.add_parser("train", help="train the three predictor models")
    common(sp, scenario=False)
    sp.add_argument("--traces")
    sp.add_argument("--seed", type=int, default=1)
    sp.add_argument("--epochs", type=int, default=100)
    sp.add_argument("--lr", type=float, default=2e-3)
    sp.add_argument("--bptt", type=int, default=100, help="truncate BPTT to this many steps; 0 is exact")
    sp.add_argument("--budget", type=float, help="seconds per heading model; speed gets a quarter")
    sp.add_argument("--max-sequences", type=int)
    sp.add_argument("--single-feature", action="store_true", help="each model sees only its own feature")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("predict-eval", help="offline RRI accuracy and confusion matrix")
    common(sp, scenario=False)
    sp.add_argument("--traces")
    sp.add_argument("--predictor", choices=("gru", "oracle"), default="gru")
    sp.add_argument("--weights")
    sp.add_argument("--seed", type=int, default=77)
    sp.add_argument("--duration", type=int, default=120_000)
    sp.set_defaults(func=cmd_predict_eval)

    sp = sub.add_parser("grad-check", help="finite-difference check of GRU backpropagation")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--hidden", type=int, default=4)
    sp.add_argument("--steps", type=int, default=20)
    sp.add_argument("--eps", type=float, default=1e-5)
    sp.add_argument("--tol", type=float, default=1e-4)
    sp.set_defaults(func=cmd_grad_check)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigurationError, TraceParseError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
