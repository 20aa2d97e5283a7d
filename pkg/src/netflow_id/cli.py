"""Command-line interface: ``netflow-id <subcommand> ...``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .checkpoint import load_model, save_model
from .config import TrainingSpec, load_config
from .dnnd import DnndModel
from .dynamics import DYNAMICS, make_field
from .errors import ConfigError, GraphFormatError, SolverError, TrainingError
from .evaluate import (DEFAULT_WINDOWS, EvalReport, LyapunovConfig, Window, export_field,
                       flow_consistency, largest_lyapunov, model_lyapunov, windowed_mape,
                       write_field_tables)
from .graph import generate_ba, generate_er, generate_grid, generate_ws, load_edge_list, save_edge_list
from .integrate import SolverConfig, load_timeseries, sample_times, save_timeseries, solve_rkf45
from .ndcn import NdcnModel
from .pipeline import StageError, run_pipeline, train_model, write_losses

log = logging.getLogger("netflow_id")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4


def _constants(pairs):
    out = {}
    for item in pairs or ():
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError([f"--const {item!r}: expected NAME=VALUE"])
        try:
            out[key] = float(value)
        except ValueError:
            raise ConfigError([f"--const {item!r}: value is not a number"]) from None
    return out


def _x0(args, n):
    if args.x0_file:
        return load_timeseries(args.x0_file).states[0]
    return np.random.default_rng(args.x0_seed).uniform(args.x0_low, args.x0_high, size=n)


def _parse_times(spec, seed):
    kind, _, rest = spec.partition(":")
    parts = rest.split(":")
    try:
        if kind == "irregular" and len(parts) == 2:
            return sample_times(int(parts[0]), float(parts[1]), seed)
        if kind == "grid" and len(parts) == 2:
            count, t_max = int(parts[0]), float(parts[1])
            return np.linspace(t_max / count, t_max, count)
    except ValueError:
        pass
    raise ConfigError([f"--times {spec!r}: expected irregular:COUNT:TMAX or grid:COUNT:TMAX"])


def _windows(spec):
    if spec == "default":
        return list(DEFAULT_WINDOWS)
    out = []
    for item in spec.split(","):
        parts = item.split(":")
        if len(parts) != 4:
            raise ConfigError([f"--windows {item!r}: expected LABEL:T_LO:T_HI:COUNT"])
        try:
            out.append(Window(parts[0], float(parts[1]), float(parts[2]), int(parts[3])))
        except ValueError as exc:
            raise ConfigError([f"--windows {item!r}: {exc}"]) from None
    return out


def _load_model(args, net):
    model, meta = load_model(args.model, net, check_network=not args.allow_other_network)
    return model, meta


def _target(args, net):
    """The object examined by flowcheck / lyapunov: a checkpoint or a ground-truth field."""
    if args.model:
        return _load_model(args, net)[0]
    if args.dyn:
        return make_field(args.dyn, net, **_constants(args.const))
    raise ConfigError(["one of --model or --dyn is required"])


def _solver(args):
    return SolverConfig(rtol=args.rtol, atol=args.atol)


# subcommands

def cmd_graph(args):
    if args.kind == "grid":
        net = generate_grid(args.side)
    elif args.kind == "er":
        net = generate_er(args.n, args.p, args.seed)
    elif args.kind == "ba":
        net = generate_ba(args.n, args.m, args.seed)
    elif args.kind == "ws":
        net = generate_ws(args.n, args.k, args.beta, args.seed)
    else:
        net = load_edge_list(args.path)
    save_edge_list(net, args.out)
    print(f"wrote {args.out}: {net.n} nodes, {net.num_edges} edges")


def cmd_simulate(args):
    net = load_edge_list(args.net)
    field = make_field(args.dyn, net, **_constants(args.const))
    x0 = _x0(args, net.n)
    ts = _parse_times(args.times, args.seed)
    series = solve_rkf45(field, x0, ts, _solver(args))
    save_timeseries(series, args.out)
    if args.x0_out:
        save_timeseries(type(series)([0.0], x0[None, :]), args.x0_out)
    print(f"wrote {args.out}: {len(series)} samples of {net.n} nodes")


def cmd_train(args):
    net = load_edge_list(args.net)
    obs = load_timeseries(args.data)
    cfg = load_config(args.config) if args.config else None
    model_spec = cfg.model if cfg else None
    hidden = tuple(args.hidden) if args.hidden else (model_spec.hidden if model_spec else (16, 16))
    seed = args.seed if args.seed is not None else (model_spec.seed if model_spec else 0)
    if args.model == "dnnd":
        scale = model_spec.input_scale if model_spec else 1.0
        model = DnndModel.create(net, (1,) + hidden + (1,), (2,) + hidden + (1,), seed=seed, input_scale=scale)
    else:
        model = NdcnModel.create(net, args.embed_dim, seed=seed)
    spec = cfg.training if cfg else TrainingSpec(warmup=args.model == "dnnd")
    if args.epochs is not None:
        spec = dataclasses.replace(spec, epochs=args.epochs)
    report = train_model(model, obs, spec)
    save_model(args.out, model, {"epochs": spec.epochs, "data": str(args.data)})
    if args.log:
        write_losses(report, args.log)
    final = report.unweighted_loss[-1] if report.unweighted_loss else float("nan")
    print(f"wrote {args.out}: {model.kind}, {spec.epochs} epochs, final loss {final:.6g}")


def cmd_eval(args):
    net = load_edge_list(args.net)
    model, meta = _load_model(args, net)
    field = make_field(args.truth_dyn, net, **_constants(args.const))
    x0 = _x0(args, net.n)
    windows = _windows(args.windows)
    repeats = [windowed_mape(model, field, x0, windows, seed=args.seed + r, cfg=_solver(args))
               for r in range(args.repeats)]
    report = EvalReport.aggregate(repeats, metadata={"checkpoint": meta, "seed": args.seed,
                                                     "repeats": args.repeats})
    Path(args.out).write_text(report.to_json() + "\n")
    if args.csv:
        report.write_csv(args.csv, model.kind)
    for w in report.windows:
        flag = " (divergent)" if w["divergent"] else ""
        print(f"{w['label']:>8} [{w['t_lo']:g}, {w['t_hi']:g}]: MAPE {w['mean']:.3f} +- {w['std']:.3f}%{flag}")


def cmd_flowcheck(args):
    net = load_edge_list(args.net)
    target = _target(args, net)
    dev = flow_consistency(target, _x0(args, net.n), args.t1, args.t2, cfg=_solver(args))
    tol = args.rtol
    print(json.dumps({"flow_deviation": dev, "solver_rtol": tol, "ratio": dev / tol}))


def cmd_lyapunov(args):
    net = load_edge_list(args.net)
    target = _target(args, net)
    cfg = LyapunovConfig(args.delta0, args.renorm_interval, args.horizon, args.transient, seed=args.seed)
    x0 = _x0(args, net.n)
    est = model_lyapunov(target, x0, cfg) if args.model else largest_lyapunov(target, x0, cfg)
    print(json.dumps({"lyapunov": est.exponent, "diverged": est.diverged, "time_reached": est.time_reached}))


def cmd_export_field(args):
    net = load_edge_list(args.net)
    model, _ = _load_model(args, net)
    if not isinstance(model, DnndModel):
        raise ConfigError(["export-field needs a dnnd checkpoint"])
    f_tab, g_tab = export_field(model, (args.lo, args.hi), args.resolution)
    prefix = args.out_prefix
    write_field_tables(f_tab, g_tab, f"{prefix}_F.csv", f"{prefix}_G.csv")
    print(f"wrote {prefix}_F.csv ({len(f_tab)} rows) and {prefix}_G.csv ({len(g_tab)} rows)")


def cmd_run(args):
    cfg = load_config(args.config)
    if args.epochs is not None:
        cfg = cfg.with_overrides(training={"epochs": args.epochs})
    result = run_pipeline(cfg, args.out_dir)
    for w in result.report.windows:
        print(f"{w['label']:>8} [{w['t_lo']:g}, {w['t_hi']:g}]: MAPE {w['mean']:.3f} +- {w['std']:.3f}%")
    if result.report.lyapunov is not None:
        print(f"lyapunov: model {result.report.lyapunov:.4g}, truth {result.report.lyapunov_truth:.4g}")
    if result.report.flow_deviation is not None:
        print(f"flow deviation: {result.report.flow_deviation:.3g}")
    print(f"artifacts in {args.out_dir}")


def _add_x0(p):
    p.add_argument("--x0-seed", type=int, default=0)
    p.add_argument("--x0-low", type=float, default=0.0)
    p.add_argument("--x0-high", type=float, default=25.0)
    p.add_argument("--x0-file", help="time-series CSV whose first row is the initial state")


def _add_solver(p):
    p.add_argument("--rtol", type=float, default=1e-7)
    p.add_argument("--atol", type=float, default=1e-9)


def _add_target(p, need_model=False):
    p.add_argument("--model", required=need_model, help="model checkpoint")
    p.add_argument("--allow-other-network", action="store_true",
                   help="accept a checkpoint trained on a different network")
    if not need_model:
        p.add_argument("--dyn", choices=sorted(DYNAMICS), help="ground-truth dynamics instead of a model")
        p.add_argument("--const", action="append", metavar="NAME=VALUE")


def build_parser():
    ap = argparse.ArgumentParser(prog="netflow-id", description="Learn and test vector fields on networks.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("graph", help="generate or normalise a network edge list")
    p.add_argument("--kind", choices=["grid", "er", "ba", "ws", "file"], required=True)
    p.add_argument("--side", type=int, default=20)
    p.add_argument("--n", type=int)
    p.add_argument("--p", type=float)
    p.add_argument("--m", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--beta", type=float)
    p.add_argument("--path")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_graph)

    p = sub.add_parser("simulate", help="sample a ground-truth trajectory")
    p.add_argument("--net", required=True)
    p.add_argument("--dyn", choices=sorted(DYNAMICS), required=True)
    p.add_argument("--const", action="append", metavar="NAME=VALUE")
    _add_x0(p)
    p.add_argument("--times", default="irregular:80:5")
    p.add_argument("--seed", type=int, default=0, help="seed for irregular sample times")
    p.add_argument("--x0-out", help="also write the initial state as a one-row CSV")
    _add_solver(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="fit a model to a time series")
    p.add_argument("--model", choices=["dnnd", "ndcn"], default="dnnd")
    p.add_argument("--data", required=True)
    p.add_argument("--net", required=True)
    p.add_argument("--config", help="experiment config; its model and training sections are used")
    p.add_argument("--epochs", type=int)
    p.add_argument("--hidden", type=int, nargs="+")
    p.add_argument("--embed-dim", type=int, default=20)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--log", help="per-epoch loss CSV")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="windowed MAPE against ground truth")
    _add_target(p, need_model=True)
    p.add_argument("--truth-dyn", choices=sorted(DYNAMICS), required=True)
    p.add_argument("--const", action="append", metavar="NAME=VALUE")
    p.add_argument("--net", required=True)
    _add_x0(p)
    p.add_argument("--windows", default="default", help="'default' or LABEL:T_LO:T_HI:COUNT,...")
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    _add_solver(p)
    p.add_argument("--out", required=True)
    p.add_argument("--csv", help="also write the MAPE table as CSV")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("flowcheck", help="restart consistency of a model or field")
    _add_target(p)
    p.add_argument("--net", required=True)
    _add_x0(p)
    p.add_argument("--t1", type=float, default=5.0)
    p.add_argument("--t2", type=float, default=5.0)
    _add_solver(p)
    p.set_defaults(func=cmd_flowcheck)

    p = sub.add_parser("lyapunov", help="largest Lyapunov exponent of a model or field")
    _add_target(p)
    p.add_argument("--net", required=True)
    _add_x0(p)
    p.add_argument("--delta0", type=float, default=1e-6)
    p.add_argument("--renorm-interval", type=float, default=0.1)
    p.add_argument("--horizon", type=float, default=50.0)
    p.add_argument("--transient", type=float, default=5.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_lyapunov)

    p = sub.add_parser("export-field", help="tabulate F and G of a dnnd checkpoint")
    _add_target(p, need_model=True)
    p.add_argument("--net", required=True)
    p.add_argument("--lo", type=float, default=0.0)
    p.add_argument("--hi", type=float, default=25.0)
    p.add_argument("--resolution", type=int, default=41)
    p.add_argument("--out-prefix", required=True)
    p.set_defaults(func=cmd_export_field)

    p = sub.add_parser("run", help="full pipeline from an experiment config")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--epochs", type=int, help="override training.epochs")
    p.set_defaults(func=cmd_run)
    return ap


def _exit_code(exc):
    if isinstance(exc, StageError):
        exc = exc.cause
    if isinstance(exc, (OSError, GraphFormatError)):
        return EXIT_IO
    if isinstance(exc, (SolverError, TrainingError, FloatingPointError)):
        return EXIT_NUMERIC
    if isinstance(exc, (ConfigError, ValueError, TypeError)):
        return EXIT_CONFIG
    return None


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except Exception as exc:
        code = _exit_code(exc)
        if code is None:
            raise
        print(f"netflow-id {args.command}: error: {exc}", file=sys.stderr)
        return code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
