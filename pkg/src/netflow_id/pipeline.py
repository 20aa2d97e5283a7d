"""End-to-end experiment: network, simulated observations, training, evaluation.

Every stage is a pure function of the config, and every artifact written
carries the config hash so outputs can be matched to the run that made them.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .checkpoint import network_fingerprint, save_model
from .config import ExperimentConfig, config_hash, dump_config
from .dnnd import DnndModel, TrainConfig, TrainReport, WarmupSchedule, train_dnnd
from .dynamics import make_field
from .errors import NetflowError
from .evaluate import (EvalReport, LyapunovConfig, Window, export_field, fixed_point_residual,
                       flow_consistency, largest_lyapunov, model_lyapunov, windowed_mape,
                       write_field_tables)
from .graph import generate_ba, generate_er, generate_grid, generate_ws, load_edge_list, save_edge_list
from .integrate import SolverConfig, TimeSeries, sample_times, save_timeseries, solve_rkf45
from .ndcn import NdcnModel, train_ndcn

log = logging.getLogger(__name__)

__all__ = [
    "StageError",
    "PipelineResult",
    "build_network",
    "build_field",
    "initial_state",
    "simulate_observations",
    "build_model",
    "train_model",
    "evaluate_model",
    "run_pipeline",
    "write_losses",
]


class StageError(NetflowError):
    """A pipeline stage failed; ``cause`` is the original exception."""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {cause}")


@dataclass
class PipelineResult:
    observations: TimeSeries
    model: object
    report: EvalReport
    train_report: TrainReport
    out_dir: Path | None = None


def build_network(spec):
    if spec.kind == "grid":
        return generate_grid(spec.side)
    if spec.kind == "er":
        return generate_er(spec.n, spec.p, spec.seed)
    if spec.kind == "ba":
        return generate_ba(spec.n, spec.m, spec.seed)
    if spec.kind == "ws":
        return generate_ws(spec.n, spec.k, spec.beta, spec.seed)
    if spec.kind == "file":
        return load_edge_list(spec.path)
    raise ValueError(f"unknown network kind {spec.kind!r}")


def build_field(spec, net):
    consts = {k: (math.inf if v == "inf" else float(v)) for k, v in spec.constants.items()}
    return make_field(spec.kind, net, **consts)


def initial_state(spec, n):
    return np.random.default_rng(spec.seed).uniform(spec.low, spec.high, size=n)


def simulate_observations(cfg: ExperimentConfig, field, x0):
    ts = sample_times(cfg.sampling.count, cfg.sampling.t_max, cfg.sampling.seed)
    return solve_rkf45(field, x0, ts, _solver(cfg))


def build_model(spec, net):
    if spec.kind == "dnnd":
        h = tuple(spec.hidden)
        return DnndModel.create(net, (1,) + h + (1,), (2,) + h + (1,), spec.activation, spec.seed,
                                spec.input_scale)
    d = spec.embed_dim
    return NdcnModel.create(net, d, spec.activation, spec.seed)


def _train_config(spec) -> TrainConfig:
    return TrainConfig(epochs=spec.epochs, learning_rate=spec.learning_rate, lr_final=spec.lr_final,
                       beta1=spec.beta1, beta2=spec.beta2, eps=spec.eps,
                       substeps_per_obs=spec.substeps_per_obs, loss=spec.loss,
                       reg_weight=spec.reg_weight, reg_kind=spec.reg_kind)


def _schedule(spec) -> WarmupSchedule:
    if not spec.warmup:
        return WarmupSchedule.constant()
    return WarmupSchedule(spec.tau_values, spec.epochs_per_stage)


def train_model(model, obs, spec) -> TrainReport:
    if isinstance(model, NdcnModel):
        return train_ndcn(model, obs, _train_config(spec), _schedule(spec))
    return train_dnnd(model, obs, _schedule(spec), _train_config(spec))


def _solver(cfg: ExperimentConfig) -> SolverConfig:
    return SolverConfig(rtol=cfg.eval.rtol, atol=cfg.eval.atol)


def evaluate_model(cfg: ExperimentConfig, model, field, x0, metadata=None) -> EvalReport:
    """Windowed MAPE over ``eval.repeats`` time draws, Lyapunov exponents, flow check, fixed points."""
    ev = cfg.eval
    solver = _solver(cfg)
    windows = [Window(*w) for w in ev.windows]
    repeats = [windowed_mape(model, field, x0, windows, seed=ev.seed + r, cfg=solver)
               for r in range(ev.repeats)]
    report = EvalReport.aggregate(repeats, metadata=dict(metadata or {}))
    if ev.lyapunov is not None:
        ly = ev.lyapunov
        lcfg = LyapunovConfig(ly.delta0, ly.renorm_interval, ly.horizon, ly.transient, seed=ev.seed)
        est = model_lyapunov(model, x0, lcfg)
        report.lyapunov = est.exponent
        report.lyapunov_truth = largest_lyapunov(field, x0, lcfg).exponent
        report.metadata["lyapunov_diverged"] = est.diverged
    if ev.flow is not None:
        report.flow_deviation = flow_consistency(model, x0, ev.flow.t1, ev.flow.t2, cfg=solver)
    probes = {"uniform_mean": np.full(x0.size, x0.mean()),
              "truth_final": solve_rkf45(field, x0, [max(w[2] for w in ev.windows)], solver).states[0]}
    for name, probe in probes.items():
        report.fixed_point_residuals[f"truth@{name}"] = fixed_point_residual(field, probe)
        if not isinstance(model, NdcnModel):
            report.fixed_point_residuals[f"model@{name}"] = fixed_point_residual(model, probe)
    return report


def write_losses(report: TrainReport, path, comment=None) -> None:
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "tau", "weighted_loss", "unweighted_loss"])
        for i, (tau, wl, ul) in enumerate(zip(report.taus, report.weighted_loss, report.unweighted_loss)):
            w.writerow([i, repr(float(tau)), repr(float(wl)), repr(float(ul))])


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except Exception as exc:   # re-raised with the stage name attached
        raise StageError(name, exc) from exc


def run_pipeline(cfg: ExperimentConfig, out_dir=None) -> PipelineResult:
    """Run every stage; with ``out_dir`` each artifact is written as soon as it exists."""
    digest = config_hash(cfg)
    tag = f"config {digest}"
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.yaml").write_text(f"# {tag}\n" + dump_config(cfg))

    net = _stage("network", build_network, cfg.network)
    if out is not None:
        save_edge_list(net, out / "network.edges", comment=tag)
    field = _stage("dynamics", build_field, cfg.dynamics, net)
    x0 = initial_state(cfg.x0, net.n)
    obs = _stage("simulate", simulate_observations, cfg, field, x0)
    if out is not None:
        save_timeseries(obs, out / "observations.csv", comment=tag)

    model = _stage("model", build_model, cfg.model, net)
    log.info("training %s model (%d parameters) for %d epochs", model.kind, model.num_params,
             cfg.training.epochs)
    train_report = _stage("train", train_model, model, obs, cfg.training)
    meta = {"config_hash": digest, "network": network_fingerprint(net), "model": model.kind,
            "epochs": cfg.training.epochs, "x0_seed": cfg.x0.seed, "eval_seed": cfg.eval.seed,
            "repeats": cfg.eval.repeats}
    if out is not None:
        save_model(out / "model.ckpt", model, meta)
        write_losses(train_report, out / "losses.csv", comment=tag)

    report = _stage("eval", evaluate_model, cfg, model, field, x0, meta)
    if out is not None:
        (out / "report.json").write_text(report.to_json() + "\n")
        report.write_csv(out / "mape.csv", model.kind, comment=tag)
        if isinstance(model, DnndModel):
            lo, hi = float(obs.states.min()), float(obs.states.max())
            f_tab, g_tab = export_field(model, (lo, hi), cfg.eval.export_resolution)
            write_field_tables(f_tab, g_tab, out / "field_F.csv", out / "field_G.csv", comment=tag)
    return PipelineResult(obs, model, report, train_report, out)
