"""Embedding-free network dynamics model and its warm-up weighted training.

The model velocity is

    x_i' = F(x_i) + sum_j A_ij G(x_i, x_j)

with ``F`` an AffineScalarFn and ``G`` an AffinePairFn shared by every node
and edge. Neither function sees the adjacency matrix, so a fitted model can
be moved to another network with :meth:`DnndModel.with_network`.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError, TrainingError
from .graph import Network
from .integrate import TimeSeries, rk4_adjoint, rk4_march
from .nn import AffinePairFn, AffineScalarFn, Mlp, ParamVector, _glorot
from .optim import Adam

log = logging.getLogger(__name__)

__all__ = [
    "DnndModel",
    "WarmupSchedule",
    "TrainConfig",
    "TrainReport",
    "dnnd_velocity",
    "warmup_weight",
    "weighted_loss",
    "train_dnnd",
]

LOSS_KINDS = ("mae", "mse")


class DnndModel:
    """Additive node/edge vector field on a fixed network.

    Parameters are one flat array: the ``F`` block (``c_f0, c_f1``, MLP)
    followed by the ``G`` block (``c_g0, c_g11, c_g12``, MLP).
    """

    kind = "dnnd"

    def __init__(self, net: Network, f_dims=(1, 64, 64, 1), g_dims=(2, 64, 64, 1),
                 activation="tanh", params=None, input_scale=1.0):
        self.net = net
        self.input_scale = float(input_scale)
        self.f_dims = tuple(f_dims)
        self.g_dims = tuple(g_dims)
        self.activation = activation
        n_f = AffineScalarFn.n_affine + Mlp.count_params(self.f_dims)
        n_g = AffinePairFn.n_affine + Mlp.count_params(self.g_dims)
        if params is None:
            params = np.zeros(n_f + n_g)
        if params.shape != (n_f + n_g,):
            raise ValueError(f"expected {n_f + n_g} parameters, got shape {params.shape}")
        self.params = params
        self.F = AffineScalarFn(self.f_dims, activation, params[:n_f], input_scale)
        self.G = AffinePairFn(self.g_dims, activation, params[n_f:], input_scale)
        self._n_f = n_f

    @classmethod
    def create(cls, net, f_dims=(1, 64, 64, 1), g_dims=(2, 64, 64, 1), activation="tanh", seed=0,
               input_scale=1.0):
        """Glorot-initialised MLPs, affine scalars at zero."""
        model = cls(net, f_dims, g_dims, activation, input_scale=input_scale)
        rng = np.random.default_rng(seed)
        _glorot(model.F.mlp, rng)
        _glorot(model.G.mlp, rng)
        return model

    @property
    def n(self) -> int:
        return self.net.n

    @property
    def num_params(self) -> int:
        return self.params.size

    def layout(self):
        return self.F.layout("F.") + [
            (name, off + self._n_f, shape) for name, off, shape in self.G.layout("G.")
        ]

    def param_vector(self) -> ParamVector:
        return ParamVector(self.params.copy(), self.layout())

    def mlp_mask(self) -> np.ndarray:
        """True for parameters belonging to the MLPs (the regularised ones)."""
        mask = np.ones(self.num_params, dtype=bool)
        mask[:AffineScalarFn.n_affine] = False
        mask[self._n_f:self._n_f + AffinePairFn.n_affine] = False
        return mask

    def with_network(self, net: Network) -> "DnndModel":
        """Same F and G (copied parameters) on a different adjacency."""
        return DnndModel(net, self.f_dims, self.g_dims, self.activation, self.params.copy(),
                         self.input_scale)

    def copy(self) -> "DnndModel":
        return self.with_network(self.net)

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.net.n,):
            raise ValueError(f"state has shape {x.shape}, expected ({self.net.n},)")
        return x

    def velocity(self, x):
        x = self._check(x)
        src, dst = self.net.src, self.net.dst
        v = self.F.forward(x)
        if len(src):
            g = self.G.forward(np.stack((x[src], x[dst]), axis=1))
            v = v + np.bincount(src, weights=g, minlength=self.net.n)
        return v

    def velocity_and_pullback(self, x):
        x = self._check(x)
        net = self.net
        src, dst = net.src, net.dst
        v, f_cache = self.F.forward_cached(x)
        g_cache = None
        if len(src):
            g, g_cache = self.G.forward_cached(np.stack((x[src], x[dst]), axis=1))
            v = v + np.bincount(src, weights=g, minlength=net.n)
        n_f = self._n_f

        def pullback(ct, grad):
            gx = self.F.backward(f_cache, ct, grad[:n_f])
            if g_cache is not None:
                ge = self.G.backward(g_cache, ct[src], grad[n_f:])
                gx = gx + np.bincount(src, weights=ge[:, 0], minlength=net.n)
                gx += np.bincount(dst, weights=ge[:, 1], minlength=net.n)
            return gx

        return v, pullback


def dnnd_velocity(model: DnndModel, x) -> np.ndarray:
    return model.velocity(x)


@dataclass(frozen=True)
class WarmupSchedule:
    """Loss temperatures, one per stage of ``epochs_per_stage`` epochs; the last stage repeats."""

    tau_values: tuple = (0.5, 1.0, 2.5, 5.0, math.inf)
    epochs_per_stage: int = 400

    def __post_init__(self):
        taus = tuple(float(t) for t in self.tau_values)
        if not taus or min(taus) <= 0:
            raise ValueError("tau values must be positive")
        if any(b <= a for a, b in zip(taus[:-1], taus[1:])):
            raise ValueError("tau values must be strictly increasing")
        if self.epochs_per_stage < 1:
            raise ValueError("epochs_per_stage must be >= 1")
        object.__setattr__(self, "tau_values", taus)

    def tau(self, epoch: int) -> float:
        return self.tau_values[min(epoch // self.epochs_per_stage, len(self.tau_values) - 1)]

    @classmethod
    def constant(cls, tau=math.inf):
        return cls((tau,), 1)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 2000
    learning_rate: float = 1e-3
    lr_final: float | None = None
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    substeps_per_obs: int = 4
    loss: str = "mae"
    reg_weight: float = 0.0
    reg_kind: str = "l2"
    seed: int = 0
    max_seconds: float | None = None
    log_every: int = 0

    def __post_init__(self):
        problems = []
        if self.epochs < 0:
            problems.append(f"epochs must be >= 0, got {self.epochs}")
        if not self.learning_rate > 0:
            problems.append(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.lr_final is not None and not self.lr_final > 0:
            problems.append(f"lr_final must be > 0, got {self.lr_final}")
        if self.substeps_per_obs < 1:
            problems.append("substeps_per_obs must be >= 1")
        if self.loss not in LOSS_KINDS:
            problems.append(f"loss must be one of {LOSS_KINDS}, got {self.loss!r}")
        if self.reg_kind not in ("l1", "l2"):
            problems.append(f"reg_kind must be 'l1' or 'l2', got {self.reg_kind!r}")
        if self.reg_weight < 0:
            problems.append("reg_weight must be >= 0")
        if problems:
            raise ValueError("; ".join(problems))

    def lr_at(self, epoch: int) -> float:
        """Learning rate for ``epoch``: geometric decay to ``lr_final`` over the run."""
        if self.lr_final is None or self.epochs <= 1:
            return self.learning_rate
        frac = epoch / (self.epochs - 1)
        return self.learning_rate * (self.lr_final / self.learning_rate) ** frac


@dataclass
class TrainReport:
    weighted_loss: list = field(default_factory=list)
    unweighted_loss: list = field(default_factory=list)
    taus: list = field(default_factory=list)
    params: ParamVector | None = None
    wall_time: float = 0.0


def warmup_weight(t, tau):
    """``exp(-t / tau)``; ``tau = inf`` gives weight 1."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be >= 0")
    if not tau > 0:
        raise ValueError("tau must be positive")
    if math.isinf(tau):
        return np.ones_like(t) if t.ndim else 1.0
    w = np.exp(-t / tau)
    return w if t.ndim else float(w)


def _per_time_residual(pred, obs, kind):
    r = pred - obs
    if kind == "mae":
        return np.abs(r).mean(axis=1), np.sign(r) / r.shape[1]
    return (r * r).mean(axis=1), 2.0 * r / r.shape[1]


def residual_loss(pred_states, obs_states, times, tau, kind="mae"):
    """Weighted loss and its cotangent w.r.t. ``pred_states`` (one row per observation)."""
    per_time, d = _per_time_residual(pred_states, obs_states, kind)
    w = warmup_weight(np.asarray(times), tau)
    return float(per_time @ w), d * w[:, None], float(per_time.sum())


def weighted_loss(pred: TimeSeries, obs: TimeSeries, tau: float, kind: str = "mae") -> float:
    """Sum over observation times of per-time MAE/MSE weighted by exp(-t/tau)."""
    if kind not in LOSS_KINDS:
        raise ValueError(f"unknown loss kind {kind!r}")
    if pred.states.shape != obs.states.shape or not np.array_equal(pred.times, obs.times):
        raise ValueError("prediction and observation grids differ")
    return residual_loss(pred.states, obs.states, obs.times, tau, kind)[0]


def regularisation(params, mask, weight, kind):
    if weight == 0:
        return 0.0, None
    p = params[mask]
    if kind == "l2":
        return weight * float(p @ p), 2.0 * weight * p
    return weight * float(np.abs(p).sum()), weight * np.sign(p)


def trajectory_loss_and_grad(model: DnndModel, obs: TimeSeries, tau, kind="mae", substeps=4):
    """Weighted rollout loss from ``obs.states[0]`` at ``obs.times[0]`` and its exact gradient."""
    traj = rk4_march(model, obs.states[0], obs.times, substeps, t0=obs.times[0])
    loss, cot, unweighted = residual_loss(traj.obs_states, obs.states, obs.times, tau, kind)
    grad = np.zeros(model.num_params)
    rk4_adjoint(model, traj, cot, grad)
    return loss, grad, unweighted


def fit_rollout(model, obs: TimeSeries, loss_and_grad, schedule: WarmupSchedule,
                cfg: TrainConfig) -> TrainReport:
    """Full-batch Adam loop shared by every trajectory-fitted model.

    ``loss_and_grad(model, obs, tau, kind, substeps)`` returns
    ``(weighted_loss, grad, unweighted_loss)``. Regularisation applies to the
    entries selected by ``model.mlp_mask()``.
    """
    if obs.n != model.n:
        raise ValueError(f"observations have {obs.n} nodes, model has {model.n}")
    if obs.times[0] < 0:
        raise ValueError("observation times must be >= 0")
    opt = Adam(model.num_params, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps)
    mask = model.mlp_mask()
    report = TrainReport()
    start = time.perf_counter()
    for epoch in range(cfg.epochs):
        tau = schedule.tau(epoch)
        lr = cfg.lr_at(epoch)
        diag = f"epoch {epoch} (tau={tau}, lr={lr:.3g}, substeps={cfg.substeps_per_obs})"
        try:
            loss, grad, unweighted = loss_and_grad(model, obs, tau, cfg.loss, cfg.substeps_per_obs)
        except DivergenceError as exc:
            raise TrainingError(f"rollout diverged at {diag}: {exc}") from exc
        reg, reg_grad = regularisation(model.params, mask, cfg.reg_weight, cfg.reg_kind)
        if reg_grad is not None:
            grad[mask] += reg_grad
        loss += reg
        if not (math.isfinite(loss) and np.all(np.isfinite(grad))):
            raise TrainingError(f"non-finite loss at {diag}")
        report.weighted_loss.append(loss)
        report.unweighted_loss.append(unweighted)
        report.taus.append(tau)
        opt.lr = lr
        opt.step(model.params, grad)
        if cfg.log_every and epoch % cfg.log_every == 0:
            log.info("epoch %d tau=%g loss=%.6g unweighted=%.6g", epoch, tau, loss, unweighted)
        if cfg.max_seconds is not None and time.perf_counter() - start > cfg.max_seconds:
            raise TrainingError(f"time budget of {cfg.max_seconds}s exceeded at epoch {epoch}")
    report.params = model.param_vector()
    report.wall_time = time.perf_counter() - start
    return report


def train_dnnd(model: DnndModel, obs: TimeSeries, schedule: WarmupSchedule | None = None,
               cfg: TrainConfig | None = None) -> TrainReport:
    """Fit ``model`` in place on the warm-up weighted rollout loss.

    Each epoch rolls the model out with fixed-step RK4 from the first
    observation and backpropagates through every step. A non-finite loss or
    state aborts with TrainingError.
    """
    return fit_rollout(model, obs, trajectory_loss_and_grad, schedule or WarmupSchedule(),
                       cfg or TrainConfig())
