"""ODE integration: adaptive RKF45 for simulation, fixed-step RK4 (with its
discrete adjoint) for differentiable training rollouts."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Protocol

import numpy as np

from .errors import DivergenceError, StepBudgetError, StiffnessError

__all__ = [
    "TimeSeries",
    "SolverConfig",
    "DifferentiableField",
    "RK4Trajectory",
    "solve_rkf45",
    "solve_rk4_grid",
    "rk4_march",
    "rk4_adjoint",
    "sample_times",
    "save_timeseries",
    "load_timeseries",
]


@dataclass(frozen=True)
class TimeSeries:
    """Samples ``states[k]`` of an n-dimensional state at strictly increasing ``times[k]``."""

    times: np.ndarray
    states: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float).reshape(-1)
        x = np.asarray(self.states, dtype=float)
        if x.ndim == 1:
            x = x.reshape(len(t), -1) if len(t) else x.reshape(0, 0)
        if x.ndim != 2 or x.shape[0] != t.shape[0]:
            raise ValueError(f"states shape {x.shape} does not match {t.shape[0]} times")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(x))):
            raise ValueError("time series contains non-finite values")
        if np.any(np.diff(t) <= 0):
            raise ValueError("times must be strictly increasing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "states", x)

    @property
    def n(self) -> int:
        return self.states.shape[1]

    def __len__(self):
        return len(self.times)


@dataclass(frozen=True)
class SolverConfig:
    rtol: float = 1e-7
    atol: float = 1e-9
    h_init: float = 1e-2
    h_min: float = 1e-12
    h_max: float = 1.0
    max_steps: int = 1_000_000

    def __post_init__(self):
        if not (self.rtol > 0 and self.atol > 0):
            raise ValueError("tolerances must be positive")
        if not 0 < self.h_min <= self.h_init <= self.h_max:
            raise ValueError("need 0 < h_min <= h_init <= h_max")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")


class DifferentiableField(Protocol):
    """A parametrised vector field that can pull cotangents back through ``velocity``.

    ``velocity_and_pullback(x)`` returns ``(v, pullback)`` where
    ``pullback(ct, grad)`` adds ``ct . dv/dtheta`` into the flat accumulator
    ``grad`` and returns ``ct . dv/dx``.
    """

    n: int
    num_params: int

    def velocity(self, x: np.ndarray) -> np.ndarray: ...

    def velocity_and_pullback(self, x: np.ndarray): ...


# Fehlberg 4(5) tableau
_A = (
    (),
    (1 / 4,),
    (3 / 32, 9 / 32),
    (1932 / 2197, -7200 / 2197, 7296 / 2197),
    (439 / 216, -8.0, 3680 / 513, -845 / 4104),
    (-8 / 27, 2.0, -3544 / 2565, 1859 / 4104, -11 / 40),
)
_B4 = np.array([25 / 216, 0.0, 1408 / 2565, 2197 / 4104, -1 / 5, 0.0])
_B5 = np.array([16 / 135, 0.0, 6656 / 12825, 28561 / 56430, -9 / 50, 2 / 55])
_E = _B5 - _B4


def _finite_or_raise(x, t):
    if not np.all(np.isfinite(x)):
        raise DivergenceError(f"state became non-finite at t={t:.6g}")


# overflow is detected and reported by _finite_or_raise, so numpy warnings are muted
@np.errstate(over="ignore", invalid="ignore")
def solve_rkf45(vf, x0, eval_times, cfg: SolverConfig | None = None, t0: float = 0.0) -> TimeSeries:
    """Integrate ``x' = vf.velocity(x)`` from ``x(t0) = x0`` with adaptive RKF45.

    Steps are accepted when the embedded error estimate satisfies
    ``|err_i| <= atol + rtol * max(|x_i|, |x_new_i|)`` for every component;
    the fifth-order solution is propagated. Steps are shortened to land
    exactly on each of ``eval_times`` rather than interpolating between
    steps; a shortened step does not shrink the controller's next proposal.
    """
    cfg = cfg or SolverConfig()
    x = np.array(x0, dtype=float).reshape(-1)
    ts = np.asarray(eval_times, dtype=float).reshape(-1)
    if ts.size == 0:
        raise ValueError("eval_times is empty")
    if np.any(np.diff(ts) <= 0):
        raise ValueError("eval_times must be strictly increasing")
    if ts[0] < t0:
        raise ValueError(f"eval_times start at {ts[0]} before t0={t0}")
    _finite_or_raise(x, t0)

    out = np.empty((len(ts), x.size))
    i = 0
    while i < len(ts) and ts[i] == t0:
        out[i] = x
        i += 1

    t = float(t0)
    h = min(cfg.h_init, cfg.h_max)
    f = vf.velocity(x)
    steps = 0
    k = np.empty((6, x.size))
    while i < len(ts):
        if steps >= cfg.max_steps:
            raise StepBudgetError(f"exceeded {cfg.max_steps} steps at t={t:.6g}")
        target = ts[i]
        clipped = t + h >= target
        h_try = target - t if clipped else h
        k[0] = f
        for s in range(1, 6):
            xs = x + h_try * np.tensordot(_A[s], k[:s], axes=1)
            k[s] = vf.velocity(xs)
        x_new = x + h_try * (_B5 @ k)
        err_vec = h_try * (_E @ k)
        scale = cfg.atol + cfg.rtol * np.maximum(np.abs(x), np.abs(x_new))
        err = float(np.max(np.abs(err_vec) / scale)) if x.size else 0.0
        if not np.isfinite(err):
            err = np.inf
        steps += 1
        if err <= 1.0:
            t_new = target if clipped else t + h_try
            _finite_or_raise(x_new, t_new)
            f_new = vf.velocity(x_new)
            if clipped:
                out[i] = x_new
                i += 1
            t, x, f = t_new, x_new, f_new
            fac = 5.0 if err == 0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
            h = min(cfg.h_max, max(h, h_try * fac) if clipped else h_try * fac)
        else:
            fac = 0.1 if err == np.inf else max(0.1, 0.9 * err ** -0.2)
            h = h_try * fac
            if h < cfg.h_min:
                raise StiffnessError(f"step size {h:.3g} below h_min={cfg.h_min:.3g} at t={t:.6g}")
    return TimeSeries(ts, out)


@dataclass
class RK4Trajectory:
    """Record of a fixed-step RK4 march, enough to replay it backwards."""

    step_states: np.ndarray   # (K+1, n) state before each step, plus the final state
    step_sizes: np.ndarray    # (K,)
    step_times: np.ndarray    # (K+1,)
    obs_index: np.ndarray     # observation k sits at step_states[obs_index[k]]

    @property
    def obs_states(self) -> np.ndarray:
        return self.step_states[self.obs_index]


def _step_grid(obs_times, substeps, t0):
    obs = np.asarray(obs_times, dtype=float).reshape(-1)
    if obs.size == 0:
        raise ValueError("obs_times is empty")
    if substeps < 1:
        raise ValueError("substeps_per_obs must be >= 1")
    if np.any(np.diff(obs) <= 0):
        raise ValueError("obs_times must be strictly increasing")
    if obs[0] < t0:
        raise ValueError(f"obs_times start at {obs[0]} before t0={t0}")
    knots = obs if obs[0] == t0 else np.concatenate([[t0], obs])
    times = [knots[:1]]
    for a, b in zip(knots[:-1], knots[1:]):
        times.append(np.linspace(a, b, substeps + 1)[1:])
    step_times = np.concatenate(times)
    obs_index = np.arange(len(obs)) * substeps + (0 if obs[0] == t0 else substeps)
    return step_times, obs_index


@np.errstate(over="ignore", invalid="ignore")
def rk4_march(vf, x0, obs_times, substeps_per_obs: int = 4, t0: float = 0.0) -> RK4Trajectory:
    """Classical RK4 from ``x(t0) = x0`` through every observation time.

    Each gap between consecutive knots (``t0`` and the observation times) is
    split into ``substeps_per_obs`` equal steps.
    """
    step_times, obs_index = _step_grid(obs_times, substeps_per_obs, t0)
    hs = np.diff(step_times)
    x = np.array(x0, dtype=float).reshape(-1)
    _finite_or_raise(x, t0)
    states = np.empty((len(step_times), x.size))
    states[0] = x
    for k, h in enumerate(hs):
        k1 = vf.velocity(x)
        k2 = vf.velocity(x + 0.5 * h * k1)
        k3 = vf.velocity(x + 0.5 * h * k2)
        k4 = vf.velocity(x + h * k3)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        _finite_or_raise(x, step_times[k + 1])
        states[k + 1] = x
    return RK4Trajectory(states, hs, step_times, obs_index)


def solve_rk4_grid(vf, x0, obs_times, substeps_per_obs: int = 4, t0: float = 0.0) -> TimeSeries:
    traj = rk4_march(vf, x0, obs_times, substeps_per_obs, t0)
    return TimeSeries(np.asarray(obs_times, dtype=float), traj.obs_states)


def rk4_adjoint(vf, traj: RK4Trajectory, obs_cotangents, grad: np.ndarray) -> np.ndarray:
    """Reverse-mode pass through a recorded RK4 march.

    ``obs_cotangents[k]`` is dLoss/dx at observation ``k``. Parameter
    gradients are added into ``grad``; dLoss/dx0 is returned. Stage values
    are recomputed from the stored step states, so memory is O(K n).
    """
    cots = np.asarray(obs_cotangents, dtype=float)
    inject = {}
    for k, idx in enumerate(traj.obs_index):
        inject[int(idx)] = inject.get(int(idx), 0.0) + cots[k]
    K = len(traj.step_sizes)
    a = np.zeros(traj.step_states.shape[1])
    if K in inject:
        a = a + inject[K]
    for k in range(K - 1, -1, -1):
        x, h = traj.step_states[k], traj.step_sizes[k]
        k1, pb1 = vf.velocity_and_pullback(x)
        k2, pb2 = vf.velocity_and_pullback(x + 0.5 * h * k1)
        k3, pb3 = vf.velocity_and_pullback(x + 0.5 * h * k2)
        _, pb4 = vf.velocity_and_pullback(x + h * k3)
        g4 = pb4((h / 6.0) * a, grad)
        g3 = pb3((h / 3.0) * a + h * g4, grad)
        g2 = pb2((h / 3.0) * a + 0.5 * h * g3, grad)
        g1 = pb1((h / 6.0) * a + 0.5 * h * g2, grad)
        a = a + g1 + g2 + g3 + g4
        if k in inject:
            a = a + inject[k]
    return a


def sample_times(count: int, t_max: float, seed: int) -> np.ndarray:
    """``count`` distinct sorted draws from U(0, t_max]."""
    if count < 1:
        raise ValueError("count must be >= 1")
    if not t_max > 0:
        raise ValueError("t_max must be positive")
    rng = np.random.default_rng(seed)
    ts = np.unique(t_max - rng.uniform(0.0, t_max, size=count))
    while len(ts) < count:
        extra = t_max - rng.uniform(0.0, t_max, size=count - len(ts))
        ts = np.unique(np.concatenate([ts, extra]))
    return ts


def save_timeseries(ts: TimeSeries, path, comment: str | None = None) -> None:
    """CSV with header ``t,x0,...``; an optional ``comment`` goes on a leading ``#`` line."""
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + [f"x{i}" for i in range(ts.n)])
        for t, row in zip(ts.times, ts.states):
            w.writerow([repr(float(t))] + [repr(float(v)) for v in row])


def load_timeseries(path) -> TimeSeries:
    with open(path, newline="") as fh:
        reader = csv.reader(line for line in fh if not line.startswith("#"))
        header = next(reader, None)
        if not header or header[0] != "t":
            raise ValueError(f"{path}: expected header starting with 't'")
        try:
            rows = [[float(v) for v in row] for row in reader if row]
        except ValueError as exc:
            raise ValueError(f"{path}: {exc}") from None
    if any(len(r) != len(header) for r in rows):
        raise ValueError(f"{path}: ragged rows")
    data = np.array(rows, dtype=float).reshape(len(rows), len(header))
    return TimeSeries(data[:, 0], data[:, 1:])
