"""Dynamical-correctness checks for fitted models.

Three questions are asked of a model: does it extrapolate (windowed MAPE),
does it have the right stability (largest Lyapunov exponent, fixed-point
residuals), and does it define a flow at all (restart consistency).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import SolverError
from .integrate import SolverConfig, TimeSeries, solve_rkf45

__all__ = [
    "Window",
    "DEFAULT_WINDOWS",
    "WindowResult",
    "LyapunovConfig",
    "LyapunovEstimate",
    "EvalReport",
    "FieldPredictor",
    "as_predictor",
    "mape",
    "windowed_mape",
    "largest_lyapunov",
    "model_lyapunov",
    "flow_consistency",
    "fixed_point_residual",
    "export_field",
    "write_field_tables",
    "read_field_table",
]

MAPE_EPS = 1e-8
TRUTH_SOLVER = SolverConfig(rtol=1e-10, atol=1e-12)


@dataclass(frozen=True)
class Window:
    label: str
    t_lo: float
    t_hi: float
    count: int = 20

    def __post_init__(self):
        if not self.t_lo < self.t_hi:
            raise ValueError(f"window {self.label!r}: need t_lo < t_hi")
        if self.count < 1:
            raise ValueError(f"window {self.label!r}: count must be >= 1")


DEFAULT_WINDOWS = (
    Window("interp", 0.0, 5.0, 20),
    Window("short", 5.0, 6.0, 20),
    Window("long", 40.0, 50.0, 20),
)


@dataclass
class WindowResult:
    label: str
    t_lo: float
    t_hi: float
    mean: float
    std: float
    divergent: bool = False


@dataclass
class FieldPredictor:
    """Predicts by integrating a vector field directly in the observed state space."""

    field: object
    cfg: SolverConfig = field(default_factory=SolverConfig)

    def predict(self, x0, eval_times, t0=0.0) -> TimeSeries:
        return solve_rkf45(self.field, x0, eval_times, self.cfg, t0=t0)


class _ModelPredictor:
    def __init__(self, model, cfg):
        self.model = model
        self.cfg = cfg

    def predict(self, x0, eval_times, t0=0.0):
        return self.model.predict(x0, eval_times, t0, self.cfg)


def as_predictor(obj, cfg: SolverConfig | None = None):
    """Wrap a vector field (or a model with its own ``predict``) in a common predict interface."""
    cfg = cfg or SolverConfig()
    if isinstance(obj, (FieldPredictor, _ModelPredictor)):
        return obj
    if hasattr(obj, "predict"):
        return _ModelPredictor(obj, cfg)
    return FieldPredictor(obj, cfg)


def mape(pred, truth, eps=MAPE_EPS) -> float:
    """Mean absolute percentage error with denominators floored at ``eps``."""
    pred = np.asarray(pred, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if pred.shape != truth.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {truth.shape}")
    if pred.size == 0:
        raise ValueError("mape of empty input")
    if not eps > 0:
        raise ValueError("eps must be positive")
    return 100.0 * float(np.mean(np.abs(pred - truth) / np.maximum(np.abs(truth), eps)))


def windowed_mape(model, truth_field, x0, windows=DEFAULT_WINDOWS, seed=0,
                  cfg: SolverConfig | None = None, truth_cfg: SolverConfig = TRUTH_SOLVER):
    """MAPE of ``model`` against ``truth_field`` from ``x0`` at random times in each window.

    For every window ``count`` times are drawn uniformly; the result holds
    the mean and standard deviation over those times of the per-time MAPE
    across nodes. A model whose prediction fails numerically is reported
    as divergent rather than raising.
    """
    predictor = as_predictor(model, cfg)
    rng = np.random.default_rng(seed)
    out = []
    for w in windows:
        ts = np.unique(rng.uniform(w.t_lo, w.t_hi, size=w.count))
        truth = solve_rkf45(truth_field, x0, ts, truth_cfg).states
        try:
            pred = predictor.predict(x0, ts).states
        except (SolverError, FloatingPointError):
            out.append(WindowResult(w.label, w.t_lo, w.t_hi, math.inf, math.nan, True))
            continue
        per_time = [mape(p, t) for p, t in zip(pred, truth)]
        out.append(WindowResult(w.label, w.t_lo, w.t_hi, float(np.mean(per_time)), float(np.std(per_time))))
    return out


@dataclass(frozen=True)
class LyapunovConfig:
    delta0: float = 1e-6
    renorm_interval: float = 0.1
    horizon: float = 50.0
    transient: float = 5.0
    seed: int = 0
    solver: SolverConfig = SolverConfig(rtol=1e-9, atol=1e-12, h_init=1e-3)

    def __post_init__(self):
        if not self.delta0 > 0:
            raise ValueError("delta0 must be positive")
        if not self.renorm_interval > 0:
            raise ValueError("renorm_interval must be positive")
        if not self.horizon > self.transient >= 0:
            raise ValueError("need horizon > transient >= 0")


@dataclass
class LyapunovEstimate:
    exponent: float
    diverged: bool = False
    time_reached: float = 0.0

    def __float__(self):
        return float(self.exponent)


class _PairField:
    # a reference and a perturbed copy stepped together, so both see the same step sequence
    def __init__(self, vf):
        self.vf = vf
        self.n = 2 * vf.n

    def velocity(self, z):
        m = self.vf.n
        return np.concatenate([self.vf.velocity(z[:m]), self.vf.velocity(z[m:])])


def largest_lyapunov(vf, x0, cfg: LyapunovConfig | None = None) -> LyapunovEstimate:
    """Two-trajectory (Benettin) estimate of the largest Lyapunov exponent.

    A copy displaced by ``delta0`` along a random unit direction is evolved
    with the reference trajectory; every ``renorm_interval`` the separation
    is rescaled to ``delta0`` and its log growth recorded. The exponent is
    the summed log growth after ``transient`` divided by the elapsed time.
    """
    cfg = cfg or LyapunovConfig()
    x = np.array(x0, dtype=float).reshape(-1)
    rng = np.random.default_rng(cfg.seed)
    u = rng.standard_normal(x.size)
    u /= np.linalg.norm(u)
    y = x + cfg.delta0 * u
    pair = _PairField(vf)
    m = x.size
    solver = cfg.solver
    if solver.h_init > cfg.renorm_interval:
        solver = SolverConfig(solver.rtol, solver.atol, cfg.renorm_interval,
                              min(solver.h_min, cfg.renorm_interval), max(solver.h_max, cfg.renorm_interval),
                              solver.max_steps)
    n_steps = int(round(cfg.horizon / cfg.renorm_interval))
    total, counted_time, t = 0.0, 0.0, 0.0
    for k in range(n_steps):
        t_next = (k + 1) * cfg.renorm_interval
        try:
            z = solve_rkf45(pair, np.concatenate([x, y]), [t_next], solver, t0=t).states[0]
        except SolverError:
            est = total / counted_time if counted_time > 0 else math.nan
            return LyapunovEstimate(est, True, t)
        x, y = z[:m], z[m:]
        d = np.linalg.norm(y - x)
        if t_next > cfg.transient + 1e-12:
            total += math.log(d / cfg.delta0) if d > 0 else -math.inf
            counted_time += cfg.renorm_interval
        y = x + (cfg.delta0 / d) * (y - x) if d > 0 else x + cfg.delta0 * u
        t = t_next
    return LyapunovEstimate(total / counted_time, False, t)


def model_lyapunov(model, x0, cfg: LyapunovConfig | None = None) -> LyapunovEstimate:
    """Lyapunov exponent of the flow a model actually integrates.

    Encoder/decoder models evolve in their latent space, so the estimate
    is taken there, starting from the encoded ``x0``.
    """
    if hasattr(model, "latent_field"):
        return largest_lyapunov(model.latent_field(), model.encode(x0).reshape(-1), cfg)
    return largest_lyapunov(model, x0, cfg)


def flow_consistency(model, x0, t1, t2, eval_times=None, cfg: SolverConfig | None = None,
                     eps=MAPE_EPS) -> float:
    """Largest relative gap between a straight prediction and one restarted at ``t1``.

    The restart begins from the model's own predicted state at ``t1``; for
    an encoder/decoder model that is the decoded state, re-encoded. A legal
    flow gives a gap at the level of the integrator tolerance.
    """
    if not (t1 > 0 and t2 > 0):
        raise ValueError("t1 and t2 must be positive")
    ts = np.linspace(t1, t1 + t2, 21) if eval_times is None else np.asarray(eval_times, dtype=float)
    if ts.min() < t1 or ts.max() > t1 + t2 + 1e-12:
        raise ValueError("eval_times must lie in [t1, t1 + t2]")
    if hasattr(model, "latent_field"):
        from .ndcn import ndcn_flow_branch

        a, b = ndcn_flow_branch(model, x0, t1, t1 + t2, ts, cfg)
    else:
        predictor = as_predictor(model, cfg)
        a = predictor.predict(x0, ts)
        x_t1 = predictor.predict(x0, [t1]).states[0]
        b = predictor.predict(x_t1, ts, t0=t1)
    return float(np.max(np.abs(a.states - b.states) / (np.abs(a.states) + eps)))


def fixed_point_residual(vf, x_probe) -> float:
    """Max-norm of the velocity at ``x_probe``."""
    return float(np.max(np.abs(vf.velocity(np.asarray(x_probe, dtype=float)))))


def export_field(model, x_range, resolution: int):
    """Tabulate ``F`` on a uniform grid and ``G`` on the matching 2-D grid.

    Returns ``(f_table, g_table)`` with rows ``(x, F(x))`` and
    ``(x_i, x_j, G(x_i, x_j))``; ``x_i`` varies slowest.
    """
    lo, hi = map(float, x_range)
    if not lo < hi:
        raise ValueError("need lo < hi")
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    xs = np.linspace(lo, hi, resolution)
    f_table = np.column_stack([xs, model.F.forward(xs)])
    xi, xj = np.meshgrid(xs, xs, indexing="ij")
    pairs = np.column_stack([xi.ravel(), xj.ravel()])
    g_table = np.column_stack([pairs, model.G.forward(pairs)])
    return f_table, g_table


def write_field_tables(f_table, g_table, f_path, g_path, comment=None) -> None:
    with open(f_path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "F"])
        w.writerows([[repr(float(a)) for a in row] for row in f_table])
    with open(g_path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["xi", "xj", "G"])
        w.writerows([[repr(float(a)) for a in row] for row in g_table])


def read_field_table(path) -> np.ndarray:
    """Load a table written by ``write_field_tables`` (comment lines and header skipped)."""
    with open(path) as fh:
        rows = [line for line in fh if line.strip() and not line.startswith("#")]
    if not rows or rows[0].strip() not in ("x,F", "xi,xj,G"):
        raise ValueError(f"{path}: not a field table")
    return np.array([[float(v) for v in line.split(",")] for line in rows[1:]])


@dataclass
class EvalReport:
    """Evaluation summary; window statistics are aggregated over repeats."""

    windows: list = field(default_factory=list)       # dicts: label, t_lo, t_hi, mean, std, divergent
    lyapunov: float | None = None
    lyapunov_truth: float | None = None
    flow_deviation: float | None = None
    fixed_point_residuals: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    @classmethod
    def aggregate(cls, repeats, **kwargs) -> "EvalReport":
        """Combine per-repeat window results: mean and std of the per-repeat MAPE."""
        rows = []
        for i, w in enumerate(repeats[0]):
            vals = [rep[i].mean for rep in repeats]
            divergent = any(rep[i].divergent for rep in repeats)
            rows.append({
                "label": w.label, "t_lo": w.t_lo, "t_hi": w.t_hi,
                "mean": float(np.mean(vals)) if not divergent else math.inf,
                "std": float(np.std(vals)) if not divergent else math.nan,
                "divergent": divergent,
            })
        return cls(windows=rows, **kwargs)

    def window(self, label):
        for w in self.windows:
            if w["label"] == label:
                return w
        raise KeyError(label)

    def to_json(self) -> str:
        def clean(v):
            if isinstance(v, float) and not math.isfinite(v):
                return None if math.isnan(v) else ("inf" if v > 0 else "-inf")
            if isinstance(v, dict):
                return {k: clean(x) for k, x in v.items()}
            if isinstance(v, list):
                return [clean(x) for x in v]
            return v

        return json.dumps(clean(asdict(self)), indent=2, sort_keys=True)

    def write_csv(self, path, model_name="model", comment=None) -> None:
        with open(path, "w", newline="") as fh:
            if comment:
                fh.write(f"# {comment}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["window", "t_lo", "t_hi", f"{model_name}_mape_mean", f"{model_name}_mape_std", "divergent"])
            for r in self.windows:
                w.writerow([r["label"], repr(r["t_lo"]), repr(r["t_hi"]), repr(r["mean"]), repr(r["std"]),
                            int(r["divergent"])])
