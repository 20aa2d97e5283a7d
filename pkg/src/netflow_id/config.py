"""Experiment configuration files (YAML).

A config has seven sections: ``network``, ``dynamics``, ``sampling``,
``x0``, ``model``, ``training`` and ``eval``. Unknown keys are rejected and
every random source needs an explicit seed; all problems found are
reported together. See ``configs/`` for annotated examples.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field

import yaml

from .errors import ConfigError

__all__ = [
    "NetworkSpec",
    "DynamicsSpec",
    "SamplingSpec",
    "X0Spec",
    "ModelSpec",
    "TrainingSpec",
    "LyapunovSpec",
    "FlowSpec",
    "EvalSpec",
    "ExperimentConfig",
    "parse_config",
    "load_config",
    "dump_config",
    "config_hash",
]

REQUIRED = object()

NETWORK_PARAMS = {
    "grid": ("side",),
    "er": ("n", "p"),
    "ba": ("n", "m"),
    "ws": ("n", "k", "beta"),
    "file": ("path",),
}
DYNAMICS_CONSTANTS = {
    "heat": ("alpha",),
    "biochemical": ("b", "r", "c"),
    "birthdeath": ("q", "r"),
}


@dataclass(frozen=True)
class NetworkSpec:
    kind: str = REQUIRED
    seed: int | None = None
    side: int | None = None
    n: int | None = None
    p: float | None = None
    m: int | None = None
    k: int | None = None
    beta: float | None = None
    path: str | None = None


@dataclass(frozen=True)
class DynamicsSpec:
    kind: str = REQUIRED
    constants: dict = field(default_factory=dict)


@dataclass(frozen=True)
class SamplingSpec:
    seed: int = REQUIRED
    count: int = 80
    t_max: float = 5.0


@dataclass(frozen=True)
class X0Spec:
    seed: int = REQUIRED
    low: float = 0.0
    high: float = 25.0


@dataclass(frozen=True)
class ModelSpec:
    kind: str = REQUIRED
    seed: int = REQUIRED
    hidden: tuple = (16, 16)
    activation: str = "tanh"
    input_scale: float = 25.0
    embed_dim: int = 20


@dataclass(frozen=True)
class TrainingSpec:
    epochs: int = 400
    learning_rate: float = 1e-2
    lr_final: float | None = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    substeps_per_obs: int = 1
    loss: str = "mae"
    reg_weight: float = 0.0
    reg_kind: str = "l2"
    warmup: bool = True
    tau_values: tuple = (0.5, 1.0, 2.5, 5.0, math.inf)
    epochs_per_stage: int = 80


@dataclass(frozen=True)
class LyapunovSpec:
    delta0: float = 1e-6
    renorm_interval: float = 0.1
    horizon: float = 50.0
    transient: float = 5.0


@dataclass(frozen=True)
class FlowSpec:
    t1: float = 5.0
    t2: float = 5.0


@dataclass(frozen=True)
class EvalSpec:
    seed: int = REQUIRED
    repeats: int = 5
    windows: tuple = (("interp", 0.0, 5.0, 20), ("short", 5.0, 6.0, 20), ("long", 40.0, 50.0, 20))
    rtol: float = 1e-7
    atol: float = 1e-9
    lyapunov: LyapunovSpec | None = field(default_factory=LyapunovSpec)
    flow: FlowSpec | None = field(default_factory=FlowSpec)
    export_resolution: int = 41


@dataclass(frozen=True)
class ExperimentConfig:
    network: NetworkSpec
    dynamics: DynamicsSpec
    sampling: SamplingSpec
    x0: X0Spec
    model: ModelSpec
    training: TrainingSpec
    eval: EvalSpec

    def to_dict(self) -> dict:
        return _to_plain(dataclasses.asdict(self))

    def with_overrides(self, **sections) -> "ExperimentConfig":
        """Copy with some fields replaced, e.g. ``with_overrides(training={"epochs": 2})``."""
        data = self.to_dict()
        for name, values in sections.items():
            data[name].update(values)
        return parse_config(data)


SECTIONS = {
    "network": NetworkSpec,
    "dynamics": DynamicsSpec,
    "sampling": SamplingSpec,
    "x0": X0Spec,
    "model": ModelSpec,
    "training": TrainingSpec,
    "eval": EvalSpec,
}


def _to_plain(obj):
    if isinstance(obj, dict):
        return {k: _to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_plain(v) for v in obj]
    return obj


def _is_int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v):
    return (isinstance(v, (int, float)) and not isinstance(v, bool)) or (isinstance(v, str) and v == "inf")


def _num(v):
    return math.inf if v == "inf" else float(v)


def _build(cls, data, where, problems):
    """Instantiate section dataclass ``cls`` from ``data`` recording problems instead of raising."""
    if data is None:
        data = {}
    if not isinstance(data, dict):
        problems.append(f"{where}: expected a mapping")
        return None
    names = {f.name: f for f in dataclasses.fields(cls)}
    for key in data:
        if key not in names:
            problems.append(f"{where}.{key}: unknown key")
    kwargs = {}
    for name, f in names.items():
        if name in data:
            kwargs[name] = data[name]
        elif f.default is REQUIRED:
            problems.append(f"{where}.{name}: required")
    return kwargs


def _check_types(kwargs, cls, where, problems):
    ints = {"seed", "side", "n", "m", "k", "count", "epochs", "substeps_per_obs", "epochs_per_stage",
            "repeats", "embed_dim", "export_resolution"}
    floats = {"p", "beta", "t_max", "low", "high", "input_scale", "learning_rate", "lr_final", "beta1",
              "beta2", "eps", "reg_weight", "rtol", "atol", "delta0", "renorm_interval", "horizon",
              "transient", "t1", "t2"}
    for key, v in list(kwargs.items()):
        if v is None:
            continue
        if key in ints and not _is_int(v):
            problems.append(f"{where}.{key}: expected an integer, got {v!r}")
        elif key in floats:
            if not _is_num(v):
                problems.append(f"{where}.{key}: expected a number, got {v!r}")
            else:
                kwargs[key] = _num(v)


def _nonneg(kwargs, keys, where, problems, strict=False):
    for key in keys:
        v = kwargs.get(key)
        if v is None or isinstance(v, str) or isinstance(v, bool) or not isinstance(v, (int, float)):
            continue
        if strict and not v > 0:
            problems.append(f"{where}.{key}: must be positive, got {v}")
        elif not strict and v < 0:
            problems.append(f"{where}.{key}: must be non-negative, got {v}")


def parse_config(data) -> ExperimentConfig:
    """Validate a plain mapping (as loaded from YAML) into an ExperimentConfig."""
    problems = []
    if not isinstance(data, dict):
        raise ConfigError(["config: expected a mapping at top level"])
    for key in data:
        if key not in SECTIONS:
            problems.append(f"{key}: unknown section")
    built = {}
    for name, cls in SECTIONS.items():
        if name not in data:
            problems.append(f"{name}: section missing")
            continue
        kw = _build(cls, data[name], name, problems)
        if kw is None:
            continue
        if name == "eval":
            for sub, subcls in (("lyapunov", LyapunovSpec), ("flow", FlowSpec)):
                if sub in kw and kw[sub] is not None:
                    skw = _build(subcls, kw[sub], f"eval.{sub}", problems)
                    if skw is not None:
                        _check_types(skw, subcls, f"eval.{sub}", problems)
                        _nonneg(skw, ("transient",), f"eval.{sub}", problems)
                        _nonneg(skw, [k for k in skw if k != "transient"], f"eval.{sub}", problems,
                                strict=True)
                        kw[sub] = skw
            lyap = kw.get("lyapunov")
            if isinstance(lyap, dict):
                horizon = lyap.get("horizon", LyapunovSpec.horizon)
                transient = lyap.get("transient", LyapunovSpec.transient)
                if _is_num(horizon) and _is_num(transient) and not _num(horizon) > _num(transient):
                    problems.append("eval.lyapunov: horizon must exceed transient")
        _check_types(kw, cls, name, problems)
        built[name] = kw

    _validate_semantics(built, problems)
    if problems:
        raise ConfigError(problems)

    ev = dict(built["eval"])
    if isinstance(ev.get("lyapunov"), dict):
        ev["lyapunov"] = LyapunovSpec(**ev["lyapunov"])
    if isinstance(ev.get("flow"), dict):
        ev["flow"] = FlowSpec(**ev["flow"])
    if "windows" in ev:
        ev["windows"] = tuple((str(w[0]), float(w[1]), float(w[2]), int(w[3])) for w in ev["windows"])
    tr = dict(built["training"])
    if "tau_values" in tr:
        tr["tau_values"] = tuple(_num(t) for t in tr["tau_values"])
    md = dict(built["model"])
    if "hidden" in md:
        md["hidden"] = tuple(md["hidden"])
    return ExperimentConfig(
        network=NetworkSpec(**built["network"]),
        dynamics=DynamicsSpec(**built["dynamics"]),
        sampling=SamplingSpec(**built["sampling"]),
        x0=X0Spec(**built["x0"]),
        model=ModelSpec(**md),
        training=TrainingSpec(**tr),
        eval=EvalSpec(**ev),
    )


def _validate_semantics(b, problems):
    net = b.get("network")
    if net is not None and "kind" in net:
        kind = net["kind"]
        if kind not in NETWORK_PARAMS:
            problems.append(f"network.kind: must be one of {sorted(NETWORK_PARAMS)}, got {kind!r}")
        else:
            for key in NETWORK_PARAMS[kind]:
                if net.get(key) is None:
                    problems.append(f"network.{key}: required for kind {kind!r}")
            for key in ("side", "n", "p", "m", "k", "beta", "path"):
                if key not in NETWORK_PARAMS[kind] and net.get(key) is not None:
                    problems.append(f"network.{key}: not used by kind {kind!r}")
            if kind in ("er", "ba", "ws") and net.get("seed") is None:
                problems.append(f"network.seed: required for random kind {kind!r}")
        _nonneg(net, ("side", "n", "m", "k", "p", "beta"), "network", problems)

    dyn = b.get("dynamics")
    if dyn is not None and "kind" in dyn:
        kind = dyn["kind"]
        if kind not in DYNAMICS_CONSTANTS:
            problems.append(f"dynamics.kind: must be one of {sorted(DYNAMICS_CONSTANTS)}, got {kind!r}")
        else:
            consts = dyn.get("constants") or {}
            if not isinstance(consts, dict):
                problems.append("dynamics.constants: expected a mapping")
            else:
                for key, v in consts.items():
                    if key not in DYNAMICS_CONSTANTS[kind]:
                        problems.append(f"dynamics.constants.{key}: unknown constant for {kind!r}")
                    elif not _is_num(v) or not math.isfinite(_num(v)):
                        problems.append(f"dynamics.constants.{key}: expected a finite number")

    s = b.get("sampling")
    if s is not None:
        _nonneg(s, ("count", "t_max"), "sampling", problems, strict=True)
    x = b.get("x0")
    if x is not None and _is_num(x.get("low", 0.0)) and _is_num(x.get("high", 25.0)):
        if not _num(x.get("low", 0.0)) < _num(x.get("high", 25.0)):
            problems.append("x0: need low < high")

    m = b.get("model")
    if m is not None:
        if "kind" in m and m["kind"] not in ("dnnd", "ndcn"):
            problems.append(f"model.kind: must be 'dnnd' or 'ndcn', got {m['kind']!r}")
        if "activation" in m and m["activation"] not in ("tanh", "relu"):
            problems.append(f"model.activation: must be 'tanh' or 'relu', got {m['activation']!r}")
        if "hidden" in m:
            h = m["hidden"]
            if not isinstance(h, (list, tuple)) or not h or not all(_is_int(v) and v > 0 for v in h):
                problems.append("model.hidden: expected a non-empty list of positive integers")
        _nonneg(m, ("input_scale", "embed_dim"), "model", problems, strict=True)

    t = b.get("training")
    if t is not None:
        _nonneg(t, ("epochs", "reg_weight"), "training", problems)
        _nonneg(t, ("learning_rate", "lr_final", "eps", "substeps_per_obs", "epochs_per_stage"),
                "training", problems, strict=True)
        if t.get("loss", "mae") not in ("mae", "mse"):
            problems.append(f"training.loss: must be 'mae' or 'mse', got {t['loss']!r}")
        if t.get("reg_kind", "l2") not in ("l1", "l2"):
            problems.append(f"training.reg_kind: must be 'l1' or 'l2', got {t['reg_kind']!r}")
        if "warmup" in t and not isinstance(t["warmup"], bool):
            problems.append("training.warmup: expected true or false")
        if "tau_values" in t:
            taus = t["tau_values"]
            if not isinstance(taus, (list, tuple)) or not taus or not all(_is_num(v) for v in taus):
                problems.append("training.tau_values: expected a non-empty list of numbers")
            else:
                vals = [_num(v) for v in taus]
                if min(vals) <= 0 or any(bb <= a for a, bb in zip(vals, vals[1:])):
                    problems.append("training.tau_values: must be positive and strictly increasing")

    e = b.get("eval")
    if e is not None:
        _nonneg(e, ("repeats", "rtol", "atol", "export_resolution"), "eval", problems, strict=True)
        if "windows" in e:
            ws = e["windows"]
            ok = isinstance(ws, (list, tuple)) and bool(ws)
            for w in ws if ok else ():
                if not (isinstance(w, (list, tuple)) and len(w) == 4 and isinstance(w[0], str)
                        and _is_num(w[1]) and _is_num(w[2]) and _is_int(w[3])
                        and _num(w[1]) < _num(w[2]) and w[3] >= 1):
                    ok = False
            if not ok:
                problems.append("eval.windows: expected a list of [label, t_lo, t_hi, count] with t_lo < t_hi")


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise ConfigError([f"{path}: not valid YAML ({exc})"]) from None
    return parse_config(data)


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)


def config_hash(cfg: ExperimentConfig) -> str:
    text = json.dumps(cfg.to_dict(), sort_keys=True, allow_nan=True)
    return hashlib.sha256(text.encode()).hexdigest()[:16]
