"""Ground-truth autonomous dynamics on networks.

Every field exposes ``n`` and ``velocity(x)``; neighbour sums run over the
network's directed edge arrays, so cost is linear in the edge count.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, runtime_checkable

import numpy as np

from .graph import Network

__all__ = [
    "VectorField",
    "HeatField",
    "BiochemicalField",
    "BirthDeathField",
    "LinearField",
    "heat_field",
    "biochemical_field",
    "birthdeath_field",
    "make_field",
    "DYNAMICS",
]


@runtime_checkable
class VectorField(Protocol):
    """Autonomous velocity map R^n -> R^n."""

    n: int

    def velocity(self, x: np.ndarray) -> np.ndarray: ...


def _neighbor_sum(net: Network, values: np.ndarray) -> np.ndarray:
    # sum_j A_ij * values_j
    return np.bincount(net.src, weights=values[net.dst], minlength=net.n)


def _check(net, x):
    x = np.asarray(x, dtype=float)
    if x.shape != (net.n,):
        raise ValueError(f"state has shape {x.shape}, expected ({net.n},)")
    return x


@dataclass(frozen=True)
class HeatField:
    """x_i' = -alpha * sum_j A_ij (x_i - x_j)"""

    net: Network
    alpha: float = 0.1

    @property
    def n(self):
        return self.net.n

    def velocity(self, x):
        x = _check(self.net, x)
        net = self.net
        # per-edge differences keep a uniform state an exact fixed point
        return self.alpha * np.bincount(net.src, weights=x[net.dst] - x[net.src], minlength=net.n)


@dataclass(frozen=True)
class BiochemicalField:
    """x_i' = b - r x_i - c x_i sum_j A_ij x_j"""

    net: Network
    b: float = 1.0
    r: float = 0.1
    c: float = 0.01

    @property
    def n(self):
        return self.net.n

    def velocity(self, x):
        x = _check(self.net, x)
        return self.b - self.r * x - self.c * x * _neighbor_sum(self.net, x)


@dataclass(frozen=True)
class BirthDeathField:
    """x_i' = -q x_i^2 + r sum_j A_ij x_j"""

    net: Network
    q: float = 0.1
    r: float = 0.2

    @property
    def n(self):
        return self.net.n

    def velocity(self, x):
        x = _check(self.net, x)
        return -self.q * x * x + self.r * _neighbor_sum(self.net, x)


@dataclass(frozen=True)
class LinearField:
    """Uncoupled linear decay/growth x' = a x on n independent coordinates."""

    a: float
    n: int = 1

    def velocity(self, x):
        return self.a * np.asarray(x, dtype=float)


def heat_field(net: Network, alpha: float = 0.1) -> HeatField:
    if not np.isfinite(alpha):
        raise ValueError("alpha must be finite")
    return HeatField(net, float(alpha))


def biochemical_field(net: Network, b=1.0, r=0.1, c=0.01) -> BiochemicalField:
    return BiochemicalField(net, float(b), float(r), float(c))


def birthdeath_field(net: Network, q=0.1, r=0.2) -> BirthDeathField:
    return BirthDeathField(net, float(q), float(r))


DYNAMICS = {
    "heat": heat_field,
    "biochemical": biochemical_field,
    "birthdeath": birthdeath_field,
}


def make_field(kind: str, net: Network, **constants) -> VectorField:
    """Build a ground-truth field by name; ``constants`` override the defaults."""
    try:
        factory = DYNAMICS[kind]
    except KeyError:
        raise ValueError(f"unknown dynamics {kind!r}; choose from {sorted(DYNAMICS)}") from None
    for name, value in constants.items():
        if not np.isfinite(value):
            raise ValueError(f"rate constant {name} must be finite")
    return factory(net, **constants)
