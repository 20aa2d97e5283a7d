"""Small fully connected networks with hand-written reverse mode.

Parameters of every function object live in one flat float64 array;
weights and biases are views into it, so an optimizer can update the flat
array in place and gradients share the same layout. Within an ``Mlp`` the
order is, for each layer in turn, the weight matrix ``W`` of shape
``(d_in, d_out)`` in row-major order followed by the bias ``b``. The affine
wrappers prepend their scalars (``c0, c1`` or ``c0, c11, c12``) to the MLP
block.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Mlp",
    "AffineScalarFn",
    "AffinePairFn",
    "ParamVector",
    "init",
    "init_affine_scalar",
    "init_affine_pair",
    "forward",
    "backward",
]

ACTIVATIONS = ("tanh", "relu")


def _layout(dims):
    out, off = [], 0
    for l, (a, b) in enumerate(zip(dims[:-1], dims[1:])):
        out.append((f"W{l}", off, (a, b)))
        off += a * b
        out.append((f"b{l}", off, (b,)))
        off += b
    return out, off


class Mlp:
    """Feed-forward network with activation on hidden layers and a linear output."""

    def __init__(self, dims, activation="tanh", params=None):
        dims = tuple(int(d) for d in dims)
        if len(dims) < 2 or min(dims) < 1:
            raise ValueError(f"invalid layer dims {dims}")
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        self.dims = dims
        self.activation = activation
        self._layout, size = _layout(dims)
        if params is None:
            params = np.zeros(size)
        if params.shape != (size,):
            raise ValueError(f"expected {size} parameters, got shape {params.shape}")
        self.params = params
        self.weights, self.biases = self._views(params)

    @staticmethod
    def count_params(dims) -> int:
        return _layout(tuple(dims))[1]

    @property
    def num_params(self) -> int:
        return self.params.size

    def layout(self, prefix=""):
        return [(prefix + name, off, shape) for name, off, shape in self._layout]

    def _views(self, flat):
        ws, bs = [], []
        for name, off, shape in self._layout:
            view = flat[off:off + int(np.prod(shape))].reshape(shape)
            (ws if name[0] == "W" else bs).append(view)
        return ws, bs

    def _act(self, z):
        return np.tanh(z) if self.activation == "tanh" else np.maximum(z, 0.0)

    def _as_batch(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            # a 1-d input is a batch of scalars, or a single sample for wider inputs
            x = x[:, None] if self.dims[0] == 1 else x[None, :]
        if x.ndim != 2 or x.shape[1] != self.dims[0]:
            raise ValueError(f"input shape {x.shape} incompatible with input dim {self.dims[0]}")
        return x

    def forward(self, x):
        h = self._as_batch(x)
        last = len(self.weights) - 1
        for l, (W, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ W + b
            if l < last:
                h = self._act(h)
        return h

    def forward_cached(self, x):
        h = self._as_batch(x)
        hs = [h]
        last = len(self.weights) - 1
        for l, (W, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ W + b
            if l < last:
                h = self._act(h)
            hs.append(h)
        return h, hs

    def backward(self, cache, g_out, grad=None):
        """Pull ``g_out`` (batch, d_out) back to the input; accumulate into ``grad``."""
        hs = cache
        g = np.asarray(g_out, dtype=float).reshape(hs[-1].shape)
        gws, gbs = self._views(grad) if grad is not None else (None, None)
        for l in range(len(self.weights) - 1, -1, -1):
            if l < len(self.weights) - 1:
                h = hs[l + 1]
                g = g * (1.0 - h * h) if self.activation == "tanh" else g * (h > 0)
            if gws is not None:
                gws[l] += hs[l].T @ g
                gbs[l] += g.sum(axis=0)
            g = g @ self.weights[l].T
        return g


class AffineScalarFn:
    """``F(x) = c0 + c1 * x + mlp(x / input_scale)`` for scalar x.

    ``input_scale`` is a fixed (untrained) constant that keeps the MLP inputs
    in the unsaturated range of tanh; it defaults to 1.
    """

    n_affine = 2

    def __init__(self, dims=(1, 64, 64, 1), activation="tanh", params=None, input_scale=1.0):
        if dims[0] != 1 or dims[-1] != 1:
            raise ValueError("AffineScalarFn needs an MLP with scalar input and output")
        size = self.n_affine + Mlp.count_params(dims)
        if params is None:
            params = np.zeros(size)
        if params.shape != (size,):
            raise ValueError(f"expected {size} parameters, got shape {params.shape}")
        if not input_scale > 0:
            raise ValueError("input_scale must be positive")
        self.params = params
        self.input_scale = float(input_scale)
        self.mlp = Mlp(dims, activation, params[self.n_affine:])

    @property
    def num_params(self):
        return self.params.size

    @property
    def c0(self):
        return self.params[0]

    @property
    def c1(self):
        return self.params[1]

    def layout(self, prefix=""):
        return [(prefix + "c0", 0, ()), (prefix + "c1", 1, ())] + [
            (name, off + self.n_affine, shape) for name, off, shape in self.mlp.layout(prefix + "mlp.")
        ]

    def _input(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 2 and x.shape[1] == 1:
            x = x[:, 0]
        if x.ndim != 1:
            raise ValueError(f"AffineScalarFn takes a vector of scalars, got shape {x.shape}")
        return x

    def forward(self, x):
        x = self._input(x)
        return self.params[0] + self.params[1] * x + self.mlp.forward(x[:, None] / self.input_scale)[:, 0]

    def forward_cached(self, x):
        x = self._input(x)
        out, cache = self.mlp.forward_cached(x[:, None] / self.input_scale)
        return self.params[0] + self.params[1] * x + out[:, 0], (x, cache)

    def backward(self, cache, g_out, grad=None):
        x, mcache = cache
        g_out = np.asarray(g_out, dtype=float).reshape(-1)
        if grad is not None:
            grad[0] += g_out.sum()
            grad[1] += g_out @ x
            gm = grad[self.n_affine:]
        else:
            gm = None
        gx = self.mlp.backward(mcache, g_out[:, None], gm)[:, 0] / self.input_scale
        return gx + self.params[1] * g_out


class AffinePairFn:
    """``G(x1, x2) = c0 + c11 * x1 + c12 * x2 + mlp(x1 / s, x2 / s)`` with fixed ``s = input_scale``."""

    n_affine = 3

    def __init__(self, dims=(2, 64, 64, 1), activation="tanh", params=None, input_scale=1.0):
        if dims[0] != 2 or dims[-1] != 1:
            raise ValueError("AffinePairFn needs an MLP with 2 inputs and 1 output")
        size = self.n_affine + Mlp.count_params(dims)
        if params is None:
            params = np.zeros(size)
        if params.shape != (size,):
            raise ValueError(f"expected {size} parameters, got shape {params.shape}")
        if not input_scale > 0:
            raise ValueError("input_scale must be positive")
        self.params = params
        self.input_scale = float(input_scale)
        self.mlp = Mlp(dims, activation, params[self.n_affine:])

    @property
    def num_params(self):
        return self.params.size

    def layout(self, prefix=""):
        names = [(prefix + "c0", 0, ()), (prefix + "c11", 1, ()), (prefix + "c12", 2, ())]
        return names + [
            (name, off + self.n_affine, shape) for name, off, shape in self.mlp.layout(prefix + "mlp.")
        ]

    def _input(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1 and x.size == 2:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != 2:
            raise ValueError(f"AffinePairFn takes (batch, 2) input, got shape {x.shape}")
        return x

    def forward(self, x):
        x = self._input(x)
        c0, c11, c12 = self.params[:3]
        return c0 + c11 * x[:, 0] + c12 * x[:, 1] + self.mlp.forward(x / self.input_scale)[:, 0]

    def forward_cached(self, x):
        x = self._input(x)
        c0, c11, c12 = self.params[:3]
        out, cache = self.mlp.forward_cached(x / self.input_scale)
        return c0 + c11 * x[:, 0] + c12 * x[:, 1] + out[:, 0], (x, cache)

    def backward(self, cache, g_out, grad=None):
        x, mcache = cache
        g_out = np.asarray(g_out, dtype=float).reshape(-1)
        if grad is not None:
            grad[0] += g_out.sum()
            grad[1] += g_out @ x[:, 0]
            grad[2] += g_out @ x[:, 1]
            gm = grad[self.n_affine:]
        else:
            gm = None
        gx = self.mlp.backward(mcache, g_out[:, None], gm) / self.input_scale
        gx[:, 0] += self.params[1] * g_out
        gx[:, 1] += self.params[2] * g_out
        return gx


@dataclass
class ParamVector:
    """Flat parameter (or gradient) array plus the name -> slice layout that explains it."""

    values: np.ndarray
    layout: list

    def unpack(self) -> dict:
        out = {}
        for name, off, shape in self.layout:
            size = int(np.prod(shape)) if shape else 1
            chunk = self.values[off:off + size]
            out[name] = chunk.reshape(shape).copy() if shape else float(chunk[0])
        return out

    @classmethod
    def pack(cls, arrays: dict, layout) -> "ParamVector":
        size = max((off + (int(np.prod(s)) if s else 1) for _, off, s in layout), default=0)
        values = np.zeros(size)
        for name, off, shape in layout:
            a = np.asarray(arrays[name], dtype=float)
            if a.shape != tuple(shape):
                raise ValueError(f"{name}: shape {a.shape} != {tuple(shape)}")
            values[off:off + a.size] = a.reshape(-1)
        return cls(values, list(layout))


def _glorot(mlp: Mlp, rng):
    for W, b in zip(mlp.weights, mlp.biases):
        limit = np.sqrt(6.0 / (W.shape[0] + W.shape[1]))
        W[...] = rng.uniform(-limit, limit, size=W.shape)
        b[...] = 0.0


def init(dims, activation="tanh", seed=0) -> Mlp:
    """Glorot-uniform weights, zero biases."""
    mlp = Mlp(dims, activation)
    _glorot(mlp, np.random.default_rng(seed))
    return mlp


def init_affine_scalar(dims=(1, 64, 64, 1), activation="tanh", seed=0, params=None):
    fn = AffineScalarFn(dims, activation, params)
    fn.params[:fn.n_affine] = 0.0
    _glorot(fn.mlp, np.random.default_rng(seed))
    return fn


def init_affine_pair(dims=(2, 64, 64, 1), activation="tanh", seed=0, params=None):
    fn = AffinePairFn(dims, activation, params)
    fn.params[:fn.n_affine] = 0.0
    _glorot(fn.mlp, np.random.default_rng(seed))
    return fn


def forward(f, x):
    return f.forward(x)


def backward(f, x, output_cotangent):
    """Return ``(input_cotangent, parameter_gradient)`` for one evaluation of ``f`` at ``x``."""
    _, cache = f.forward_cached(x)
    grad = np.zeros(f.num_params)
    gx = f.backward(cache, output_cotangent, grad)
    return gx, grad
