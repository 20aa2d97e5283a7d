"""Central finite differences shared by the gradient tests."""

import numpy as np


def fd_gradient(fn, params, idx=None, h=1e-6):
    """Central differences of scalar ``fn`` w.r.t. ``params[idx]`` (all entries by default)."""
    idx = np.arange(params.size) if idx is None else np.asarray(idx)
    out = np.empty(len(idx))
    for k, i in enumerate(idx):
        old = params[i]
        step = h * max(1.0, abs(old))
        params[i] = old + step
        up = fn(params)
        params[i] = old - step
        down = fn(params)
        params[i] = old
        out[k] = (up - down) / (2 * step)
    return out


def rel_error(a, b):
    """Norm-wise relative error between two gradient vectors."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / denom)
