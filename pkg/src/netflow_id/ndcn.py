"""Encoder / Laplacian latent ODE / decoder baseline.

Each node value is encoded to a ``d``-dimensional vector, the stacked
latent matrix evolves as ``H' = f(L H)`` with ``f`` applied row-wise and
``L`` the combinatorial Laplacian, and states are read out by a separate
decoder network. Encoder and decoder are independent parameter blocks; no
inverse relation is imposed between them.
"""

from __future__ import annotations

import math

import numpy as np

from .dnnd import TrainConfig, TrainReport, WarmupSchedule, fit_rollout, residual_loss
from .graph import Network, laplacian
from .integrate import SolverConfig, TimeSeries, rk4_adjoint, rk4_march, solve_rkf45
from .nn import Mlp, ParamVector, _glorot

__all__ = ["NdcnModel", "LatentField", "ndcn_predict", "train_ndcn", "ndcn_flow_branch"]


class LatentField:
    """The latent ODE ``H' = f(L H)`` on flattened ``(n, d)`` states."""

    def __init__(self, model: "NdcnModel"):
        self.model = model
        self.n = model.net.n * model.d
        self.num_params = model.num_params

    def velocity(self, h):
        m = self.model
        H = np.asarray(h, dtype=float).reshape(m.net.n, m.d)
        return m.f_latent.forward(m.L @ H).reshape(-1)

    def velocity_and_pullback(self, h):
        m = self.model
        H = np.asarray(h, dtype=float).reshape(m.net.n, m.d)
        out, cache = m.f_latent.forward_cached(m.L @ H)
        sl = m.slices["f"]

        def pullback(ct, grad):
            gz = m.f_latent.backward(cache, ct.reshape(m.net.n, m.d), grad[sl])
            # L is symmetric
            return (m.L @ gz).reshape(-1)

        return out.reshape(-1), pullback


class NdcnModel:
    kind = "ndcn"

    def __init__(self, net: Network, d=20, enc_dims=None, f_dims=None, dec_dims=None,
                 activation="tanh", params=None):
        self.net = net
        self.d = int(d)
        self.enc_dims = tuple(enc_dims or (1, d, d))
        self.f_dims = tuple(f_dims or (d, d, d))
        self.dec_dims = tuple(dec_dims or (d, d, 1))
        if self.enc_dims[0] != 1 or self.enc_dims[-1] != d:
            raise ValueError("encoder must map 1 -> d")
        if self.f_dims[0] != d or self.f_dims[-1] != d:
            raise ValueError("latent function must map d -> d")
        if self.dec_dims[0] != d or self.dec_dims[-1] != 1:
            raise ValueError("decoder must map d -> 1")
        self.activation = activation
        sizes = [Mlp.count_params(self.enc_dims), Mlp.count_params(self.f_dims),
                 Mlp.count_params(self.dec_dims)]
        total = sum(sizes)
        if params is None:
            params = np.zeros(total)
        if params.shape != (total,):
            raise ValueError(f"expected {total} parameters, got shape {params.shape}")
        self.params = params
        a, b = sizes[0], sizes[0] + sizes[1]
        self.slices = {"enc": slice(0, a), "f": slice(a, b), "dec": slice(b, total)}
        self.encoder = Mlp(self.enc_dims, activation, params[self.slices["enc"]])
        self.f_latent = Mlp(self.f_dims, activation, params[self.slices["f"]])
        self.decoder = Mlp(self.dec_dims, activation, params[self.slices["dec"]])
        self.L = laplacian(net)
        self.x0_cache = None        # initial state of the last training run

    @classmethod
    def create(cls, net, d=20, activation="tanh", seed=0, **dims):
        model = cls(net, d, activation=activation, **dims)
        rng = np.random.default_rng(seed)
        for mlp in (model.encoder, model.f_latent, model.decoder):
            _glorot(mlp, rng)
        return model

    @property
    def n(self):
        return self.net.n

    @property
    def num_params(self):
        return self.params.size

    def layout(self):
        out = []
        for key, mlp in (("enc", self.encoder), ("f", self.f_latent), ("dec", self.decoder)):
            start = self.slices[key].start
            out += [(name, off + start, shape) for name, off, shape in mlp.layout(key + ".")]
        return out

    def param_vector(self):
        return ParamVector(self.params.copy(), self.layout())

    def mlp_mask(self):
        return np.ones(self.num_params, dtype=bool)

    def copy(self):
        return NdcnModel(self.net, self.d, self.enc_dims, self.f_dims, self.dec_dims,
                         self.activation, self.params.copy())

    def latent_field(self) -> LatentField:
        return LatentField(self)

    def encode(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.net.n,):
            raise ValueError(f"state has shape {x.shape}, expected ({self.net.n},)")
        return self.encoder.forward(x[:, None])

    def decode(self, H):
        return self.decoder.forward(np.asarray(H).reshape(self.net.n, self.d))[:, 0]

    def predict(self, x0, eval_times, t0=0.0, cfg: SolverConfig | None = None) -> TimeSeries:
        """Encode ``x0`` (taken at time ``t0``), integrate the latent ODE, decode at ``eval_times``."""
        H0 = self.encode(x0)
        lat = solve_rkf45(self.latent_field(), H0.reshape(-1), eval_times, cfg, t0=t0)
        states = self.decoder.forward(lat.states.reshape(-1, self.d))[:, 0].reshape(len(lat), self.net.n)
        return TimeSeries(lat.times, states)


def ndcn_predict(model: NdcnModel, x0, eval_times, cfg: SolverConfig | None = None) -> TimeSeries:
    return model.predict(x0, eval_times, 0.0, cfg)


def ndcn_flow_branch(model: NdcnModel, x0, t_split, t_end, eval_times, cfg: SolverConfig | None = None):
    """Straight prediction from ``x0`` versus a restart from the decoded state at ``t_split``.

    Returns ``(A, B)`` sampled at ``eval_times``. At ``t_split == 0`` the
    restart state is ``x0`` itself, so both series coincide.
    """
    ts = np.asarray(eval_times, dtype=float)
    if not 0 <= t_split < t_end:
        raise ValueError("need 0 <= t_split < t_end")
    if ts.min() < t_split or ts.max() > t_end:
        raise ValueError("eval_times must lie in [t_split, t_end]")
    a = model.predict(x0, ts, 0.0, cfg)
    if t_split == 0:
        x_split = np.asarray(x0, dtype=float)
    else:
        x_split = model.predict(x0, [t_split], 0.0, cfg).states[0]
    b = model.predict(x_split, ts, t_split, cfg)
    return a, b


def trajectory_loss_and_grad(model: NdcnModel, obs: TimeSeries, tau=math.inf, kind="mae", substeps=4):
    n, d = model.net.n, model.d
    grad = np.zeros(model.num_params)
    H0, enc_cache = model.encoder.forward_cached(obs.states[0][:, None])
    lat = model.latent_field()
    traj = rk4_march(lat, H0.reshape(-1), obs.times, substeps, t0=obs.times[0])
    Hs = traj.obs_states.reshape(-1, d)
    out, dec_cache = model.decoder.forward_cached(Hs)
    pred = out[:, 0].reshape(len(obs), n)
    loss, cot, unweighted = residual_loss(pred, obs.states, obs.times, tau, kind)
    gH = model.decoder.backward(dec_cache, cot.reshape(-1, 1), grad[model.slices["dec"]])
    gH0 = rk4_adjoint(lat, traj, gH.reshape(len(obs), n * d), grad)
    model.encoder.backward(enc_cache, gH0.reshape(n, d), grad[model.slices["enc"]])
    return loss, grad, unweighted


def train_ndcn(model: NdcnModel, obs: TimeSeries, cfg: TrainConfig | None = None,
               schedule: WarmupSchedule | None = None) -> TrainReport:
    """Jointly fit encoder, latent function and decoder (unweighted loss unless a schedule is given)."""
    model.x0_cache = obs.states[0].copy()
    return fit_rollout(model, obs, trajectory_loss_and_grad, schedule or WarmupSchedule.constant(),
                       cfg or TrainConfig())
