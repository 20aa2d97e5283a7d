import math

import numpy as np
import pytest

from netflow_id.dnnd import TrainConfig
from netflow_id.dynamics import heat_field
from netflow_id.graph import generate_er, generate_grid
from netflow_id.integrate import SolverConfig, solve_rkf45
from netflow_id.ndcn import NdcnModel, ndcn_flow_branch, train_ndcn, trajectory_loss_and_grad

from .gradcheck import fd_gradient, rel_error

TIGHT = SolverConfig(rtol=1e-10, atol=1e-12)


def linear_heat_model(net, alpha):
    """d = 1 with identity encoder/decoder and f(z) = -alpha z, i.e. the heat equation."""
    m = NdcnModel(net, d=1, enc_dims=(1, 1), f_dims=(1, 1), dec_dims=(1, 1))
    m.encoder.weights[0][:] = 1.0
    m.f_latent.weights[0][:] = -alpha
    m.decoder.weights[0][:] = 1.0
    return m


def test_default_architecture():
    m = NdcnModel.create(generate_grid(3), seed=0)
    assert m.enc_dims == (1, 20, 20) and m.f_dims == (20, 20, 20) and m.dec_dims == (20, 20, 1)
    assert m.num_params == (20 + 20 + 400 + 20) + (400 + 20 + 400 + 20) + (400 + 20 + 20 + 1)
    with pytest.raises(ValueError):
        NdcnModel(generate_grid(3), d=4, enc_dims=(1, 3))


def test_zero_decoder_predicts_zeros():
    net = generate_grid(3)
    m = NdcnModel.create(net, d=5, seed=1)
    m.params[m.slices["dec"]] = 0.0
    out = m.predict(np.linspace(0, 20, net.n), [0.5, 1.0])
    assert not out.states.any()


def test_identity_construction_reproduces_heat():
    net = generate_er(20, 0.2, seed=4)
    x0 = np.random.default_rng(0).uniform(0, 25, net.n)
    ts = [0.1, 0.5, 2.0]
    want = solve_rkf45(heat_field(net, 1.0), x0, ts, TIGHT).states
    got = linear_heat_model(net, 1.0).predict(x0, ts, cfg=TIGHT).states
    assert np.allclose(got, want, rtol=1e-8, atol=1e-8)


def test_latent_semigroup():
    net = generate_grid(3)
    m = NdcnModel.create(net, d=6, seed=2)
    lat = m.latent_field()
    H0 = m.encode(np.linspace(0, 25, net.n)).reshape(-1)
    straight = solve_rkf45(lat, H0, [3.0], TIGHT).states[0]
    mid = solve_rkf45(lat, H0, [1.2], TIGHT).states[0]
    restart = solve_rkf45(lat, mid, [3.0], TIGHT, t0=1.2).states[0]
    assert np.allclose(straight, restart, rtol=1e-8, atol=1e-10)


def test_flow_branch():
    net = generate_grid(3)
    m = NdcnModel.create(net, d=6, seed=3)
    x0 = np.linspace(1, 20, net.n)
    ts = np.linspace(0, 2, 5)
    a, b = ndcn_flow_branch(m, x0, 0.0, 2.0, ts)
    assert np.array_equal(a.states, b.states)
    a, b = ndcn_flow_branch(m, x0, 1.0, 3.0, np.linspace(1, 3, 5))
    assert a.states.shape == b.states.shape == (5, net.n)
    with pytest.raises(ValueError):
        ndcn_flow_branch(m, x0, 2.0, 1.0, ts)
    with pytest.raises(ValueError):
        ndcn_flow_branch(m, x0, 1.0, 2.0, ts)


def test_permutation_equivariance():
    net = generate_er(10, 0.3, seed=6)
    m = NdcnModel.create(net, d=4, seed=0)
    rng = np.random.default_rng(5)
    perm = rng.permutation(net.n)
    x0 = rng.uniform(0, 25, net.n)
    px = np.empty_like(x0)
    px[perm] = x0
    moved = NdcnModel(net.permuted(perm), 4, params=m.params.copy())
    a = m.predict(x0, [0.5, 1.5], cfg=TIGHT).states
    b = moved.predict(px, [0.5, 1.5], cfg=TIGHT).states
    assert np.allclose(b[:, perm], a, rtol=1e-8, atol=1e-8)


def test_trajectory_gradient_matches_finite_differences():
    net = generate_er(4, 0.7, seed=1)
    rng = np.random.default_rng(1)
    x0 = rng.uniform(0, 25, net.n)
    obs = solve_rkf45(heat_field(net), x0, np.sort(rng.uniform(0, 2, 4)))
    m = NdcnModel.create(net, d=3, seed=1)
    for tau in (0.5, math.inf):
        _, grad, _ = trajectory_loss_and_grad(m, obs, tau, "mse", 2)

        def loss(p):
            return trajectory_loss_and_grad(NdcnModel(net, 3, params=p), obs, tau, "mse", 2)[0]

        assert rel_error(grad, fd_gradient(loss, m.params.copy())) < 1e-5


def test_training_reduces_loss():
    net = generate_grid(3)
    x0 = np.random.default_rng(2).uniform(0, 25, net.n)
    obs = solve_rkf45(heat_field(net), x0, np.linspace(0.1, 3, 10))
    m = NdcnModel.create(net, d=5, seed=0)
    rep = train_ndcn(m, obs, TrainConfig(epochs=40, learning_rate=1e-2, substeps_per_obs=1))
    assert rep.unweighted_loss[-1] < rep.unweighted_loss[0]
    assert set(rep.taus) == {math.inf}
    assert np.array_equal(m.x0_cache, obs.states[0])
