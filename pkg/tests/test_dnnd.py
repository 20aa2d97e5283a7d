import math

import numpy as np
import pytest

from netflow_id.dnnd import (DnndModel, TrainConfig, WarmupSchedule, dnnd_velocity, train_dnnd,
                             trajectory_loss_and_grad, warmup_weight, weighted_loss)
from netflow_id.dynamics import heat_field
from netflow_id.errors import TrainingError
from netflow_id.graph import Network, generate_er, generate_grid
from netflow_id.integrate import TimeSeries, solve_rk4_grid, solve_rkf45

from .gradcheck import fd_gradient, rel_error

SMALL = dict(f_dims=(1, 8, 8, 1), g_dims=(2, 8, 8, 1))


def heat_equivalent(net):
    m = DnndModel(net, **SMALL)
    m.G.params[1:3] = [-0.1, 0.1]
    return m


def test_heat_equivalent_model_reproduces_heat():
    for net in (generate_grid(6), generate_er(30, 0.2, seed=1)):
        x = np.random.default_rng(0).uniform(0, 25, net.n)
        assert np.allclose(dnnd_velocity(heat_equivalent(net), x), heat_field(net, 0.1).velocity(x),
                           rtol=1e-13, atol=1e-13)


def test_edgeless_network_uses_only_f():
    net = Network.from_edges(4, [])
    m = DnndModel.create(net, **SMALL, seed=3)
    x = np.array([0.5, 1.0, 7.0, 20.0])
    assert np.allclose(m.velocity(x), m.F.forward(x))


def test_locality():
    net = generate_er(15, 0.2, seed=2)
    m = DnndModel.create(net, **SMALL, seed=0, input_scale=25.0)
    rng = np.random.default_rng(1)
    x = rng.uniform(0, 25, net.n)
    v = m.velocity(x)
    for i in range(net.n):
        far = [j for j in range(net.n) if j != i and j not in set(net.neighbors[i])]
        y = x.copy()
        y[far] = rng.uniform(0, 25, len(far))
        assert m.velocity(y)[i] == v[i]


def test_permutation_equivariance():
    net = generate_er(12, 0.3, seed=5)
    m = DnndModel.create(net, **SMALL, seed=1)
    rng = np.random.default_rng(2)
    perm = rng.permutation(net.n)
    x = rng.uniform(0, 25, net.n)
    px = np.empty_like(x)
    px[perm] = x
    pv = m.with_network(net.permuted(perm)).velocity(px)
    assert np.allclose(pv[perm], m.velocity(x), rtol=1e-12, atol=1e-12)


def test_transfer_to_other_network():
    m = DnndModel.create(generate_grid(4), **SMALL, seed=0)
    other = generate_er(9, 0.4, seed=0)
    moved = m.with_network(other)
    assert moved.n == 9
    assert np.shares_memory(moved.params, m.params) or np.array_equal(moved.params, m.params)
    v = moved.velocity(np.linspace(0, 10, 9))
    assert v.shape == (9,) and np.all(np.isfinite(v))
    lonely = [i for i in range(9) if other.degrees[i] == 0]
    for i in lonely:
        assert v[i] == m.F.forward(np.array([np.linspace(0, 10, 9)[i]]))[0]


def test_dimension_mismatch():
    m = DnndModel.create(generate_grid(3), **SMALL, seed=0)
    with pytest.raises(ValueError):
        m.velocity(np.zeros(4))


def test_warmup_weight_values():
    assert warmup_weight(0.0, 0.7) == 1.0
    assert warmup_weight(2.0, 2.0) == pytest.approx(math.exp(-1))
    assert warmup_weight(5.0, math.inf) == 1.0
    assert warmup_weight(5.0, 1e12) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        warmup_weight(-1.0, 1.0)
    with pytest.raises(ValueError):
        warmup_weight(1.0, 0.0)


def test_weighted_loss_examples():
    obs = TimeSeries([0.0], [[3.0]])
    assert weighted_loss(obs, obs, 1.0) == 0.0
    assert weighted_loss(TimeSeries([0.0], [[5.0]]), obs, 1.0) == pytest.approx(2.0)
    tau = 0.8
    obs2 = TimeSeries([0.0, tau], [[0.0, 0.0], [0.0, 0.0]])
    pred2 = TimeSeries([0.0, tau], [[1.0, -1.0], [2.0, 0.0]])
    assert weighted_loss(pred2, obs2, tau) == pytest.approx(1 + math.exp(-1))
    assert weighted_loss(pred2, obs2, tau, "mse") == pytest.approx(1 + 2 * math.exp(-1))
    with pytest.raises(ValueError):
        weighted_loss(TimeSeries([0.0, 1.0], [[0.0], [0.0]]), obs2, tau)


def test_warmup_monotone_in_tau():
    rng = np.random.default_rng(0)
    times = np.sort(rng.uniform(0, 5, 10))
    obs = TimeSeries(times, rng.normal(size=(10, 3)))
    pred = TimeSeries(times, rng.normal(size=(10, 3)))
    losses = [weighted_loss(pred, obs, tau) for tau in (0.1, 0.5, 1.0, 2.5, 5.0, math.inf)]
    assert all(a <= b for a, b in zip(losses, losses[1:]))


def test_schedule_stages():
    s = WarmupSchedule()
    assert s.tau(0) == 0.5
    assert s.tau(399) == 0.5
    assert s.tau(400) == 1.0
    assert s.tau(1999) == math.inf
    assert s.tau(10_000) == math.inf
    with pytest.raises(ValueError):
        WarmupSchedule((1.0, 0.5))
    with pytest.raises(ValueError):
        WarmupSchedule((1.0,), 0)


def test_train_config_validation():
    with pytest.raises(ValueError, match="epochs"):
        TrainConfig(epochs=-1)
    with pytest.raises(ValueError, match="learning_rate"):
        TrainConfig(learning_rate=0)
    with pytest.raises(ValueError, match="loss"):
        TrainConfig(loss="huber")
    cfg = TrainConfig(epochs=11, learning_rate=1e-2, lr_final=1e-4)
    assert cfg.lr_at(0) == pytest.approx(1e-2)
    assert cfg.lr_at(10) == pytest.approx(1e-4)
    assert cfg.lr_at(5) == pytest.approx(1e-3)


def small_problem(n=4, seed=0):
    net = generate_er(n, 0.7, seed=seed)
    rng = np.random.default_rng(seed)
    x0 = rng.uniform(0, 25, n)
    times = np.sort(rng.uniform(0, 2, 4))
    obs = solve_rkf45(heat_field(net), x0, times)
    return net, obs


def test_trajectory_gradient_matches_finite_differences():
    for seed in range(3):
        net, obs = small_problem(seed=seed)
        m = DnndModel.create(net, **SMALL, seed=seed, input_scale=25.0)
        rng = np.random.default_rng(seed)
        m.params[:] += rng.normal(scale=0.05, size=m.num_params)
        for tau in (0.5, math.inf):
            _, grad, _ = trajectory_loss_and_grad(m, obs, tau, "mse", substeps=2)

            def loss(p):
                return trajectory_loss_and_grad(DnndModel(net, **SMALL, params=p, input_scale=25.0),
                                                obs, tau, "mse", 2)[0]

            idx = np.r_[0:2, m._n_f:m._n_f + 3, rng.choice(m.num_params, 30, replace=False)]
            assert rel_error(grad[idx], fd_gradient(loss, m.params.copy(), idx)) < 1e-5


def test_rollout_matches_rk4_grid():
    net, obs = small_problem()
    m = DnndModel.create(net, **SMALL, seed=0)
    loss, _, unweighted = trajectory_loss_and_grad(m, obs, math.inf, "mae", 3)
    pred = solve_rk4_grid(m, obs.states[0], obs.times, 3, t0=obs.times[0])
    assert loss == pytest.approx(weighted_loss(pred, obs, math.inf))
    assert unweighted == pytest.approx(loss)


def test_zero_epochs_leaves_model_unchanged():
    net, obs = small_problem()
    m = DnndModel.create(net, **SMALL, seed=0)
    before = m.params.copy()
    rep = train_dnnd(m, obs, cfg=TrainConfig(epochs=0))
    assert np.array_equal(m.params, before)
    assert rep.weighted_loss == [] and rep.unweighted_loss == []


def test_training_is_deterministic_and_reduces_loss():
    net, obs = small_problem()
    cfg = TrainConfig(epochs=30, learning_rate=1e-2, substeps_per_obs=1)
    runs = []
    for _ in range(2):
        m = DnndModel.create(net, **SMALL, seed=0, input_scale=25.0)
        rep = train_dnnd(m, obs, WarmupSchedule.constant(), cfg)
        runs.append((m.params.copy(), rep.unweighted_loss))
    assert np.array_equal(runs[0][0], runs[1][0])
    assert runs[0][1][-1] < runs[0][1][0]


def test_divergent_rollout_aborts_with_diagnostic():
    net, obs = small_problem()
    m = DnndModel(net, **SMALL)
    m.F.params[1] = 1e80             # the first RK4 step already overflows
    with pytest.raises(TrainingError, match="epoch 0"):
        train_dnnd(m, obs, cfg=TrainConfig(epochs=3))


def test_two_node_heat_recovery():
    net = Network.from_edges(2, [(0, 1)])
    f = heat_field(net)
    obs = solve_rkf45(f, np.array([5.0, 20.0]), np.linspace(0.025, 5, 200))
    m = DnndModel.create(net, (1, 16, 16, 1), (2, 16, 16, 1), seed=0, input_scale=25.0)
    train_dnnd(m, obs, WarmupSchedule(epochs_per_stage=12),
               TrainConfig(epochs=60, learning_rate=1e-2, lr_final=1e-4, substeps_per_obs=1))
    # the total is conserved, so only states on the visited line are identifiable
    err = np.mean([np.abs(m.velocity(x) - f.velocity(x)).mean() for x in obs.states])
    assert err < 0.05
