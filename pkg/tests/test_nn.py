import numpy as np
import pytest

from netflow_id import nn
from netflow_id.nn import AffinePairFn, AffineScalarFn, Mlp, ParamVector
from netflow_id.optim import Adam

from .gradcheck import fd_gradient, rel_error


def test_param_count_and_layout():
    assert Mlp.count_params((1, 64, 64, 1)) == 4353
    m = Mlp((2, 3, 1))
    names = [name for name, _, _ in m.layout()]
    assert names == ["W0", "b0", "W1", "b1"]
    assert m.num_params == 2 * 3 + 3 + 3 + 1


def test_weights_are_views_of_flat_params():
    m = nn.init((1, 4, 1), seed=0)
    m.params[:] = 0.0
    assert not m.weights[0].any()
    m.weights[1][0, 0] = 2.5
    assert 2.5 in m.params


def test_zero_mlp_outputs_zero():
    m = Mlp((1, 5, 5, 1))
    assert not m.forward(np.linspace(-3, 3, 7)).any()


def test_init_is_deterministic_and_glorot():
    a = nn.init((3, 50, 2), seed=4)
    b = nn.init((3, 50, 2), seed=4)
    assert np.array_equal(a.params, b.params)
    limit = np.sqrt(6 / 53)
    assert np.abs(a.weights[0]).max() <= limit
    assert not a.biases[0].any()


def test_single_layer_is_affine():
    m = Mlp((2, 1))
    m.weights[0][:] = [[2.0], [-1.0]]
    m.biases[0][:] = 0.5
    assert np.allclose(m.forward(np.array([[1.0, 3.0]])), [[2 - 3 + 0.5]])


def test_relu_and_bad_arguments():
    m = nn.init((1, 8, 1), activation="relu", seed=1)
    assert m.forward(np.ones(3)).shape == (3, 1)
    with pytest.raises(ValueError):
        Mlp((1, 4, 1), activation="sigmoid")
    with pytest.raises(ValueError):
        Mlp((1,))
    with pytest.raises(ValueError):
        m.forward(np.ones((3, 2)))
    with pytest.raises(ValueError):
        Mlp((1, 2, 1), params=np.zeros(3))


@pytest.mark.parametrize("activation", ["tanh", "relu"])
def test_mlp_backward_matches_finite_differences(activation):
    rng = np.random.default_rng(0)
    m = nn.init((3, 7, 5, 2), activation=activation, seed=2)
    m.biases[0][:] = rng.normal(size=7) * 0.3
    x = rng.normal(size=(4, 3))
    ct = rng.normal(size=(4, 2))

    def loss(p):
        return float(np.sum(Mlp(m.dims, activation, p).forward(x) * ct))

    _, cache = m.forward_cached(x)
    grad = np.zeros(m.num_params)
    gx = m.backward(cache, ct, grad)
    assert rel_error(grad, fd_gradient(loss, m.params.copy())) < 1e-6

    def loss_x(flat):
        return float(np.sum(m.forward(flat.reshape(4, 3)) * ct))

    assert rel_error(gx.reshape(-1), fd_gradient(loss_x, x.reshape(-1).copy())) < 1e-6


def test_affine_scalar_forward():
    f = AffineScalarFn((1, 4, 1))
    f.params[:2] = [1.0, -0.1]
    x = np.array([0.0, 10.0, 25.0])
    assert np.allclose(f.forward(x), 1.0 - 0.1 * x)
    assert f.c0 == 1.0 and f.c1 == -0.1


def test_affine_pair_forward_plane():
    g = AffinePairFn((2, 4, 1))
    g.params[:3] = [0.0, -0.1, 0.1]
    x = np.array([[1.0, 3.0], [5.0, 2.0]])
    assert np.allclose(g.forward(x), -0.1 * x[:, 0] + 0.1 * x[:, 1])
    assert g.forward(np.array([[0.0, 2.0]]))[0] == pytest.approx(0.2)


@pytest.mark.parametrize("scale", [1.0, 25.0])
def test_affine_backward_matches_finite_differences(scale):
    rng = np.random.default_rng(1)
    f = nn.init_affine_scalar((1, 6, 6, 1), seed=3)
    f = AffineScalarFn((1, 6, 6, 1), "tanh", f.params, input_scale=scale)
    f.params[:2] = rng.normal(size=2)
    g = nn.init_affine_pair((2, 6, 6, 1), seed=4)
    g = AffinePairFn((2, 6, 6, 1), "tanh", g.params, input_scale=scale)
    g.params[:3] = rng.normal(size=3)
    xs = rng.uniform(0, 25, 5)
    xp = rng.uniform(0, 25, (5, 2))
    cs = rng.normal(size=5)

    for fn, x, cls, dims in ((f, xs, AffineScalarFn, (1, 6, 6, 1)), (g, xp, AffinePairFn, (2, 6, 6, 1))):
        gx, grad = nn.backward(fn, x, cs)

        def loss(p):
            return float(cls(dims, "tanh", p, input_scale=scale).forward(x) @ cs)

        assert rel_error(grad, fd_gradient(loss, fn.params.copy())) < 1e-6

        def loss_x(flat):
            return float(fn.forward(flat.reshape(x.shape)) @ cs)

        assert rel_error(gx.reshape(-1), fd_gradient(loss_x, x.reshape(-1).copy())) < 1e-6


def test_param_vector_pack_unpack():
    f = nn.init_affine_pair((2, 3, 1), seed=0)
    pv = ParamVector(f.params.copy(), f.layout())
    d = pv.unpack()
    assert set(d) == {"c0", "c11", "c12", "mlp.W0", "mlp.b0", "mlp.W1", "mlp.b1"}
    assert d["mlp.W0"].shape == (2, 3)
    back = ParamVector.pack(d, f.layout())
    assert np.array_equal(back.values, f.params)
    d["mlp.W0"] = np.zeros((3, 2))
    with pytest.raises(ValueError):
        ParamVector.pack(d, f.layout())


def test_adam_minimises_quadratic():
    target = np.array([1.0, -2.0, 3.0])
    x = np.zeros(3)
    opt = Adam(3, lr=0.1)
    for _ in range(500):
        opt.step(x, 2 * (x - target))
    assert np.allclose(x, target, atol=1e-3)


def test_adam_first_step_is_lr_times_sign():
    x = np.zeros(2)
    Adam(2, lr=0.01).step(x, np.array([3.0, -0.5]))
    assert np.allclose(x, [-0.01, 0.01], rtol=1e-6)
