import numpy as np
import pytest

from oracles import mlp_fd_grad, mlp_forward_ld, rel_err
from pidlcf.errors import ConfigError, DataError, DivergenceError
from pidlcf.mlp import AdamState, Mlp, adam_update, xavier_init


def _net(sizes, seed=0):
    net = xavier_init(sizes, seed)
    rng = np.random.default_rng(seed + 1)
    for b in net.biases:
        b[:] = rng.normal(0, 0.1, b.shape)
    net.set_standardizer(rng.uniform([2, -5, 0], [60, 5, 30], size=(40, 3)))
    return net


def test_forward_matches_long_double():
    net = _net((3, 8, 5, 1))
    X = np.random.default_rng(2).uniform([2, -5, 0], [60, 5, 30], size=(7, 3))
    ref = mlp_forward_ld(net.weights, net.biases, net.input_mean, net.input_std, X)
    assert np.allclose(net.forward(X), np.asarray(ref, dtype=float), rtol=1e-13, atol=1e-14)


@pytest.mark.parametrize("sizes", [(3, 4, 1), (3, 6, 5, 1), (3, 10, 10, 10, 1)])
def test_parameter_gradients_match_fd(sizes):
    net = _net(sizes, seed=len(sizes))
    rng = np.random.default_rng(3)
    X = rng.uniform([2, -5, 0], [60, 5, 30], size=(5, 3))
    up = rng.normal(size=5)
    grads = net.gradients(X, up)
    for k, g in enumerate(grads):
        for j in range(g.size):
            fd = mlp_fd_grad(net, X, up, (k, j))
            assert rel_err(g.reshape(-1)[j], fd, floor=1e-8) < 1e-5


def test_input_gradient_matches_fd():
    net = _net((3, 6, 6, 1))
    X = np.array([[20.0, 1.0, 10.0]])
    _, gx = net.gradients(X, np.ones(1), want_input_grad=True)
    for i in range(3):
        e = np.zeros(3)
        e[i] = 1e-6
        fd = (net.forward(X + e)[0] - net.forward(X - e)[0]) / 2e-6
        assert abs(gx[0, i] - fd) < 1e-6 * max(1.0, abs(fd))


def test_checkpoint_round_trip(tmp_path):
    net = _net((3, 5, 1))
    net.save(tmp_path / "n.json")
    back = Mlp.load(tmp_path / "n.json")
    X = np.random.default_rng(0).uniform(1, 20, size=(4, 3))
    assert np.array_equal(back.forward(X), net.forward(X))
    with pytest.raises(DataError):
        Mlp.from_dict({"format": "other"})


def test_shape_errors():
    with pytest.raises(ConfigError):
        xavier_init((2, 5, 1))
    with pytest.raises(ConfigError):
        xavier_init((3, 1))
    with pytest.raises(ConfigError):
        Mlp([np.zeros((3, 4)), np.zeros((5, 1))], [np.zeros(4), np.zeros(1)])


def test_xavier_is_seeded():
    a, b = xavier_init((3, 7, 1), 4), xavier_init((3, 7, 1), 4)
    assert all(np.array_equal(x, y) for x, y in zip(a.params(), b.params()))
    lim = np.sqrt(6 / 10)
    assert np.all(np.abs(a.weights[0]) <= lim)


def test_adam_first_step_is_lr_times_sign():
    p = [np.array([1.0, -2.0, 0.5])]
    opt = AdamState.like(p)
    adam_update(p, [np.array([0.3, -4.0, 0.0])], opt, lr=0.1)
    # bias-corrected first step: lr * g / (|g| + eps)
    assert np.allclose(p[0], [0.9, -1.9, 0.5], atol=1e-7)


def test_adam_rejects_non_finite():
    p = [np.zeros(2)]
    with pytest.raises(DivergenceError):
        adam_update(p, [np.array([np.nan, 0.0])], AdamState.like(p), 0.1)
