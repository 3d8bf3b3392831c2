import csv
from dataclasses import replace

import numpy as np
import pytest

from pidlcf.core import CollocationPoint, Dataset, ObservedPair, State, states_to_array, targets_to_array
from pidlcf.errors import ConfigError, DataError, DivergenceError, UnsupportedFamilyError
from pidlcf.experiments import CellSpec, bound_midpoint, build_dataset
from pidlcf.mlp import Mlp
from pidlcf.physics import PhysicsParams, make_params
from pidlcf.trainer import (EarlyStopper, TrainConfig, _lambda_grad, _PhysicsStepper, generate_collocation, pidl_loss,
                            train_joint, train_prediction_only)

IDM = make_params("IDM")
FAST = TrainConfig(hidden=(8, 8), max_epochs=300, patience=50, pretrain_epochs=0)


@pytest.fixture(scope="module")
def small():
    ds, floor = build_dataset(CellSpec(regime="accelerating", n_observed=20, n_collocation=20, seed=1), IDM)
    return ds, floor


def _constant_net(c):
    return Mlp([np.zeros((3, 2)), np.zeros((2, 1))], [np.zeros(2), np.array([c])])


def test_config_validation():
    for kw in ({"alpha": 1.5}, {"min_clip": 0.1, "max_clip": 0.1}, {"patience": 0}, {"phy_optimizer": "lbfgs"},
               {"lr_phy": -1.0}):
        with pytest.raises(ConfigError):
            TrainConfig(**kw)


def test_loss_hand_case():
    obs = [ObservedPair(State(10.0, 0.0, 5.0), 1.0), ObservedPair(State(12.0, 0.0, 5.0), -1.0)]
    col = [CollocationPoint(State(20.0, 0.0, 5.0), 2.0)]
    loss, mo, mc = pidl_loss(_constant_net(0.5), None, obs, col, 0.25)
    # residuals -0.5 and 1.5 on the data, -1.5 on the collocation point
    assert mo == pytest.approx(1.25) and mc == pytest.approx(2.25)
    assert loss == pytest.approx(0.25 * 1.25 + 0.75 * 2.25)
    with pytest.raises(DataError):
        pidl_loss(_constant_net(0.0), None, obs, [], 0.5)


def test_early_stopper_semantics():
    s = EarlyStopper(2)
    assert s.update(1, 3.0) and not s.update(2, 3.0) and not s.should_stop
    assert not s.update(3, 4.0) and s.should_stop and s.best_epoch == 1


def test_patience_one_stops_at_first_plateau(small):
    ds, floor = small
    rep = train_prediction_only(None, IDM, ds, replace(FAST, patience=1, accel_floor=floor, lr_punn=0.05))
    v = rep.val_mse
    first_bad = next(i for i in range(1, len(v)) if v[i] >= min(v[:i]))
    assert rep.epochs == first_bad + 1


def test_restored_checkpoint_reproduces_best_validation(small):
    ds, floor = small
    rep = train_prediction_only(None, IDM, ds, replace(FAST, accel_floor=floor, lr_punn=0.01))
    assert rep.best_epoch == int(np.argmin(rep.val_mse)) + 1
    got = float(np.mean((rep.net.forward(states_to_array(ds.val)) - targets_to_array(ds.val)) ** 2))
    assert abs(got - rep.best_val_mse) <= 1e-12
    assert rep.best_val_mse == min(rep.val_mse)


def test_prediction_only_never_touches_collocation_targets(small):
    ds, floor = small
    rep = train_prediction_only(None, IDM, ds, replace(FAST, accel_floor=floor, max_epochs=20))
    before, after = rep.collocation_checksum
    assert before == after and rep.params == IDM


def test_alpha_one_leaves_lambda_bit_identical(small):
    ds, floor = small
    lam0 = bound_midpoint("IDM")
    rep = train_joint(None, lam0, ds, replace(FAST, alpha=1.0, accel_floor=floor, max_epochs=50, pretrain_epochs=20))
    assert np.array_equal(rep.params.vector(), lam0.vector())
    assert all(np.array_equal(l, lam0.vector()) for l in rep.lambda_history)


def test_joint_keeps_lambda_in_bounds(small):
    ds, floor = small
    rep = train_joint(None, bound_midpoint("IDM"), ds, replace(FAST, accel_floor=floor, lr_phy=0.5))
    lo, hi = IDM.bound_arrays()
    assert all(np.all((l >= lo) & (l <= hi)) for l in rep.lambda_history)
    assert rep.lambda_history


def test_clipping_caps_raw_gradient():
    p = PhysicsParams("OVM", {"v_max": 30.0, "h_c": 10.0, "k": 0.5})
    cfg = TrainConfig(phy_optimizer="sgd", lr_phy=1.0, phy_normalized=False, clip_relative=False)
    lam = _PhysicsStepper(p, cfg).step(p.vector(), np.array([5.0, -5.0, 0.01]))
    assert np.allclose(lam, [29.9, 10.1, 0.49], rtol=0, atol=1e-15)


def test_relative_clip_scales_with_bound_width():
    p = PhysicsParams("OVM", {"v_max": 30.0, "h_c": 10.0, "k": 0.5})
    cfg = TrainConfig(phy_optimizer="sgd", lr_phy=1.0, phy_normalized=False)
    lam = _PhysicsStepper(p, cfg).step(p.vector(), np.array([100.0, 0.0, 0.0]))
    assert lam[0] == pytest.approx(30.0 - 0.1 * 55.0)


def test_lambda_gradient_matches_finite_differences(small):
    ds, floor = small
    net = train_prediction_only(None, IDM, ds, replace(FAST, max_epochs=30)).net
    X_c = states_to_array(ds.collocation)
    p = PhysicsParams("IDM", {"v0": 25.0, "T0": 1.2, "s0": 3.0, "a_max": 1.0, "b": 2.0})
    cfg = TrainConfig(alpha=0.6)
    _, _, g = _lambda_grad(p, p.vector(), net.forward(X_c), X_c, cfg)
    for i in range(len(g)):
        e = np.zeros(len(g))
        e[i] = 1e-6 * p.vector()[i]
        up = pidl_loss(net, p.with_vector(p.vector() + e), ds.train_observed, X_c, 0.6)[0]
        dn = pidl_loss(net, p.with_vector(p.vector() - e), ds.train_observed, X_c, 0.6)[0]
        fd = (up - dn) / (2 * e[i])
        assert abs(g[i] - fd) <= 1e-5 * max(abs(fd), 1e-8)


def test_collocation_generation():
    box = ((5.0, 50.0), (-3.0, 3.0), (0.0, 30.0))
    grid = generate_collocation(box, 20, "uniform_grid", seed=1)
    assert len(grid) == 20 and grid == generate_collocation(box, 20, "uniform_grid", seed=1)
    full = generate_collocation(box, 27, "uniform_grid")
    assert sorted({s.h for s in full}) == [5.0, 27.5, 50.0]
    rnd = states_to_array(generate_collocation(box, 100, "uniform_random", seed=2))
    assert np.all(rnd >= [5.0, -3.0, 0.0]) and np.all(rnd <= [50.0, 3.0, 30.0])
    with pytest.raises(ConfigError):
        generate_collocation(((0.0, 1.0), (0, 1), (0, 1)), 5)
    with pytest.raises(ConfigError):
        generate_collocation(box, 5, "sobol")


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_is_raised():
    obs = [ObservedPair(State(10.0 + i, 0.0, 5.0), 1e300 * (-1) ** i) for i in range(4)]
    ds = Dataset(obs, obs[:2], obs[:2])
    with pytest.raises(DivergenceError):
        train_prediction_only(None, None, ds, TrainConfig(alpha=1.0, hidden=(4,), max_epochs=5))


def test_input_errors(small):
    ds, _ = small
    with pytest.raises(DataError):
        train_prediction_only(None, IDM, Dataset(ds.train_observed, [], ds.test, ds.collocation), FAST)
    with pytest.raises(DataError):
        train_prediction_only(None, IDM, Dataset(ds.train_observed, ds.val, ds.test), FAST)
    with pytest.raises(UnsupportedFamilyError):
        train_joint(None, PhysicsParams("HELLY", {"c1": 0.5, "c2": 0.1, "s0": 2.0, "T0": 1.0}), ds, FAST)


def test_report_csv(tmp_path, small):
    ds, floor = small
    rep = train_joint(None, bound_midpoint("IDM"), ds, replace(FAST, max_epochs=5, accel_floor=floor))
    rep.write_csv(tmp_path / "r.csv")
    rows = list(csv.reader(open(tmp_path / "r.csv")))
    assert rows[0] == ["epoch", "train_loss", "val_mse"] and len(rows) == rep.epochs + 3
    assert rows[-2] == ["best_epoch", "test_mse", "v0", "T0", "s0", "a_max", "b"]
    assert int(rows[-1][0]) == rep.best_epoch and float(rows[-1][1]) == rep.test_mse
