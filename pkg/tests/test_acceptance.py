"""Acceptance criteria AC1-AC10.

Each test prints a one-line verdict with the measured numbers (visible with
``-s``), and the terminal summary lists PASS/FAIL per criterion.  The
experiment reproductions (AC3, AC4, AC5) are marked ``slow``.
"""

import csv
import filecmp
import time

import numpy as np
import pytest
import yaml

import ngsim_fixtures as fx
from oracles import NAMES, mlp_fd_grad, mp_param_grad, random_interior, rel_err
from pidlcf.calib import GaConfig, calibrate_ga, calibrate_ls
from pidlcf.cli import main
from pidlcf.core import pair_states_with_actions
from pidlcf.evaluate import one_step_mse, point_metric, rollout_trajectory, trajectorial_rmspe
from pidlcf.experiments import CellSpec, build_dataset, relative_errors, run_joint_cell, run_prediction_cell
from pidlcf.ingest import IngestConfig, extract_cf_cases, median_velocity, savitzky_golay, select_similar_cases
from pidlcf.mlp import xavier_init
from pidlcf.physics import PhysicsParams, accel_and_param_grad, make_params
from pidlcf.sim import SimConfig, generate_regime_dataset

WIDE = {fam: {n: (-1e9, 1e9) for n in names} for fam, names in NAMES.items()}
ALPHAS = (0.1, 0.4, 0.7, 1.0)
IDM_REGIMES = ("accelerating", "decelerating", "cruising", "emergency_braking")
OVM_SIM = (("spacing_range", (5.0, 20.0)),)


def verdict(name, ok, detail):
    print(f"\n{name} {'PASS' if ok else 'FAIL'}: {detail}")
    assert ok, detail


@pytest.mark.acceptance("AC1")
def test_ac1_gradients():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst = {}
    for family in sorted(NAMES):
        errs = []
        for _ in range(1000):
            p, s = random_interior(family, rng)
            _, g = accel_and_param_grad(PhysicsParams(family, p, WIDE[family]), np.array(s))
            errs.append(rel_err(g, mp_param_grad(family, p, *s)).max())
        worst[family] = float(max(errs))

    for sizes in [(3, 4, 1), (3, 20, 20, 1), (3, 60, 60, 60, 1)]:
        net = xavier_init(sizes, seed=len(sizes))
        for b in net.biases:
            b[:] = rng.normal(0, 0.1, b.shape)
        net.set_standardizer(rng.uniform([2, -5, 0], [60, 5, 30], size=(40, 3)))
        X = rng.uniform([2, -5, 0], [60, 5, 30], size=(4, 3))
        up = rng.normal(size=4)
        grads = net.gradients(X, up)
        errs = []
        for k, g in enumerate(grads):
            for j in rng.choice(g.size, min(g.size, 40), replace=False):
                errs.append(rel_err(g.reshape(-1)[j], mlp_fd_grad(net, X, up, (k, int(j))), floor=1e-8))
        worst["MLP" + "x".join(map(str, sizes))] = float(max(errs))
    elapsed = time.perf_counter() - t0
    ok = max(worst.values()) < 1e-5 and elapsed < 60
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    verdict("AC1", ok, f"max rel err {detail}; {elapsed:.1f}s")


@pytest.mark.acceptance("AC2")
def test_ac2_ls_self_recovery():
    t0 = time.perf_counter()
    out = {}
    for family, sim in (("IDM", {}), ("OVM", dict(OVM_SIM))):
        truth = make_params(family)
        cfg = SimConfig(regime="combined", noise_std=0.0, seed=0, **sim)
        trajs, _ = generate_regime_dataset(truth, cfg, 20)
        pairs = [p for t in trajs for p in pair_states_with_actions(t)]
        assert len(pairs) >= 2000
        got = calibrate_ls(family, pairs, accel_floor=cfg.accel_floor)
        out[family] = (len(pairs), max(relative_errors(got, truth).values()))
    elapsed = time.perf_counter() - t0
    ok = all(e < 0.02 for _, e in out.values()) and elapsed < 120
    verdict("AC2", ok, ", ".join(f"{f}: {n} pairs, max rel err {100 * e:.3f}%" for f, (n, e) in out.items())
            + f", {elapsed:.1f}s")


@pytest.mark.slow
@pytest.mark.acceptance("AC3")
def test_ac3_joint_estimation():
    t0 = time.perf_counter()
    lines, ok = [], True
    for family, sim, tol in (("IDM", (), 0.15), ("OVM", OVM_SIM, 0.10)):
        truth = make_params(family)
        errs = {}
        for n_o in (20, 400):
            spec = CellSpec(family=family, sim=sim, regime="combined", n_observed=n_o, n_collocation=180,
                            alpha=0.7, seed=0)
            errs[n_o] = relative_errors(run_joint_cell(spec).params, truth)
        improved = sum(errs[400][n] < errs[20][n] for n in truth.names)
        worst = max(errs[400].values())
        # IDM: at least 4 of 5 parameters improve; OVM: all but one of 3
        fam_ok = worst <= tol and improved >= len(truth.names) - 1
        ok &= fam_ok
        lines.append(f"{family} max err {100 * worst:.2f}% (tol {100 * tol:.0f}%), "
                     f"{improved}/{len(truth.names)} improve from n_O=20")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 900
    verdict("AC3", ok, "; ".join(lines) + f", {elapsed:.0f}s")


@pytest.mark.slow
@pytest.mark.acceptance("AC4")
def test_ac4_pidl_beats_punn():
    t0 = time.perf_counter()
    lines, ok = [], True
    for regime in IDM_REGIMES:
        best, punn = [], []
        for seed in range(10):
            mse = {a: run_prediction_cell(CellSpec(regime=regime, n_observed=20, alpha=a, seed=seed)).test_mse
                   for a in ALPHAS}
            best.append(min(mse.values()))
            punn.append(mse[1.0])
        b, p = float(np.median(best)), float(np.median(punn))
        reduction = 1.0 - b / p
        ok &= b <= p
        if regime == "emergency_braking":
            ok &= reduction >= 0.05
        lines.append(f"{regime} PIDL {b:.4g} vs PUNN {p:.4g} ({100 * reduction:.1f}% lower)")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 1800
    verdict("AC4", ok, "; ".join(lines) + f", {elapsed:.0f}s")


@pytest.mark.slow
@pytest.mark.acceptance("AC5")
def test_ac5_alpha_star_trend():
    medians = []
    for n_o in (20, 100, 400):
        stars = []
        for seed in range(5):
            mse = [run_prediction_cell(CellSpec(regime="combined", n_observed=n_o, alpha=a, seed=seed)).test_mse
                   for a in ALPHAS]
            stars.append(ALPHAS[int(np.argmin(mse))])  # ties go to the smaller alpha
        medians.append(float(np.median(stars)))
    ok = all(a <= b for a, b in zip(medians, medians[1:]))
    verdict("AC5", ok, f"median alpha* for n_O = 20, 100, 400: {medians}")


@pytest.mark.acceptance("AC6")
def test_ac6_early_stopping():
    res = run_prediction_cell(CellSpec(regime="accelerating", n_observed=20, alpha=0.7, seed=0))
    rep = res.report
    argmin = int(np.argmin(rep.val_mse))
    restored = one_step_mse(rep.net, res.dataset.val)
    gap = abs(restored - rep.best_val_mse)
    ok = argmin < len(rep.val_mse) - 1 and rep.best_epoch == argmin + 1 and gap <= 1e-12
    verdict("AC6", ok, f"best epoch {rep.best_epoch} of {rep.epochs}, restored val MSE gap {gap:.1e}")


@pytest.mark.acceptance("AC7")
def test_ac7_rollout_and_ga():
    exact = True
    for family, sim in (("IDM", {}), ("OVM", dict(OVM_SIM))):
        truth = make_params(family)
        cfg = SimConfig(regime="combined", noise_std=0.0, seed=11, **sim)
        trajs, _ = generate_regime_dataset(truth, cfg, 5)
        for tr in trajs:
            res = rollout_trajectory(truth, tr, 1, cfg.accel_floor)
            exact &= (np.array_equal(res.trajectory.follower_pos, tr.follower_pos)
                      and np.array_equal(res.trajectory.follower_vel, tr.follower_vel))

    truth = make_params("IDM")
    cfg = SimConfig(regime="combined", noise_std=0.0, seed=3)
    trajs, _ = generate_regime_dataset(truth, cfg, 3)
    fitted = calibrate_ga("IDM", trajs, cfg=GaConfig(seed=0), accel_floor=cfg.accel_floor)
    preds = [rollout_trajectory(fitted, t, 1, cfg.accel_floor).trajectory for t in trajs]
    rmspe_x, _ = trajectorial_rmspe(preds, trajs)
    ok = exact and rmspe_x < 1.0
    verdict("AC7", ok, f"rollout bit-exact: {exact}, GA position RMSPE {rmspe_x:.4f}%")


@pytest.mark.acceptance("AC8")
def test_ac8_metric_identities():
    rng = np.random.default_rng(8)
    worst_gap, mae_ok = 0.0, True
    for _ in range(1000):
        n = int(rng.integers(1, 50))
        p, t = rng.normal(0, 5, n), rng.normal(0, 5, n)
        mse = point_metric("MSE", p, t)
        rmse = point_metric("RMSE", p, t)
        worst_gap = max(worst_gap, abs(rmse**2 - mse) / max(mse, 1.0))
        mae_ok &= point_metric("MAE", p, t) <= rmse
    hand = point_metric("RMSPE", [2.0], [1.0])
    ok = worst_gap <= 1e-12 and mae_ok and hand == 100.0
    verdict("AC8", ok, f"max |RMSE^2 - MSE| {worst_gap:.1e}, MAE <= RMSE: {mae_ok}, RMSPE hand case {hand}%")


@pytest.mark.acceptance("AC9")
def test_ac9_ingest():
    t = np.arange(60) * 0.1
    mv_ok = np.allclose(median_velocity(4.0 + 11.0 * t, 0.1), 11.0, rtol=0, atol=1e-10)
    x = np.linspace(-1, 2, 90)
    sg_ok = all(np.allclose(savitzky_golay(np.polyval(np.arange(1.0, d + 2), x), 21, 3), np.polyval(
        np.arange(1.0, d + 2), x), rtol=0, atol=1e-9) for d in range(4))

    cases_ok = True
    for scene in (fx.lane_change, fx.spacing_breach, fx.short_duration):
        records, expected = scene()
        got = [(c.follower_id, c.leader_id, int(round(c.start_time / fx.DT)), len(c.trajectory))
               for c in extract_cf_cases(records, IngestConfig(), with_features=False)]
        cases_ok &= got == expected

    from test_ingest import _case, _embed
    pts = {1: (0, 0), 2: (4, 0), 3: (0, 3), 4: (4, 3), 5: (1, 1)}
    geo = [_case(i, _embed(*pts[i])) for i in (4, 2, 5, 1, 3)]
    sel_ok = [c.follower_id for c in select_similar_cases(geo, 3)] == [5, 1, 3]
    ok = mv_ok and sg_ok and cases_ok and sel_ok
    verdict("AC9", ok, f"median velocity {mv_ok}, Savitzky-Golay {sg_ok}, CF cases {cases_ok}, selection {sel_ok}")


@pytest.mark.acceptance("AC10")
def test_ac10_sweep_determinism(tmp_path):
    doc = {"experiment": "det", "seed": 1, "data": {"regime": "cruising"},
           "train": {"max_epochs": 300, "patience": 40, "hidden": [10, 10]},
           "sweep": {"n_observed": [20, 40], "alpha": [0.4, 1.0], "replicates": 2}}
    path = tmp_path / "sweep.yaml"
    path.write_text(yaml.safe_dump(doc))
    runs = [["--out", str(tmp_path / "a")], ["--out", str(tmp_path / "b")],
            ["--out", str(tmp_path / "c"), "--jobs", "2"]]
    codes = [main(["sweep", "--config", str(path), *r]) for r in runs]

    def rows(d):
        with open(tmp_path / d / "results.csv") as fh:
            return list(csv.reader(fh))

    same = rows("a") == rows("b") == rows("c")
    bytes_same = filecmp.cmp(tmp_path / "a" / "results.csv", tmp_path / "c" / "results.csv", shallow=False)
    ok = codes == [0, 0, 0] and same and bytes_same and len(rows("a")) > 1
    verdict("AC10", ok, f"{len(rows('a')) - 1} result rows identical across 3 runs: {same and bytes_same}")
