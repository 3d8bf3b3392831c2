"""Command-line experiment runner.

    pidlcf <simulate|calibrate|train|evaluate|sweep|ingest> --config run.yaml --out DIR [--seed N] [--jobs N]

Exit codes: 0 success, 2 configuration error, 3 numeric divergence, 4 data error.
Every command writes ``manifest.json`` into ``--out`` holding the fully
resolved config, so defaults that affected the numbers are on record.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .calib import fit_ga, fit_ls, read_result, write_result
from .core import states_to_array, targets_to_array
from .config import Config, ga_config, ingest_config, load_config, resolved, sim_config, train_config
from .errors import ConfigError, DataError, DivergenceError
from .evaluate import METRICS, point_metric, rollout_trajectory, trajectorial_rmspe
from .experiments import (CellSpec, bound_midpoint, build_dataset, cell_physics, load_pool, run_joint_cell,
                          run_prediction_cell)
from .ingest import extract_cf_cases, read_ngsim_csv, select_similar_cases, write_case_bundle
from .mlp import Mlp
from .physics import PhysicsParams, accel, make_params
from .sim import generate_regime_dataset, write_dataset

RESULT_COLUMNS = ("experiment", "model", "n_O", "alpha", "seed", "metric", "value")
SUMMARY_COLUMNS = ("experiment", "model", "n_O", "alpha", "metric", "n", "median", "q1", "q3")

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGENCE, EXIT_DATA = 0, 2, 3, 4


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return "" if x is None else str(x)


def write_rows(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(x) for x in r])


def _write_manifest(out: Path, command: str, cfg: Config, outputs, **extra) -> None:
    path = out / "manifest.json"
    doc = json.loads(path.read_text()) if path.is_file() else {}
    doc.update({
        "command": command,
        "config": resolved(cfg),
        "outputs": sorted(outputs),
        "kernel_backend": kernels.BACKEND,
        "version": __version__,
        **extra,
    })
    path.write_text(json.dumps(doc, indent=2, sort_keys=True))


def _bounds(cfg: Config):
    return None if cfg.model.bounds is None else {k: tuple(v) for k, v in cfg.model.bounds.items()}


def _freeze(value):
    return tuple(value) if isinstance(value, list) else value


def cell_spec(cfg: Config, seed: int | None = None, n_observed=..., alpha: float | None = None) -> CellSpec:
    """The :class:`CellSpec` a config describes, optionally with a sweep cell's overrides."""
    params = cfg.model.params
    return CellSpec(
        family=cfg.model.family,
        model_values=None if params is None else tuple(sorted(params.items())),
        regime=cfg.data.regime,
        sim=tuple(sorted((k, _freeze(v)) for k, v in cfg.data.sim.items())),
        data_path=cfg.resolve_path(cfg.data.path) if cfg.data.source == "files" else None,
        n_trajectories=cfg.data.n_trajectories,
        reaction_steps=cfg.data.reaction_steps,
        ratio=tuple(cfg.split.ratio),
        n_observed=cfg.split.n_observed if n_observed is ... else n_observed,
        n_collocation=cfg.split.n_collocation,
        collocation_source=cfg.split.collocation_source,
        collocation_mode=cfg.split.collocation_mode,
        alpha=cfg.train.alpha if alpha is None else alpha,
        seed=cfg.seed if seed is None else seed,
    )


def model_label(family: str, alpha: float) -> str:
    return "PUNN" if alpha == 1.0 else f"PIDL-{family}"


def _physics(cfg: Config, spec: CellSpec) -> PhysicsParams:
    src = cfg.train.physics
    if src.endswith(".json"):
        return read_result(cfg.resolve_path(src))
    return cell_physics(spec, src, _bounds(cfg))


def _joint_init(cfg: Config) -> PhysicsParams:
    if cfg.train.init is None:
        return bound_midpoint(cfg.model.family, _bounds(cfg))
    return make_params(cfg.model.family, cfg.train.init, _bounds(cfg))


def run_cell(cfg: Config, spec: CellSpec):
    """Train one cell in the mode the config selects."""
    tcfg = train_config(cfg, spec.alpha, spec.seed)
    if cfg.train.mode == "joint":
        return run_joint_cell(spec, _joint_init(cfg), tcfg)
    return run_prediction_cell(spec, tcfg, _physics(cfg, spec))


def cmd_simulate(cfg: Config, out: Path, jobs: int = 1) -> None:
    model = make_params(cfg.model.family, cfg.model.params, _bounds(cfg))
    scfg = sim_config(cfg)
    trajs, rejected = generate_regime_dataset(model, scfg, cfg.data.n_trajectories,
                                              min_length=cfg.data.reaction_steps + 1)
    write_dataset(trajs, out, model, scfg, rejected)
    print(f"wrote {len(trajs)} trajectories to {out} ({rejected} rejected runs)")
    _write_manifest(out, "simulate", cfg, ["manifest.json"] + [f"traj_{i:05d}.csv" for i in range(len(trajs))])


def cmd_calibrate(cfg: Config, out: Path, jobs: int = 1) -> None:
    spec = cell_spec(cfg)
    c = cfg.calibrate
    init = None if c.init is None else make_params(cfg.model.family, c.init, _bounds(cfg))
    if c.method == "ls":
        ds, floor = build_dataset(spec)
        res = fit_ls(cfg.model.family, ds.train_observed, _bounds(cfg), init, c.lr, c.max_iters, c.free,
                     floor, c.patience)
        params, objective = res.params, res.objective
    else:
        trajs, _, floor = load_pool(spec)
        res = fit_ga(cfg.model.family, list(trajs), _bounds(cfg), ga_config(cfg, jobs), floor,
                     initial_population=None if init is None else [init])
        params, objective = res.params, res.fitness
    write_result(out / "params.json", params, objective, c.method, cfg.seed)
    print(json.dumps(dict(params.values)))
    _write_manifest(out, "calibrate", cfg, ["params.json", "manifest.json"])


def cmd_train(cfg: Config, out: Path, jobs: int = 1) -> None:
    spec = cell_spec(cfg)
    res = run_cell(cfg, spec)
    res.report.net.save(out / "checkpoint.json")
    res.report.write_csv(out / "report.csv")
    objective = res.report.best_val_mse
    write_result(out / "params.json", res.params, objective, cfg.train.mode, cfg.seed)
    rows = [(cfg.experiment, model_label(spec.family, spec.alpha), len(res.dataset.train_observed), spec.alpha,
             spec.seed, "test_MSE", res.test_mse)]
    write_rows(out / "results.csv", RESULT_COLUMNS, rows)
    print(f"best epoch {res.report.best_epoch}, val MSE {res.report.best_val_mse:.6g}, test MSE {res.test_mse:.6g}")
    _write_manifest(out, "train", cfg, ["checkpoint.json", "report.csv", "params.json", "results.csv", "manifest.json"],
                    best_epoch=res.report.best_epoch, epochs=res.report.epochs)


def _load_predictor(cfg: Config):
    ev = cfg.evaluate
    if (ev.checkpoint is None) == (ev.params is None):
        raise ConfigError("evaluate needs exactly one of checkpoint or params")
    if ev.checkpoint is not None:
        return Mlp.load(cfg.resolve_path(ev.checkpoint)), model_label(cfg.model.family, cfg.train.alpha), cfg.train.alpha
    p = read_result(cfg.resolve_path(ev.params))
    return p, p.family, None


def cmd_evaluate(cfg: Config, out: Path, jobs: int = 1) -> None:
    model, label, alpha = _load_predictor(cfg)
    spec = cell_spec(cfg)
    unknown = [m for m in cfg.evaluate.metrics if m.upper() not in METRICS]
    if unknown:
        raise ConfigError(f"evaluate.metrics: unknown metric(s) {unknown}; expected {METRICS}")
    rows = []
    if cfg.evaluate.kind == "one_step":
        ds, floor = build_dataset(spec)
        X = states_to_array(ds.test)
        y = targets_to_array(ds.test)
        if isinstance(model, PhysicsParams):
            pred = np.asarray(accel(model, X, floor))
        else:
            pred = model(X)
        n_o = len(ds.train_observed)
        for m in cfg.evaluate.metrics:
            rows.append((cfg.experiment, label, n_o, alpha, spec.seed, f"test_{m.upper()}",
                         point_metric(m, pred, y)))
    else:
        trajs, _, floor = load_pool(spec)
        predicted, kept, collided = [], [], 0
        for t in trajs:
            r = rollout_trajectory(model, t, spec.reaction_steps, floor)
            if r.collided or r.trajectory is None:
                collided += 1
                continue
            predicted.append(r.trajectory)
            kept.append(t)
        if not kept:
            raise DataError("every rollout collided")
        ex, ev_ = trajectorial_rmspe(predicted, kept)
        rows += [(cfg.experiment, label, None, alpha, spec.seed, "RMSPE_x", ex),
                 (cfg.experiment, label, None, alpha, spec.seed, "RMSPE_v", ev_),
                 (cfg.experiment, label, None, alpha, spec.seed, "collisions", collided)]
    write_rows(out / "results.csv", RESULT_COLUMNS, rows)
    for r in rows:
        print(f"{r[5]} = {_fmt(r[6])}")
    _write_manifest(out, "evaluate", cfg, ["results.csv", "manifest.json"])


def _sweep_cell(job):
    cfg, spec = job
    res = run_cell(cfg, spec)
    extra = [] if cfg.train.mode != "joint" else [(f"lambda.{k}", v) for k, v in res.params.values.items()]
    return [("test_MSE", res.test_mse), ("best_epoch", res.report.best_epoch), *extra]


def _quartiles(values):
    q1, med, q3 = np.percentile(np.asarray(values, dtype=float), [25, 50, 75])
    return float(med), float(q1), float(q3)


def sweep_cells(cfg: Config) -> list[CellSpec]:
    """Cells in output order: replicate, then n_O, then alpha; replicate r uses seed + r."""
    return [cell_spec(cfg, cfg.seed + r, n, a)
            for r in range(cfg.sweep.replicates) for n in cfg.sweep.n_observed for a in cfg.sweep.alpha]


def cmd_sweep(cfg: Config, out: Path, jobs: int = 1) -> None:
    cells = sweep_cells(cfg)
    jobs_list = [(cfg, s) for s in cells]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            metrics = list(pool.map(_sweep_cell, jobs_list))
    else:
        metrics = [_sweep_cell(j) for j in jobs_list]
    fam = cfg.model.family
    rows, mse = [], {}
    for spec, ms in zip(cells, metrics):
        for name, value in ms:
            rows.append((cfg.experiment, model_label(fam, spec.alpha), spec.n_observed, spec.alpha, spec.seed,
                         name, value))
        mse[(spec.n_observed, spec.alpha, spec.seed)] = dict(ms)["test_MSE"]
    summary = []
    seeds = [cfg.seed + r for r in range(cfg.sweep.replicates)]
    for n in cfg.sweep.n_observed:
        for a in cfg.sweep.alpha:
            vals = [mse[(n, a, s)] for s in seeds]
            summary.append((cfg.experiment, model_label(fam, a), n, a, "test_MSE", len(vals), *_quartiles(vals)))
        stars = []
        for s in seeds:
            # ties go to the alpha listed first
            best = min(cfg.sweep.alpha, key=lambda a: (mse[(n, a, s)], cfg.sweep.alpha.index(a)))
            stars.append(best)
            rows.append((cfg.experiment, f"PIDL-{fam}", n, None, s, "alpha_star", best))
        summary.append((cfg.experiment, f"PIDL-{fam}", n, None, "alpha_star", len(stars), *_quartiles(stars)))
    write_rows(out / "results.csv", RESULT_COLUMNS, rows)
    write_rows(out / "summary.csv", SUMMARY_COLUMNS, summary)
    for r in summary:
        print(",".join(_fmt(x) for x in r))
    _write_manifest(out, "sweep", cfg, ["results.csv", "summary.csv", "manifest.json"], cells=len(cells))


def cmd_ingest(cfg: Config, out: Path, jobs: int = 1) -> None:
    ic = cfg.ingest
    if ic.input is None:
        raise ConfigError("ingest.input is required")
    icfg = ingest_config(cfg)
    records = read_ngsim_csv(cfg.resolve_path(ic.input), ic.columns, ic.frame_period, ic.position_scale)
    cases = extract_cf_cases(records, icfg, with_features=ic.with_features or ic.select is not None)
    if ic.select is not None:
        cases = select_similar_cases(cases, ic.select)
    write_case_bundle(cases, out, icfg)
    print(f"wrote {len(cases)} car-following cases to {out}")
    _write_manifest(out, "ingest", cfg, ["manifest.json"] + [f"case_{i:05d}.csv" for i in range(len(cases))])


COMMANDS = {
    "simulate": cmd_simulate,
    "calibrate": cmd_calibrate,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "sweep": cmd_sweep,
    "ingest": cmd_ingest,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pidlcf", description="Physics-informed deep learning for car following")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="YAML experiment config")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--jobs", type=int, default=1, help="worker processes (sweep, GA)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        cfg = load_config(args.config, args.seed)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](cfg, out, args.jobs)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DivergenceError, FloatingPointError) as exc:
        print(f"numeric divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
