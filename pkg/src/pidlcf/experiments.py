"""Experiment plumbing shared by the CLI and the acceptance suite.

A cell is one (model, data, n_O, alpha, seed) training run.  Everything it
draws at random derives from ``seed``: the simulated pool, the shuffle, the
collocation sample and the network initialisation.  Cells that differ only in
``alpha`` therefore see identical data and initial weights.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .calib import _initial, calibrate_ls
from .core import (CollocationPoint, Dataset, State, Trajectory, pair_states_with_actions, read_trajectory_csv,
                   shuffle_split, states_to_array)
from .errors import ConfigError, DataError
from .evaluate import one_step_mse
from .physics import PhysicsParams, accel, make_params
from .sim import SimConfig, generate_regime_dataset
from .trainer import TrainConfig, TrainReport, generate_collocation, state_box, train_joint, train_prediction_only

COLLOCATION_SOURCES = ("states", "observed_first", "box")
PHYSICS_SOURCES = ("ground_truth", "ls")


@dataclass(frozen=True)
class CellSpec:
    family: str = "IDM"
    model_values: tuple[tuple[str, float], ...] | None = None  # generating parameters, None = ground truth
    regime: str = "combined"
    sim: tuple[tuple[str, object], ...] = ()  # further SimConfig fields
    data_path: str | None = None  # trajectory directory with manifest.json, replaces simulation
    n_trajectories: int = 20
    reaction_steps: int = 1
    ratio: tuple[float, float, float] = (0.5, 0.25, 0.25)
    n_observed: int | None = 20  # None = the whole training partition
    n_collocation: int = 20
    collocation_source: str = "states"
    collocation_mode: str = "uniform_random"
    alpha: float = 0.7
    seed: int = 0

    def __post_init__(self):
        if self.collocation_source not in COLLOCATION_SOURCES:
            raise ConfigError(f"collocation_source must be one of {COLLOCATION_SOURCES}")
        if (self.n_observed is not None and self.n_observed < 1) or self.n_collocation < 0:
            raise ConfigError("n_observed must be >= 1 and n_collocation >= 0")
        if self.n_trajectories < 1 or self.reaction_steps < 1:
            raise ConfigError("n_trajectories and reaction_steps must be >= 1")

    def model(self) -> PhysicsParams:
        return make_params(self.family, None if self.model_values is None else dict(self.model_values))

    def sim_config(self) -> SimConfig:
        return SimConfig(regime=self.regime, seed=self.seed, **dict(self.sim))


_POOLS: dict = {}


def load_trajectory_dir(path: str | Path) -> tuple[list[Trajectory], dict]:
    """Trajectories listed by a ``manifest.json`` (simulation output or an ingest bundle)."""
    path = Path(path)
    manifest = path / "manifest.json"
    if not manifest.is_file():
        raise DataError(f"{path}: no manifest.json")
    doc = json.loads(manifest.read_text())
    files = doc.get("files") or [c["file"] for c in doc.get("cases", [])]
    if not files:
        raise DataError(f"{manifest}: lists no trajectory files")
    return [read_trajectory_csv(path / f) for f in files], doc


def load_pool(spec: CellSpec):
    """``(trajectories, pairs, accel_floor)`` for a cell, memoised per data source."""
    key = (spec.family, spec.model_values, spec.regime, spec.sim, spec.data_path, spec.n_trajectories,
           spec.reaction_steps, spec.seed if spec.data_path is None else None)
    if key not in _POOLS:
        if spec.data_path is not None:
            trajs, doc = load_trajectory_dir(spec.data_path)
            floor = dict(spec.sim).get("accel_floor", doc.get("sim_config", {}).get("accel_floor"))
        else:
            cfg = spec.sim_config()
            trajs, _ = generate_regime_dataset(spec.model(), cfg, spec.n_trajectories,
                                               min_length=spec.reaction_steps + 1)
            floor = cfg.accel_floor
        pairs = []
        for t in trajs:
            if len(t) > spec.reaction_steps:
                pairs += pair_states_with_actions(t, spec.reaction_steps)
        if not pairs:
            raise DataError("no trajectory is long enough for the reaction delay")
        if len(_POOLS) >= 64:
            _POOLS.clear()
        _POOLS[key] = (tuple(trajs), tuple(pairs), floor)
    return _POOLS[key]


def build_dataset(spec: CellSpec, physics: PhysicsParams | None = None, accel_floor=None):
    """Split the pool and attach collocation points labelled by ``physics``.

    Training pairs are the first ``n_observed`` of the shuffled training
    partition, the validation subset keeps the split's val/train ratio and
    the test set is the whole test partition.  Collocation states are
    unlabelled training-partition states (``states``), the labelled ones
    topped up from the same partition (``observed_first``), or draws from the
    bounding box of the training partition (``box``).  Without ``physics`` no
    collocation points are attached.  Returns ``(dataset, accel_floor)``.
    """
    _, pairs, floor = load_pool(spec)
    floor = floor if accel_floor is None else accel_floor
    split = shuffle_split(list(pairs), spec.ratio, seed=spec.seed)
    n_o = len(split.train_observed) if spec.n_observed is None else spec.n_observed
    if n_o > len(split.train_observed):
        raise DataError(f"n_observed={n_o} exceeds the {len(split.train_observed)} training pairs available")
    n_val = max(1, min(len(split.val), int(math.ceil(n_o * spec.ratio[1] / spec.ratio[0] - 1e-9))))
    ds = Dataset(split.train_observed[:n_o], split.val[:n_val], split.test)

    n_c = spec.n_collocation
    if n_c and physics is not None:
        rng = np.random.default_rng(spec.seed + 7919)
        pool_states = states_to_array(split.train_observed)
        if spec.collocation_source == "box":
            states = generate_collocation(state_box(pool_states), n_c, spec.collocation_mode, seed=spec.seed)
        else:
            if spec.collocation_source == "observed_first":
                k = min(n_c, n_o)
                rest = np.arange(n_o, pool_states.shape[0])
                idx = [*range(k), *rng.choice(rest, n_c - k, replace=n_c - k > rest.size)]
            else:
                idx = rng.choice(pool_states.shape[0], n_c, replace=n_c > pool_states.shape[0])
            states = [State(*map(float, pool_states[i])) for i in idx]
        a = accel(physics, states_to_array(states), floor)
        ds.collocation = [CollocationPoint(s, float(ai)) for s, ai in zip(states, a)]
    return ds, floor


@dataclass
class CellResult:
    spec: CellSpec
    report: TrainReport
    test_mse: float
    params: PhysicsParams | None = None
    dataset: Dataset | None = None


def cell_physics(spec: CellSpec, source: str = "ground_truth", bounds=None) -> PhysicsParams:
    """Fixed physics for prediction-only training: the generating model or LS on the training pairs."""
    if source == "ground_truth":
        if spec.data_path is not None:
            raise ConfigError("ground-truth physics is unknown for recorded data; use physics: ls")
        return spec.model()
    if source == "ls":
        ds, floor = build_dataset(spec)
        return calibrate_ls(spec.family, ds.train_observed, bounds=bounds, accel_floor=floor)
    raise ConfigError(f"physics source must be one of {PHYSICS_SOURCES}")


def run_prediction_cell(spec: CellSpec, train_cfg: TrainConfig | None = None,
                        physics: PhysicsParams | None = None) -> CellResult:
    """Prediction-only PIDL (a plain PUNN when alpha = 1); physics defaults to the generating model."""
    physics = physics or cell_physics(spec)
    ds, floor = build_dataset(spec, physics)
    cfg = replace(train_cfg or TrainConfig(), alpha=spec.alpha, seed=spec.seed, accel_floor=floor)
    rep = train_prediction_only(None, physics, ds, cfg)
    return CellResult(spec, rep, one_step_mse(rep.net, ds.test), physics, ds)


def run_joint_cell(spec: CellSpec, init: PhysicsParams | None = None,
                   train_cfg: TrainConfig | None = None) -> CellResult:
    """Joint estimation starting from ``init`` (default: the middle of the bound box)."""
    init = init or bound_midpoint(spec.family)
    ds, floor = build_dataset(spec, init)
    cfg = replace(train_cfg or TrainConfig(), alpha=spec.alpha, seed=spec.seed, accel_floor=floor)
    rep = train_joint(None, init, ds, cfg)
    return CellResult(spec, rep, one_step_mse(rep.net, ds.test), rep.params, ds)


def relative_errors(params: PhysicsParams, truth: PhysicsParams) -> dict[str, float]:
    return {n: abs(params.values[n] - truth.values[n]) / abs(truth.values[n]) for n in truth.names}


def bound_midpoint(family: str, bounds=None) -> PhysicsParams:
    return _initial(family.upper(), bounds, None)
