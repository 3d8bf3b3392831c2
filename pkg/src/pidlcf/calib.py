"""Stand-alone calibration of physics car-following models.

``calibrate_ls`` fits one-step accelerations with projected Adam.
``calibrate_ga`` fits whole trajectories with a real-coded genetic algorithm
whose fitness is the pooled position RMSPE of closed-loop rollouts.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kernels
from .core import ObservedPair, Trajectory, states_to_array, targets_to_array
from .errors import ConfigError, DataError, DivergenceError, UnsupportedFamilyError
from .mlp import AdamState, adam_update
from .physics import DEFAULT_BOUNDS, FAMILY_CODES, GRADIENT_FAMILIES, PARAM_NAMES, PhysicsParams, accel_and_param_grad

COLLISION_PENALTY = 1e3


@dataclass
class LsResult:
    params: PhysicsParams
    objective: float
    history: list[float]  # best-seen objective after each iteration


@dataclass
class GaConfig:
    population: int = 50
    generations: int = 200
    crossover_rate: float = 0.9
    mutation_rate: float = 0.1
    mutation_scale: float = 0.05  # fraction of each bound width
    elitism: int = 2
    tournament_size: int = 2
    seed: int = 0
    jobs: int = 1

    def __post_init__(self):
        if self.population < 2:
            raise ConfigError("population must be >= 2")
        if self.generations < 0:
            raise ConfigError("generations must be >= 0")
        for name in ("crossover_rate", "mutation_rate"):
            r = getattr(self, name)
            if not 0.0 <= r <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1]")
        if self.mutation_scale < 0:
            raise ConfigError("mutation_scale must be >= 0")
        if not 0 <= self.elitism <= self.population:
            raise ConfigError("elitism must lie in [0, population]")
        if self.tournament_size < 1:
            raise ConfigError("tournament_size must be >= 1")


@dataclass
class GaResult:
    params: PhysicsParams
    fitness: float
    history: list[float] = field(default_factory=list)  # best fitness per generation, initial population first


def _initial(family: str, bounds, init) -> PhysicsParams:
    """Starting parameters: ``init`` if given, else the midpoint of the bound box."""
    if init is None:
        box = {**DEFAULT_BOUNDS[family], **(bounds or {})}
        mid = {n: 0.5 * (box[n][0] + box[n][1]) for n in PARAM_NAMES[family]}
        return PhysicsParams(family, mid, bounds)
    if isinstance(init, PhysicsParams):
        return init if bounds is None else PhysicsParams(init.family, init.values, {**init.bounds, **bounds})
    return PhysicsParams(family, dict(init), bounds)


def fit_ls(
    family: str,
    observed: Sequence[ObservedPair],
    bounds=None,
    init=None,
    lr: float = 0.01,
    max_iters: int = 20000,
    free: Sequence[str] | None = None,
    accel_floor: float | None = None,
    patience: int = 100,
    min_lr: float = 1e-7,
) -> LsResult:
    """Projected Adam on the mean squared acceleration error.

    Steps are taken in coordinates normalised by each bound width, so ``lr``
    is a fraction of the feasible interval.  The learning rate halves whenever
    the best objective has not improved for ``patience`` iterations; the loop
    ends at ``max_iters`` or once it falls below ``min_lr``.  Parameters not
    listed in ``free`` stay at their initial values.
    """
    family = family.upper()
    if family not in GRADIENT_FAMILIES:
        raise UnsupportedFamilyError(f"{family} has no analytic parameter gradient; use calibrate_ga")
    if not observed:
        raise DataError("need at least one observed pair")
    p0 = _initial(family, bounds, init)
    X = states_to_array(observed)
    y = targets_to_array(observed)
    lo, hi = p0.bound_arrays()
    width = np.where(hi > lo, hi - lo, 1.0)
    mask = np.ones(len(p0.names), dtype=bool)
    if free is not None:
        unknown = set(free) - set(p0.names)
        if unknown:
            raise ConfigError(f"unknown free parameters {sorted(unknown)}")
        mask = np.array([n in free for n in p0.names])

    def evaluate(vec):
        a, G = accel_and_param_grad(p0.with_vector(vec), X, accel_floor)
        r = a - y
        return float(np.mean(r * r)), 2.0 / r.size * (r @ G)

    vec = p0.vector()
    f, g = evaluate(vec)
    if not math.isfinite(f):
        raise DivergenceError("initial objective is not finite")
    best_f, best_vec = f, vec.copy()
    opt = AdamState.like([vec])
    history = []
    stale = 0
    for _ in range(max_iters):
        if lr < min_lr:
            break
        u = [(vec - lo) / width]
        adam_update(u, [g * width * mask], opt, lr)
        vec = p0.project(lo + u[0] * width)
        f, g = evaluate(vec)
        if not math.isfinite(f) or not np.all(np.isfinite(g)):
            raise DivergenceError("non-finite objective during least-squares calibration")
        if f < best_f:
            best_f, best_vec, stale = f, vec.copy(), 0
        else:
            stale += 1
            if stale >= patience:
                lr *= 0.5
                stale = 0
                vec = best_vec.copy()
                f, g = evaluate(vec)
                opt = AdamState.like([vec])
        history.append(best_f)
    return LsResult(p0.with_vector(best_vec), best_f, history)


def calibrate_ls(family: str, observed: Sequence[ObservedPair], bounds=None, init=None, lr: float = 0.01,
                 max_iters: int = 20000, **kw) -> PhysicsParams:
    """Least-squares one-step calibration; returns the best-seen parameters."""
    return fit_ls(family, observed, bounds, init, lr, max_iters, **kw).params


class _Fitness:
    """Pooled position RMSPE of kernel rollouts; picklable for process pools."""

    def __init__(self, family: str, trajectories: Sequence[Trajectory], accel_floor):
        self.code = FAMILY_CODES[family]
        self.floor = -math.inf if accel_floor is None else float(accel_floor)
        self.cases = [
            (t.dt, np.ascontiguousarray(t.leader_pos), np.ascontiguousarray(t.leader_vel),
             float(t.follower_pos[0]), float(t.follower_vel[0]), np.ascontiguousarray(t.follower_pos))
            for t in trajectories
        ]
        self.total = sum(c[1].size for c in self.cases)
        for c in self.cases:
            if np.any(c[5] == 0):
                raise DataError("observed follower position is zero; shift the origin before calibrating")

    def __call__(self, vec) -> float:
        vec = np.ascontiguousarray(vec, dtype=float)
        sq = 0.0
        empty = np.zeros(0)
        for dt, lp, lv, x0, v0, obs in self.cases:
            xs, _, _, n, status = kernels.integrate_follower(
                self.code, vec, self.floor, dt, lp, lv, x0, v0, empty, 1, kernels.TERMINATE_NEVER, 0.0)
            if status & kernels.STATUS_COLLISION or n < lp.size:
                return COLLISION_PENALTY
            e = (np.asarray(xs) - obs) / obs
            sq += float(e @ e)
        val = math.sqrt(sq / self.total)
        return val if math.isfinite(val) else COLLISION_PENALTY


def fit_ga(
    family: str,
    trajectories: Sequence[Trajectory],
    bounds=None,
    cfg: GaConfig | None = None,
    accel_floor: float | None = None,
    initial_population: Sequence[Sequence[float]] | None = None,
) -> GaResult:
    """Real-coded GA over the bound box.

    Tournament selection, uniform crossover, Gaussian mutation clipped to the
    bounds and elitism.  Individuals given in ``initial_population`` replace
    the first random ones.
    """
    cfg = cfg or GaConfig()
    family = family.upper()
    if family not in PARAM_NAMES:
        raise UnsupportedFamilyError(f"unknown model family {family!r}")
    if not trajectories:
        raise DataError("need at least one trajectory")
    template = _initial(family, bounds, None)
    lo, hi = template.bound_arrays()
    n_par = lo.size
    rng = np.random.default_rng(cfg.seed)
    pop = rng.uniform(lo, hi, size=(cfg.population, n_par))
    if initial_population is not None:
        seeds = np.asarray(initial_population, dtype=float).reshape(-1, n_par)[: cfg.population]
        pop[: len(seeds)] = np.clip(seeds, lo, hi)
    fitness_fn = _Fitness(family, trajectories, accel_floor)

    pool = ProcessPoolExecutor(cfg.jobs) if cfg.jobs > 1 else None
    try:
        def evaluate(rows):
            if pool is None:
                return np.array([fitness_fn(r) for r in rows])
            return np.array(list(pool.map(fitness_fn, rows, chunksize=max(1, len(rows) // cfg.jobs))))

        fit = evaluate(pop)
        if np.all(fit >= COLLISION_PENALTY):
            raise DataError("every individual of the initial population collides; degenerate fitness")
        order = np.argsort(fit, kind="stable")
        history = [float(fit[order[0]])]
        sigma = cfg.mutation_scale * (hi - lo)
        n_child = cfg.population - cfg.elitism

        for _ in range(cfg.generations):
            order = np.argsort(fit, kind="stable")
            elites, elite_fit = pop[order[: cfg.elitism]], fit[order[: cfg.elitism]]

            def pick():
                idx = rng.integers(0, cfg.population, size=cfg.tournament_size)
                return pop[idx[np.argmin(fit[idx])]]

            children = np.empty((n_child, n_par))
            for i in range(n_child):
                a, b = pick(), pick()
                if rng.random() < cfg.crossover_rate:
                    child = np.where(rng.random(n_par) < 0.5, a, b)
                else:
                    child = a.copy()
                mutate = rng.random(n_par) < cfg.mutation_rate
                if mutate.any():
                    child = child + mutate * rng.normal(0.0, 1.0, n_par) * sigma
                children[i] = np.clip(child, lo, hi)
            child_fit = evaluate(children) if n_child else np.zeros(0)
            pop = np.vstack([elites, children])
            fit = np.concatenate([elite_fit, child_fit])
            history.append(float(fit.min()))
    finally:
        if pool is not None:
            pool.shutdown()

    best = int(np.argmin(fit))
    return GaResult(template.with_vector(pop[best]), float(fit[best]), history)


def calibrate_ga(family: str, trajectories: Sequence[Trajectory], bounds=None, cfg: GaConfig | None = None,
                 **kw) -> PhysicsParams:
    """Trajectory-level GA calibration; returns the fittest individual."""
    return fit_ga(family, trajectories, bounds, cfg, **kw).params


def write_result(path: str | Path, params: PhysicsParams, objective: float, method: str, seed: int | None) -> None:
    doc = {
        "family": params.family,
        "params": dict(params.values),
        "objective": objective,
        "method": method,
        "seed": seed,
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True))


def read_result(path: str | Path) -> PhysicsParams:
    doc = json.loads(Path(path).read_text())
    try:
        return PhysicsParams(doc["family"], doc["params"])
    except KeyError as exc:
        raise DataError(f"{path}: missing key {exc}") from exc
