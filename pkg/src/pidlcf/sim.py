"""Synthetic leader/follower trajectories under a physics car-following model.

The leader cruises at a constant speed; the follower is integrated with
explicit Euler by :func:`pidlcf.kernels.integrate_follower`, the same code
path that :func:`pidlcf.evaluate.rollout` uses for physics predictors.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from . import kernels
from .core import Trajectory, write_trajectory_csv
from .errors import CollisionError, ConfigError, DataError, GenerationExhaustedError
from .physics import FAMILY_CODES, PhysicsParams, accel

REGIMES = ("accelerating", "decelerating", "cruising", "emergency_braking", "combined")
EMERGENCY_FLOOR = -2.0


@dataclass
class SimConfig:
    regime: str = "combined"
    dt: float = 0.1
    horizon: float = 20.0
    max_horizon: float = 60.0
    follower_v_range: tuple[float, float] = (0.0, 30.0)
    spacing_range: tuple[float, float] = (5.0, 100.0)
    leader_v_range: tuple[float, float] = (0.0, 30.0)
    noise_std: float = 0.05
    accel_floor: float | None = None
    zero_tol: float = 1e-3
    start_pos: float = 1.0
    seed: int = 0
    max_attempts_per_run: int = 500

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ConfigError(f"unknown regime {self.regime!r}; expected one of {REGIMES}")
        if not self.dt > 0:
            raise ConfigError("dt must be positive")
        if self.noise_std < 0:
            raise ConfigError("noise_std must be >= 0")
        if self.start_pos < 1.0:
            raise ConfigError("start_pos must be >= 1 m so position percentage errors stay bounded")
        for name in ("follower_v_range", "spacing_range", "leader_v_range"):
            lo, hi = getattr(self, name)
            if lo > hi or lo < 0:
                raise ConfigError(f"{name} must be a non-negative (low, high) interval")
            setattr(self, name, (float(lo), float(hi)))
        if self.regime in ("emergency_braking", "combined") and self.accel_floor is None:
            self.accel_floor = EMERGENCY_FLOOR

    @property
    def floor(self) -> float:
        return -math.inf if self.accel_floor is None else self.accel_floor

    def n_steps(self) -> int:
        span = self.horizon if self.regime in ("cruising", "combined") else self.max_horizon
        return int(round(span / self.dt))


def equilibrium_spacing(model: PhysicsParams, v: float) -> float:
    """Spacing giving zero acceleration behind a leader at the same speed ``v``."""
    f = lambda h: accel(model, np.array([[h, 0.0, v]]))[0]
    lo, hi = 1e-3, 1.0
    while f(hi) < 0:
        hi *= 2.0
        if hi > 1e5:
            raise ConfigError(f"no equilibrium spacing for v={v}")
    if f(lo) > 0:
        raise ConfigError(f"no equilibrium spacing for v={v}")
    return brentq(f, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps)


def _sample_initial(cfg: SimConfig, model: PhysicsParams, rng: np.random.Generator):
    if cfg.regime == "cruising":
        v = rng.uniform(*cfg.follower_v_range)
        return equilibrium_spacing(model, v), v, v
    return (
        rng.uniform(*cfg.spacing_range),
        rng.uniform(*cfg.follower_v_range),
        rng.uniform(*cfg.leader_v_range),
    )


def _integrate(model: PhysicsParams, cfg: SimConfig, spacing: float, v_f: float, v_l: float):
    n = cfg.n_steps() + 1
    leader_vel = np.full(n, float(v_l))
    leader_pos = cfg.start_pos + spacing + v_l * cfg.dt * np.arange(n)
    terminate = (
        kernels.TERMINATE_NEVER
        if cfg.regime in ("cruising", "combined")
        else kernels.TERMINATE_ON_ZERO_OR_FLIP
    )
    xs, vs, acc, k, status = kernels.integrate_follower(
        FAMILY_CODES[model.family], model.vector(), cfg.floor, cfg.dt,
        leader_pos, leader_vel, cfg.start_pos, float(v_f), np.zeros(0), 1, terminate, cfg.zero_tol,
    )
    return leader_pos[:k], leader_vel[:k], xs[:k], vs[:k], acc[:k], status


def regime_ok(regime: str, clean_acc: np.ndarray, floor: float | None, tol: float) -> bool:
    """Whether a noise-free acceleration record stays inside its regime."""
    a = clean_acc
    if regime == "accelerating":
        return bool(np.all(a > 0))
    if regime == "decelerating":
        return bool(np.all((a > EMERGENCY_FLOOR) & (a < 0)))
    if regime == "cruising":
        return bool(np.all(np.abs(a) < tol))
    if regime == "emergency_braking":
        return bool(floor is not None and a[0] == floor and np.all(a <= 0))
    return True


def simulate_pair(
    model: PhysicsParams,
    cfg: SimConfig,
    initial: tuple[float, float, float] | None = None,
    rng: np.random.Generator | None = None,
) -> Trajectory:
    """Simulate one leader/follower pair.

    ``initial`` is ``(spacing, follower_speed, leader_speed)``; when omitted it
    is drawn from the configured ranges.  Gaussian noise is added to the
    recorded accelerations only; the dynamics use the clean values.
    """
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    if initial is None:
        initial = _sample_initial(cfg, model, rng)
    spacing, v_f, v_l = initial
    if spacing <= 0:
        raise CollisionError("initial spacing must be positive")
    lp, lv, xs, vs, acc, status = _integrate(model, cfg, spacing, v_f, v_l)
    if status & kernels.STATUS_COLLISION:
        raise CollisionError(f"follower collided with its leader (initial={initial})")
    if status & kernels.STATUS_SPEED_CLAMPED:
        raise DataError(f"follower speed hit zero under Euler integration (initial={initial})")
    if xs.size < 2:
        raise DataError("simulation terminated before the second sample")
    recorded = acc.copy()
    if cfg.noise_std > 0:
        recorded = recorded + rng.normal(0.0, cfg.noise_std, size=recorded.size)
    if cfg.accel_floor is not None:
        recorded = np.maximum(recorded, cfg.accel_floor)
    return Trajectory(cfg.dt, lp, lv, xs, vs, recorded, clean_acc=acc)


def generate_regime_dataset(
    model: PhysicsParams, cfg: SimConfig, target_count: int, min_length: int = 2
) -> tuple[list[Trajectory], int]:
    """Draw initial conditions until ``target_count`` regime-consistent runs exist.

    Returns the accepted trajectories and the number of rejected runs.
    """
    if target_count < 1:
        raise ConfigError("target_count must be >= 1")
    rng = np.random.default_rng(cfg.seed)
    out: list[Trajectory] = []
    rejected = 0
    budget = target_count * cfg.max_attempts_per_run
    for _ in range(budget):
        if len(out) == target_count:
            break
        try:
            traj = simulate_pair(model, cfg, rng=rng)
        except (DataError, ConfigError):
            rejected += 1
            continue
        if len(traj) < min_length or not regime_ok(cfg.regime, traj.clean_acc, cfg.accel_floor, cfg.zero_tol):
            rejected += 1
            continue
        out.append(traj)
    if len(out) < target_count:
        raise GenerationExhaustedError(
            f"only {len(out)} of {target_count} {cfg.regime} runs after {budget} attempts"
        )
    return out, rejected


def write_dataset(trajs, out_dir: str | Path, model: PhysicsParams, cfg: SimConfig, rejected: int = 0) -> Path:
    """Write one CSV per trajectory plus ``manifest.json``; returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = []
    for i, t in enumerate(trajs):
        name = f"traj_{i:05d}.csv"
        write_trajectory_csv(t, out_dir / name)
        files.append(name)
    cfg_dict = asdict(cfg)
    manifest = {
        "files": files,
        "regime": cfg.regime,
        "seed": cfg.seed,
        "model": model.to_dict(),
        "sim_config": cfg_dict,
        "rejected_runs": rejected,
        "position_origin": f"follower starts at x = {cfg.start_pos} m",
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return path
