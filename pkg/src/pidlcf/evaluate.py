"""Accuracy metrics and closed-loop trajectory rollout."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import kernels
from .core import ObservedPair, Trajectory, states_to_array, targets_to_array
from .errors import DataError, UndefinedMetricError
from .physics import FAMILY_CODES, PhysicsParams, accel

METRICS = ("MSE", "MAE", "RMSE", "RMSPE")


def as_predictor(model, accel_floor: float | None = None, dt: float = 0.1) -> Callable[[np.ndarray], np.ndarray]:
    """Wrap physics parameters (or any callable on ``(N, 3)`` states) as a batch predictor."""
    if isinstance(model, PhysicsParams):
        return lambda X: np.asarray(accel(model, np.asarray(X, dtype=float).reshape(-1, 3), accel_floor, dt))
    if callable(model):
        return model
    raise TypeError(f"cannot predict with {type(model).__name__}")


def point_metric(kind: str, preds, targets) -> float:
    """MSE, MAE, RMSE or RMSPE (the last in percent)."""
    p = np.asarray(preds, dtype=float).ravel()
    t = np.asarray(targets, dtype=float).ravel()
    if p.size != t.size or p.size == 0:
        raise DataError(f"need equal non-empty lengths, got {p.size} and {t.size}")
    kind = kind.upper()
    err = p - t
    if kind == "MSE":
        return float(np.mean(err**2))
    if kind == "MAE":
        return float(np.mean(np.abs(err)))
    if kind == "RMSE":
        return float(np.sqrt(np.mean(err**2)))
    if kind == "RMSPE":
        if np.any(t == 0):
            raise UndefinedMetricError("RMSPE undefined with a zero target")
        return float(np.sqrt(np.mean((err / t) ** 2)) * 100.0)
    raise DataError(f"unknown metric {kind!r}; expected one of {METRICS}")


def one_step_mse(predictor, test: Sequence[ObservedPair]) -> float:
    if not test:
        raise DataError("empty test set")
    pred = as_predictor(predictor)(states_to_array(test))
    return point_metric("MSE", pred, targets_to_array(test))


@dataclass
class RolloutResult:
    trajectory: Trajectory
    collided: bool
    steps: int
    error: str | None = None


def rollout(
    model,
    leader_pos,
    leader_vel,
    x0: float,
    v0: float,
    dt: float = 0.1,
    reaction_steps: int = 1,
    observed_acc=None,
    accel_floor: float | None = None,
) -> RolloutResult:
    """Reproduce a follower trajectory from its initial state.

    ``model`` is :class:`PhysicsParams` (integrated by the compiled kernel) or a
    callable on ``(N, 3)`` state batches such as a trained network.  With
    ``reaction_steps = R`` the action applied on step ``k -> k+1`` comes from
    the state at ``k + 1 - R``; the first ``R`` entries of ``observed_acc``
    serve as warm-start actions before any predicted state exists.
    """
    lp = np.ascontiguousarray(leader_pos, dtype=float)
    lv = np.ascontiguousarray(leader_vel, dtype=float)
    if lp.size < 2 or lv.size != lp.size:
        raise DataError("leader series must share one length >= 2")
    R = int(reaction_steps)
    if R < 1:
        raise DataError("reaction_steps must be >= 1")
    warm = np.zeros(0) if observed_acc is None else np.ascontiguousarray(observed_acc, dtype=float)
    if R > 1 and warm.size < min(R, lp.size):
        raise DataError(f"need {R} observed accelerations to warm-start a delayed rollout")
    floor = -math.inf if accel_floor is None else float(accel_floor)

    if isinstance(model, PhysicsParams):
        xs, vs, acc, n, status = kernels.integrate_follower(
            FAMILY_CODES[model.family], model.vector(), floor, dt, lp, lv,
            float(x0), float(v0), warm, R, kernels.TERMINATE_NEVER, 0.0,
        )
    else:
        xs, vs, acc, n, status = _integrate_callable(model, floor, dt, lp, lv, float(x0), float(v0), warm, R)

    collided = bool(status & kernels.STATUS_COLLISION)
    n = int(n)
    if n < 2:
        return RolloutResult(None, True, 0, "collision on first step")  # type: ignore[arg-type]
    traj = Trajectory(dt, lp[:n], lv[:n], xs[:n], vs[:n], acc[:n])
    return RolloutResult(traj, collided, n - 1, "collision" if collided else None)


def _integrate_callable(predict, floor, dt, lp, lv, x0, v0, warm, R):
    # mirrors kernels.integrate_follower; one predictor call per step
    n_max = lp.size
    xs = np.zeros(n_max)
    vs = np.zeros(n_max)
    acc = np.zeros(n_max)
    hs = np.zeros(n_max)
    dvs = np.zeros(n_max)
    xs[0], vs[0] = x0, v0
    status, n = 0, 1
    for k in range(n_max - 1):
        x, v = xs[k], vs[k]
        hs[k] = lp[k] - x
        dvs[k] = lv[k] - v
        src = k + 1 - R
        if src >= 0:
            a = float(np.asarray(predict(np.array([[hs[src], dvs[src], vs[src]]]))).ravel()[0])
            if a < floor:
                a = floor
        else:
            a = warm[k + 1]
        x_next = x + v * dt
        v_next = v + a * dt
        if v_next < 0:
            v_next = 0.0
            status |= kernels.STATUS_SPEED_CLAMPED
        acc[k + 1] = a
        if k == 0:
            acc[0] = a if src >= 0 else warm[0]
        if lp[k + 1] - x_next <= 0:
            status |= kernels.STATUS_COLLISION
            break
        xs[k + 1] = x_next
        vs[k + 1] = v_next
        n = k + 2
    return xs, vs, acc, n, status


def rollout_trajectory(model, observed: Trajectory, reaction_steps: int = 1, accel_floor=None) -> RolloutResult:
    """Roll ``model`` out against the leader of an observed trajectory."""
    return rollout(
        model, observed.leader_pos, observed.leader_vel,
        observed.follower_pos[0], observed.follower_vel[0], observed.dt,
        reaction_steps, observed.follower_acc, accel_floor,
    )


def trajectorial_rmspe(predicted: Sequence[Trajectory], observed: Sequence[Trajectory]) -> tuple[float, float]:
    """Pooled position and speed RMSPE (fractions, not percent) over all cases and steps."""
    if len(predicted) != len(observed) or not observed:
        raise DataError("need equally many predicted and observed trajectories")
    sx = sv = 0.0
    count = 0
    for p, o in zip(predicted, observed):
        if len(p) != len(o):
            raise DataError(f"length mismatch {len(p)} vs {len(o)}")
        if np.any(o.follower_pos == 0) or np.any(o.follower_vel == 0):
            raise UndefinedMetricError("observed position or speed is zero")
        sx += float(np.sum(((p.follower_pos - o.follower_pos) / o.follower_pos) ** 2))
        sv += float(np.sum(((p.follower_vel - o.follower_vel) / o.follower_vel) ** 2))
        count += len(o)
    return math.sqrt(sx / count), math.sqrt(sv / count)
