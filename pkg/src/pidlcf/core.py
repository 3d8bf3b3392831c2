"""Domain types, trajectory I/O and dataset assembly."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DataError, EmptyResultError

TRAJECTORY_COLUMNS = ("t", "leader_pos", "leader_vel", "follower_pos", "follower_vel", "follower_acc")


@dataclass(frozen=True)
class State:
    """Follower state: spacing ``h``, leader-minus-follower speed ``dv``, speed ``v``."""

    h: float
    dv: float
    v: float

    def __post_init__(self):
        if not all(math.isfinite(x) for x in (self.h, self.dv, self.v)):
            raise DataError(f"non-finite state {self}")
        if self.h < 0 or self.v < 0:
            raise DataError(f"spacing and speed must be non-negative, got {self}")

    def as_array(self) -> np.ndarray:
        return np.array([self.h, self.dv, self.v])


@dataclass(frozen=True)
class ObservedPair:
    state: State
    accel: float

    def __post_init__(self):
        if not math.isfinite(self.accel):
            raise DataError("observed acceleration must be finite")


@dataclass(frozen=True)
class CollocationPoint:
    state: State
    accel_phys: float


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Leader/follower time series sampled every ``dt`` seconds.

    ``follower_acc[k]`` is the acceleration that moved the follower from
    sample ``k-1`` to sample ``k`` (the action decided on the state at
    ``k-1``); ``follower_acc[0]`` repeats the first applied action.
    """

    dt: float
    leader_pos: np.ndarray
    leader_vel: np.ndarray
    follower_pos: np.ndarray
    follower_vel: np.ndarray
    follower_acc: np.ndarray
    # noise-free accelerations, only known for simulated data; never serialised
    clean_acc: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if not self.dt > 0:
            raise DataError("dt must be positive")
        n = None
        for name in TRAJECTORY_COLUMNS[1:]:
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
            if arr.ndim != 1:
                raise DataError(f"{name} must be one-dimensional")
            if n is None:
                n = arr.size
            elif arr.size != n:
                raise DataError("all trajectory series must share one length")
            if not np.all(np.isfinite(arr)):
                raise DataError(f"{name} contains non-finite values")
        if n < 2:
            raise DataError("a trajectory needs at least two samples")
        if np.any(self.spacing <= 0):
            raise DataError("spacing must stay positive")

    def __len__(self) -> int:
        return self.leader_pos.size

    def __eq__(self, other):
        if not isinstance(other, Trajectory):
            return NotImplemented
        return self.dt == other.dt and all(
            np.array_equal(getattr(self, c), getattr(other, c)) for c in TRAJECTORY_COLUMNS[1:]
        )

    @property
    def spacing(self) -> np.ndarray:
        return self.leader_pos - self.follower_pos

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self)) * self.dt

    def states(self) -> np.ndarray:
        """(N, 3) array of [h, dv, v] rows."""
        return np.column_stack([self.spacing, self.leader_vel - self.follower_vel, self.follower_vel])


@dataclass
class Dataset:
    train_observed: list[ObservedPair]
    val: list[ObservedPair]
    test: list[ObservedPair]
    collocation: list[CollocationPoint] = field(default_factory=list)


def states_to_array(items: Sequence[ObservedPair | CollocationPoint | State]) -> np.ndarray:
    rows = []
    for it in items:
        s = it if isinstance(it, State) else it.state
        rows.append((s.h, s.dv, s.v))
    return np.asarray(rows, dtype=float).reshape(-1, 3)


def targets_to_array(pairs: Sequence[ObservedPair]) -> np.ndarray:
    return np.fromiter((p.accel for p in pairs), dtype=float, count=len(pairs))


def pairs_from_arrays(states: np.ndarray, accels: np.ndarray) -> list[ObservedPair]:
    return [ObservedPair(State(float(h), float(dv), float(v)), float(a)) for (h, dv, v), a in zip(states, accels)]


def pair_states_with_actions(traj: Trajectory, reaction_steps: int = 1) -> list[ObservedPair]:
    """Pair the state at step t with the recorded acceleration at t + reaction_steps."""
    if reaction_steps < 1:
        raise DataError("reaction_steps must be >= 1")
    n = len(traj)
    if n <= reaction_steps:
        raise EmptyResultError(f"trajectory of length {n} too short for reaction_steps={reaction_steps}")
    states = traj.states()[: n - reaction_steps]
    accels = traj.follower_acc[reaction_steps:]
    return pairs_from_arrays(states, accels)


def shuffle_split(
    pairs: Sequence[ObservedPair],
    ratio: tuple[float, float, float] = (0.5, 0.25, 0.25),
    seed: int = 0,
) -> Dataset:
    """Shuffle observed pairs and cut them into train/val/test.

    Train and validation sizes are floored; test takes the remainder.
    """
    if len(ratio) != 3 or any(r <= 0 for r in ratio) or not math.isclose(sum(ratio), 1.0, abs_tol=1e-9):
        raise DataError(f"split ratios must be three positive numbers summing to 1, got {ratio}")
    n = len(pairs)
    if n < 3:
        raise DataError("need at least 3 pairs to split")
    n_train = int(math.floor(n * ratio[0] + 1e-9))
    n_val = int(math.floor(n * ratio[1] + 1e-9))
    if n_train == 0 or n_val == 0 or n - n_train - n_val == 0:
        raise DataError(f"split of {n} pairs by {ratio} leaves an empty partition")
    order = np.random.default_rng(seed).permutation(n)
    shuffled = [pairs[i] for i in order]
    return Dataset(
        train_observed=shuffled[:n_train],
        val=shuffled[n_train : n_train + n_val],
        test=shuffled[n_train + n_val :],
    )


def write_trajectory_csv(traj: Trajectory, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRAJECTORY_COLUMNS)
        cols = [traj.times, traj.leader_pos, traj.leader_vel, traj.follower_pos, traj.follower_vel, traj.follower_acc]
        for row in zip(*cols):
            w.writerow([repr(float(x)) for x in row])


def read_trajectory_csv(path: str | Path) -> Trajectory:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != TRAJECTORY_COLUMNS:
            raise DataError(f"{path}: expected header {','.join(TRAJECTORY_COLUMNS)}")
        try:
            data = np.array([[float(x) for x in row] for row in reader if row], dtype=float)
        except ValueError as exc:
            raise DataError(f"{path}: {exc}") from exc
    if data.shape[0] < 2:
        raise DataError(f"{path}: need at least two rows")
    steps = np.diff(data[:, 0])
    dt = float(steps[0])
    if not np.allclose(steps, dt, rtol=1e-6, atol=1e-9):
        raise DataError(f"{path}: time column is not evenly spaced")
    return Trajectory(dt, *(data[:, i] for i in range(1, 6)))
