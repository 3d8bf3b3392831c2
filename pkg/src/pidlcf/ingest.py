"""NGSIM-format trajectory pipeline.

Raw per-frame vehicle records become smoothed leader/follower cases:
median-of-quotients velocity, Savitzky-Golay smoothing, central-difference
acceleration, case extraction by lane/spacing/duration rules, and selection
of behaviourally similar cases by a calibrated-parameter feature.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.signal import savgol_filter

from . import kernels
from .calib import calibrate_ls
from .core import ObservedPair, Trajectory, pair_states_with_actions, write_trajectory_csv
from .errors import ConfigError, DataError
from .physics import PARAM_NAMES, make_params

NGSIM_COLUMNS = {
    "vehicle_id": "Vehicle_ID",
    "frame": "Frame_ID",
    "lane": "Lane_ID",
    "position": "Local_Y",
    "leader_id": "Preceding",
    "v_class": "v_Class",
}
FEATURE_NAMES = tuple(f"IDM.{n}" for n in PARAM_NAMES["IDM"]) + tuple(f"OVM.{n}" for n in PARAM_NAMES["OVM"])


@dataclass(frozen=True)
class RawVehicleRecord:
    vehicle_id: int
    time: float
    lane: int
    position: float
    leader_id: int  # 0 when there is no leader
    v_class: int


@dataclass
class IngestConfig:
    dt: float = 0.1
    automobile_class: int = 2
    max_spacing: float = 150.0
    min_duration: float = 10.0
    sg_window: int = 21
    sg_order: int = 3
    position_scale: float = 1.0  # multiply raw positions by this (0.3048 for feet)
    reaction_steps: int = 10
    feature_iters: int = 2000
    origin: float = 1.0  # follower position at the start of every case

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError("dt must be positive")
        _check_sg(self.sg_window, self.sg_order)
        if self.max_spacing <= 0 or self.min_duration < 0:
            raise ConfigError("max_spacing must be positive and min_duration non-negative")
        if self.origin < 1.0:
            raise ConfigError("origin must be >= 1 m")


@dataclass
class CFCase:
    follower_id: int
    leader_id: int
    start_time: float
    trajectory: Trajectory
    feature: np.ndarray | None = field(default=None, repr=False)

    @property
    def case_id(self) -> tuple[int, float]:
        return (self.follower_id, self.start_time)

    @property
    def duration(self) -> float:
        return (len(self.trajectory) - 1) * self.trajectory.dt


# -- filters ------------------------------------------------------------------


def median_velocity(positions, dT: float) -> np.ndarray:
    """Median over i = 1..7 of the symmetric quotients (x[t+i] - x[t-i]) / (2 i dT).

    Near the ends only the available i are used; the two end samples fall
    back to a one-sided difference.
    """
    x = np.ascontiguousarray(positions, dtype=float)
    if x.ndim != 1 or x.size <= 14:
        raise DataError(f"median velocity needs more than 14 samples, got {x.size}")
    if not dT > 0:
        raise ConfigError("dT must be positive")
    return np.asarray(kernels.median_velocity(x, float(dT)))


def _check_sg(window: int, polyorder: int) -> None:
    if window < 1 or window % 2 == 0:
        raise ConfigError(f"Savitzky-Golay window must be a positive odd integer, got {window}")
    if polyorder < 0 or polyorder >= window:
        raise ConfigError(f"polyorder must satisfy 0 <= polyorder < window, got {polyorder}")


def savitzky_golay(series, window: int = 21, polyorder: int = 3) -> np.ndarray:
    """Local least-squares polynomial smoothing (edges fitted, not padded)."""
    _check_sg(window, polyorder)
    y = np.asarray(series, dtype=float)
    if y.ndim != 1 or y.size < window:
        raise DataError(f"series of length {y.size} shorter than window {window}")
    return savgol_filter(y, window, polyorder, mode="interp")


def central_acceleration(velocities, dT: float) -> np.ndarray:
    """Central differences inside, one-sided at the two ends."""
    v = np.asarray(velocities, dtype=float)
    if v.ndim != 1 or v.size < 3:
        raise DataError("central acceleration needs at least 3 samples")
    return np.gradient(v, dT)


def smooth_kinematics(positions, cfg: IngestConfig) -> tuple[np.ndarray, np.ndarray]:
    v = savitzky_golay(median_velocity(positions, cfg.dt), cfg.sg_window, cfg.sg_order)
    a = savitzky_golay(central_acceleration(v, cfg.dt), cfg.sg_window, cfg.sg_order)
    return v, a


# -- raw records --------------------------------------------------------------


def read_ngsim_csv(path: str | Path, columns: dict[str, str] | None = None, frame_period: float = 0.1,
                   position_scale: float = 1.0) -> list[RawVehicleRecord]:
    cols = {**NGSIM_COLUMNS, **(columns or {})}
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in cols.values() if c not in (reader.fieldnames or [])]
        if missing:
            raise DataError(f"{path}: missing columns {missing}")
        for lineno, row in enumerate(reader, start=2):
            try:
                out.append(RawVehicleRecord(
                    vehicle_id=int(row[cols["vehicle_id"]]),
                    time=int(row[cols["frame"]]) * frame_period,
                    lane=int(row[cols["lane"]]),
                    position=float(row[cols["position"]]) * position_scale,
                    leader_id=int(row[cols["leader_id"]]),
                    v_class=int(row[cols["v_class"]]),
                ))
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
    return out


@dataclass
class _Vehicle:
    frames: np.ndarray  # integer frame index (time / dt)
    lane: np.ndarray
    position: np.ndarray
    leader: np.ndarray
    v_class: int
    velocity: np.ndarray | None = None
    accel: np.ndarray | None = None

    def index(self) -> dict[int, int]:
        return {int(f): i for i, f in enumerate(self.frames)}


def _group(records: Iterable[RawVehicleRecord], dt: float) -> dict[int, _Vehicle]:
    per: dict[int, list[RawVehicleRecord]] = {}
    for r in records:
        per.setdefault(r.vehicle_id, []).append(r)
    out = {}
    for vid, rs in per.items():
        rs.sort(key=lambda r: r.time)
        t = np.array([r.time for r in rs])
        if np.any(np.diff(t) <= 0):
            raise DataError(f"vehicle {vid}: duplicate or non-increasing time stamps")
        frames = np.rint(t / dt).astype(np.int64)
        if not np.allclose(frames * dt, t, atol=1e-6 * max(1.0, dt)):
            raise DataError(f"vehicle {vid}: time stamps are not multiples of dt={dt}")
        classes = {r.v_class for r in rs}
        if len(classes) != 1:
            raise DataError(f"vehicle {vid}: inconsistent vehicle class {sorted(classes)}")
        out[vid] = _Vehicle(
            frames, np.array([r.lane for r in rs]), np.array([r.position for r in rs]),
            np.array([r.leader_id for r in rs]), classes.pop(),
        )
    return out


def _runs(mask: np.ndarray) -> list[tuple[int, int]]:
    """Maximal [start, stop) runs of True."""
    runs, start = [], None
    for i, m in enumerate(mask):
        if m and start is None:
            start = i
        elif not m and start is not None:
            runs.append((start, i))
            start = None
    if start is not None:
        runs.append((start, len(mask)))
    return runs


def _smooth_vehicle(veh: _Vehicle, cfg: IngestConfig) -> None:
    # derivatives per contiguous block of frames; blocks too short for the filters stay NaN
    veh.velocity = np.full(veh.frames.size, np.nan)
    veh.accel = np.full(veh.frames.size, np.nan)
    contiguous = np.concatenate([[True], np.diff(veh.frames) == 1])
    starts = [0] + [i for i in range(1, veh.frames.size) if not contiguous[i]] + [veh.frames.size]
    for a, b in zip(starts[:-1], starts[1:]):
        if b - a > 14 and b - a >= cfg.sg_window:
            veh.velocity[a:b], veh.accel[a:b] = smooth_kinematics(veh.position[a:b], cfg)


def extract_cf_cases(records: Sequence[RawVehicleRecord], cfg: IngestConfig | None = None,
                     with_features: bool = True) -> list[CFCase]:
    """Maximal contiguous same-leader segments that stay in one shared lane, keep the
    spacing in (0, max_spacing] and last strictly longer than ``min_duration``.

    Both vehicles must be of the automobile class.  Cases come back ordered by
    ``(follower_id, start_time)``.
    """
    cfg = cfg or IngestConfig()
    vehicles = _group(records, cfg.dt)
    for veh in vehicles.values():
        if veh.v_class == cfg.automobile_class:
            _smooth_vehicle(veh, cfg)

    cases = []
    for fid in sorted(vehicles):
        fol = vehicles[fid]
        if fol.v_class != cfg.automobile_class:
            continue
        n = fol.frames.size
        ok = np.zeros(n, dtype=bool)
        lead_pos = np.full(n, np.nan)
        lead_vel = np.full(n, np.nan)
        index_cache: dict[int, dict[int, int]] = {}
        for i in range(n):
            lid = int(fol.leader[i])
            led = vehicles.get(lid)
            if lid == 0 or led is None or led.v_class != cfg.automobile_class or np.isnan(fol.velocity[i]):
                continue
            idx = index_cache.setdefault(lid, led.index()).get(int(fol.frames[i]))
            if idx is None or np.isnan(led.velocity[idx]) or led.lane[idx] != fol.lane[i]:
                continue
            gap = led.position[idx] - fol.position[i]
            if 0 < gap <= cfg.max_spacing:
                ok[i] = True
                lead_pos[i], lead_vel[i] = led.position[idx], led.velocity[idx]
        # split where the frame sequence breaks or the leader changes
        boundaries = np.ones(n, dtype=bool)
        boundaries[1:] = (np.diff(fol.frames) != 1) | (fol.leader[1:] != fol.leader[:-1])
        seg_starts = np.flatnonzero(boundaries)
        seg_ends = np.append(seg_starts[1:], n)
        for s0, s1 in zip(seg_starts, seg_ends):
            for a, b in _runs(ok[s0:s1]):
                a, b = a + s0, b + s0
                if (b - a - 1) * cfg.dt <= cfg.min_duration + 1e-9:
                    continue
                shift = cfg.origin - fol.position[a]
                traj = Trajectory(
                    cfg.dt, lead_pos[a:b] + shift, lead_vel[a:b],
                    fol.position[a:b] + shift, fol.velocity[a:b], fol.accel[a:b],
                )
                cases.append(CFCase(fid, int(fol.leader[a]), float(fol.frames[a] * cfg.dt), traj))
    if with_features:
        for c in cases:
            c.feature = case_feature(c, cfg)
    return cases


def case_feature(case: CFCase, cfg: IngestConfig | None = None) -> np.ndarray:
    """Per-case least-squares IDM and OVM parameters, concatenated (8 values)."""
    cfg = cfg or IngestConfig()
    R = min(cfg.reaction_steps, len(case.trajectory) - 1)
    pairs = pair_states_with_actions(case.trajectory, R)
    feats = []
    for fam in ("IDM", "OVM"):
        p = calibrate_ls(fam, pairs, init=make_params(fam), max_iters=cfg.feature_iters)
        feats.extend(p.vector())
    return np.array(feats)


def select_similar_cases(cases: Sequence[CFCase], count: int) -> list[CFCase]:
    """The ``count`` cases closest to the medoid of the min-max normalised features.

    The medoid is the case with the smallest summed Euclidean distance to all
    others; ties in either step go to the smaller ``case_id``.
    """
    if count < 1:
        raise ConfigError("count must be >= 1")
    if count > len(cases):
        raise DataError(f"cannot select {count} of {len(cases)} cases")
    if any(c.feature is None for c in cases):
        raise DataError("every case needs a feature vector")
    order = sorted(range(len(cases)), key=lambda i: cases[i].case_id)
    F = np.array([cases[i].feature for i in order], dtype=float)
    lo, hi = F.min(axis=0), F.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    Z = (F - lo) / span
    D = np.sqrt(((Z[:, None, :] - Z[None, :, :]) ** 2).sum(axis=-1))
    centre = int(np.argmin(D.sum(axis=1)))  # argmin keeps the first, i.e. smallest case_id
    nearest = np.argsort(D[centre], kind="stable")[:count]
    return [cases[order[i]] for i in nearest]


def cases_to_pairs(cases: Sequence[CFCase], reaction_steps: int = 1) -> list[ObservedPair]:
    out: list[ObservedPair] = []
    for c in cases:
        out += pair_states_with_actions(c.trajectory, reaction_steps)
    return out


def write_case_bundle(cases: Sequence[CFCase], out_dir: str | Path, cfg: IngestConfig | None = None) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, c in enumerate(cases):
        name = f"case_{i:05d}.csv"
        write_trajectory_csv(c.trajectory, out_dir / name)
        entries.append({
            "file": name,
            "follower_id": c.follower_id,
            "leader_id": c.leader_id,
            "start_time": c.start_time,
            "duration": c.duration,
            "feature": None if c.feature is None else dict(zip(FEATURE_NAMES, map(float, c.feature))),
        })
    manifest = {
        "cases": entries,
        "position_origin": f"each case shifted so the follower starts at x = {(cfg or IngestConfig()).origin} m",
    }
    if cfg is not None:
        manifest["ingest_config"] = asdict(cfg)
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return path
