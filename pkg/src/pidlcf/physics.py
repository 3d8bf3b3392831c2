"""Physics-based car-following models with analytic parameter gradients.

State convention throughout: ``dv = v_leader - v_follower``.  The IDM's
desired-gap term uses the *closing* speed ``-dv``, so a follower that is
faster than its leader (dv < 0) wants a larger gap and brakes.

Every function accepts either a :class:`~pidlcf.core.State` or an ``(N, 3)``
array of ``[h, dv, v]`` rows; array input yields array output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .core import State
from .errors import ConfigError, SingularSpacingError, UnsupportedFamilyError

IDM_DELTA = 4  # exponent fixed, never trained

PARAM_NAMES: dict[str, tuple[str, ...]] = {
    "IDM": ("v0", "T0", "s0", "a_max", "b"),
    "OVM": ("v_max", "h_c", "k"),
    "GHR": ("c", "m", "l"),
    "FVDM": ("k", "kappa", "v_max", "h_c"),
    "GIPPS": ("a_max", "b", "v0", "s0"),
    "HELLY": ("c1", "c2", "s0", "T0"),
}

FAMILY_CODES = {name: i for i, name in enumerate(PARAM_NAMES)}
GRADIENT_FAMILIES = frozenset({"IDM", "OVM", "GHR", "FVDM"})

DEFAULT_BOUNDS: dict[str, dict[str, tuple[float, float]]] = {
    "IDM": {"v0": (5.0, 60.0), "T0": (0.1, 5.0), "s0": (0.1, 10.0), "a_max": (0.05, 5.0), "b": (0.05, 6.0)},
    "OVM": {"v_max": (5.0, 60.0), "h_c": (0.5, 50.0), "k": (1e-3, 2.0)},
    "GHR": {"c": (1e-6, 10.0), "m": (-2.0, 2.0), "l": (0.0, 4.0)},
    "FVDM": {"k": (0.0, 2.0), "kappa": (0.0, 2.0), "v_max": (5.0, 60.0), "h_c": (0.5, 50.0)},
    "GIPPS": {"a_max": (0.1, 5.0), "b": (0.5, 8.0), "v0": (5.0, 60.0), "s0": (0.5, 15.0)},
    "HELLY": {"c1": (0.0, 2.0), "c2": (0.0, 1.0), "s0": (0.0, 15.0), "T0": (0.0, 5.0)},
}

GROUND_TRUTH = {
    "IDM": {"v0": 30.0, "T0": 1.5, "s0": 2.0, "a_max": 0.73, "b": 1.63},
    "OVM": {"v_max": 30.0, "h_c": 10.0, "k": 0.03},
}


@dataclass(frozen=True)
class PhysicsParams:
    family: str
    values: Mapping[str, float]
    bounds: Mapping[str, tuple[float, float]] = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        fam = self.family.upper()
        if fam not in PARAM_NAMES:
            raise UnsupportedFamilyError(f"unknown model family {self.family!r}")
        object.__setattr__(self, "family", fam)
        names = PARAM_NAMES[fam]
        if set(self.values) != set(names):
            raise ConfigError(f"{fam} expects parameters {names}, got {tuple(self.values)}")
        values = {n: float(self.values[n]) for n in names}
        bounds = dict(DEFAULT_BOUNDS[fam])
        if self.bounds is not None:
            unknown = set(self.bounds) - set(names)
            if unknown:
                raise ConfigError(f"bounds given for unknown {fam} parameters {sorted(unknown)}")
            bounds.update({k: (float(lo), float(hi)) for k, (lo, hi) in self.bounds.items()})
        for n in names:
            lo, hi = bounds[n]
            if not lo <= hi:
                raise ConfigError(f"empty bound interval for {n}: {(lo, hi)}")
            if not (math.isfinite(values[n]) and lo <= values[n] <= hi):
                raise ConfigError(f"{fam}.{n}={values[n]} outside bounds {(lo, hi)}")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "bounds", bounds)

    @property
    def names(self) -> tuple[str, ...]:
        return PARAM_NAMES[self.family]

    def vector(self) -> np.ndarray:
        return np.array([self.values[n] for n in self.names])

    def bound_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.array([self.bounds[n][0] for n in self.names])
        hi = np.array([self.bounds[n][1] for n in self.names])
        return lo, hi

    def with_vector(self, vec) -> "PhysicsParams":
        return PhysicsParams(self.family, dict(zip(self.names, map(float, vec))), self.bounds)

    def project(self, vec) -> np.ndarray:
        lo, hi = self.bound_arrays()
        return np.clip(np.asarray(vec, dtype=float), lo, hi)

    def to_dict(self) -> dict:
        return {"family": self.family, "values": dict(self.values), "bounds": {k: list(v) for k, v in self.bounds.items()}}


def make_params(family: str, values: Mapping[str, float] | None = None, bounds=None) -> PhysicsParams:
    """Build params; ``values`` defaults to the simulation ground truth for IDM/OVM."""
    fam = family.upper()
    if values is None:
        if fam not in GROUND_TRUTH:
            raise ConfigError(f"no default parameter values for {fam}")
        values = GROUND_TRUTH[fam]
    return PhysicsParams(fam, dict(values), bounds)


def _as_columns(s):
    if isinstance(s, State):
        return np.array([s.h]), np.array([s.dv]), np.array([s.v]), True
    arr = np.asarray(s, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(1, 3)
        return arr[:, 0], arr[:, 1], arr[:, 2], True
    return arr[:, 0], arr[:, 1], arr[:, 2], False


def _check_spacing(h):
    if np.any(h <= 0):
        raise SingularSpacingError("spacing must be positive for this model")


def _optimal_velocity(v_max, h_c, h):
    return 0.5 * v_max * (np.tanh(h - h_c) + np.tanh(h_c))


def _sech2(x):
    # 1 - tanh(x)**2 cancels catastrophically once |x| exceeds a few units
    e = np.exp(-2.0 * np.abs(x))
    return 4.0 * e / (1.0 + e) ** 2


def _idm(p, h, dv, v, grad):
    v0, T0, s0, A, b = (p[n] for n in PARAM_NAMES["IDM"])
    sq = np.sqrt(A * b)
    q = v * (-dv) / (2.0 * sq)
    s_star = s0 + v * T0 + q
    x = v / v0
    x2 = x * x
    x4 = x2 * x2
    r = s_star / h
    a = A * (1.0 - x4 - r * r)
    if not grad:
        return a, None
    g = np.empty((h.size, 5))
    g[:, 0] = A * IDM_DELTA * x4 / v0
    g[:, 1] = -2.0 * A * r * v / h
    g[:, 2] = -2.0 * A * r / h
    g[:, 3] = (1.0 - x4 - r * r) + r * q / h
    g[:, 4] = A * r * q / (h * b)
    return a, g


def _ovm(p, h, dv, v, grad):
    v_max, h_c, k = p["v_max"], p["h_c"], p["k"]
    t1 = np.tanh(h - h_c)
    t2 = np.tanh(h_c)
    V = 0.5 * v_max * (t1 + t2)
    a = k * (V - v)
    if not grad:
        return a, None
    g = np.empty((h.size, 3))
    g[:, 0] = k * 0.5 * (t1 + t2)
    g[:, 1] = k * 0.5 * v_max * (_sech2(h_c) - _sech2(h - h_c))
    g[:, 2] = V - v
    return a, g


def _ghr(p, h, dv, v, grad):
    c, m, l = p["c"], p["m"], p["l"]
    moving = v > 0
    if m < 0 and not np.all(moving):
        raise SingularSpacingError("GHR with negative speed exponent is undefined at v = 0")
    vm = np.full(v.shape, 1.0 if m == 0 else 0.0)
    vm[moving] = np.power(v[moving], m)
    hl = np.power(h, l)
    base = vm * dv / hl
    a = c * base
    if not grad:
        return a, None
    g = np.empty((h.size, 3))
    g[:, 0] = base
    logv = np.log(np.where(v > 0, v, 1.0))
    g[:, 1] = np.where(v > 0, a * logv, 0.0)
    g[:, 2] = -a * np.log(h)
    return a, g


def _fvdm(p, h, dv, v, grad):
    k, kappa, v_max, h_c = p["k"], p["kappa"], p["v_max"], p["h_c"]
    t1 = np.tanh(h - h_c)
    t2 = np.tanh(h_c)
    V = 0.5 * v_max * (t1 + t2)
    a = k * (V - v) + kappa * dv
    if not grad:
        return a, None
    g = np.empty((h.size, 4))
    g[:, 0] = V - v
    g[:, 1] = dv
    g[:, 2] = k * 0.5 * (t1 + t2)
    g[:, 3] = k * 0.5 * v_max * (_sech2(h_c) - _sech2(h - h_c))
    return a, g


def _gipps(p, h, dv, v, dt):
    A, b, v0, s0 = p["a_max"], p["b"], p["v0"], p["s0"]
    tau = dt
    v_lead = v + dv
    v_free = v + 2.5 * A * tau * (1.0 - v / v0) * np.sqrt(0.025 + v / v0)
    rad = b * b * tau * tau + b * (2.0 * (h - s0) - v * tau + v_lead * v_lead / b)
    v_safe = -b * tau + np.sqrt(np.maximum(rad, 0.0))
    v_next = np.maximum(np.minimum(v_free, v_safe), 0.0)
    return (v_next - v) / dt


def _helly(p, h, dv, v):
    return p["c1"] * dv + p["c2"] * (h - p["s0"] - p["T0"] * v)


_GRAD_IMPLS = {"IDM": _idm, "OVM": _ovm, "GHR": _ghr, "FVDM": _fvdm}


def _finish(a, scalar):
    return float(a[0]) if scalar else a


def _apply_floor(a, floor):
    return a if floor is None else np.maximum(a, floor)


def idm_accel(p: PhysicsParams, s, floor: float | None = None):
    """IDM acceleration, optionally clamped below at ``floor``."""
    _require(p, "IDM")
    h, dv, v, scalar = _as_columns(s)
    _check_spacing(h)
    a, _ = _idm(p.values, h, dv, v, False)
    return _finish(_apply_floor(a, floor), scalar)


def ovm_accel(p: PhysicsParams, s, floor: float | None = None):
    _require(p, "OVM")
    h, dv, v, scalar = _as_columns(s)
    a, _ = _ovm(p.values, h, dv, v, False)
    return _finish(_apply_floor(a, floor), scalar)


def ghr_accel(p: PhysicsParams, s, floor: float | None = None):
    """Stimulus-response model ``c * v**m * dv / h**l``."""
    _require(p, "GHR")
    h, dv, v, scalar = _as_columns(s)
    _check_spacing(h)
    a, _ = _ghr(p.values, h, dv, v, False)
    return _finish(_apply_floor(a, floor), scalar)


def fvdm_accel(p: PhysicsParams, s, floor: float | None = None):
    _require(p, "FVDM")
    h, dv, v, scalar = _as_columns(s)
    a, _ = _fvdm(p.values, h, dv, v, False)
    return _finish(_apply_floor(a, floor), scalar)


def baseline_accel(p: PhysicsParams, s, dt: float = 0.1):
    """Gipps (velocity output turned into an acceleration over ``dt``) or Helly."""
    h, dv, v, scalar = _as_columns(s)
    if p.family == "GIPPS":
        if not dt > 0:
            raise ConfigError("Gipps needs dt > 0")
        a = _gipps(p.values, h, dv, v, dt)
    elif p.family == "HELLY":
        a = _helly(p.values, h, dv, v)
    else:
        raise UnsupportedFamilyError(f"{p.family} is not a baseline-only family")
    return _finish(a, scalar)


def accel(p: PhysicsParams, s, floor: float | None = None, dt: float = 0.1):
    """Dispatch on ``p.family``."""
    if p.family in ("GIPPS", "HELLY"):
        return baseline_accel(p, s, dt) if floor is None else np.maximum(baseline_accel(p, s, dt), floor)
    return _SINGLE[p.family](p, s, floor)


_SINGLE = {"IDM": idm_accel, "OVM": ovm_accel, "GHR": ghr_accel, "FVDM": fvdm_accel}


def accel_and_param_grad(p: PhysicsParams, s, floor: float | None = None):
    """Acceleration and its gradient with respect to the trainable parameters.

    Returns ``(a, g)`` where ``g`` has one column per name in ``p.names``.
    Samples clamped by ``floor`` get a zero gradient.
    """
    if p.family not in GRADIENT_FAMILIES:
        raise UnsupportedFamilyError(f"no parameter gradient for {p.family}")
    h, dv, v, scalar = _as_columns(s)
    if p.family in ("IDM", "GHR"):
        _check_spacing(h)
    a, g = _GRAD_IMPLS[p.family](p.values, h, dv, v, True)
    if floor is not None:
        clamped = a < floor
        a = np.where(clamped, floor, a)
        g[clamped] = 0.0
    if scalar:
        return float(a[0]), g[0].copy()
    return a, g


def idm_equilibrium_spacing(p: PhysicsParams, v: float) -> float:
    """Spacing at which a follower at speed ``v`` behind an equal-speed leader has zero IDM acceleration."""
    _require(p, "IDM")
    x = v / p.values["v0"]
    denom = 1.0 - x**IDM_DELTA
    if denom <= 0:
        raise ConfigError("no equilibrium at or above the desired speed")
    return (p.values["s0"] + v * p.values["T0"]) / math.sqrt(denom)


def _require(p: PhysicsParams, family: str):
    if p.family != family:
        raise UnsupportedFamilyError(f"expected {family} parameters, got {p.family}")
