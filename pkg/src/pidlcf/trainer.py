"""Composite data/physics loss and the two training procedures.

``train_prediction_only`` fits the network against observations plus
collocation targets from frozen, pre-calibrated physics.
``train_joint`` additionally updates the physics parameters from the
collocation term, with clipped parameter gradients and projection onto the
parameter box after every step.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import CollocationPoint, Dataset, ObservedPair, State, states_to_array, targets_to_array
from .errors import ConfigError, DataError, DivergenceError
from .mlp import AdamState, Mlp, adam_update, xavier_init
from .physics import PhysicsParams, accel, accel_and_param_grad

COLLOCATION_MODES = ("uniform_grid", "uniform_random")
PHY_OPTIMIZERS = ("sgd", "adam")


@dataclass
class TrainConfig:
    alpha: float = 0.7
    lr_punn: float = 1e-3
    lr_phy: float = 0.01
    min_clip: float = -0.1
    max_clip: float = 0.1
    clip_relative: bool = True  # clip bounds are multiples of each parameter's bound width
    phy_optimizer: str = "adam"
    phy_normalized: bool = True  # step in coordinates scaled by each bound width
    pretrain_epochs: int = 3000  # joint mode warm-up length, see train_joint
    patience: int = 500
    max_epochs: int = 20000
    hidden: tuple[int, ...] = (60, 60, 60)
    accel_floor: float | None = None
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must lie in [0, 1], got {self.alpha}")
        if not self.min_clip < self.max_clip:
            raise ConfigError("min_clip must be below max_clip")
        if self.patience < 1 or self.max_epochs < 1:
            raise ConfigError("patience and max_epochs must be >= 1")
        if self.lr_punn < 0 or self.lr_phy < 0:
            raise ConfigError("learning rates must be non-negative")
        if self.pretrain_epochs < 0:
            raise ConfigError("pretrain_epochs must be >= 0")
        if self.phy_optimizer not in PHY_OPTIMIZERS:
            raise ConfigError(f"phy_optimizer must be one of {PHY_OPTIMIZERS}")
        self.hidden = tuple(int(h) for h in self.hidden)


@dataclass
class TrainReport:
    train_loss: list[float]
    val_mse: list[float]
    best_epoch: int
    best_val_mse: float
    net: Mlp
    params: PhysicsParams | None = None
    test_mse: float | None = None
    collocation_checksum: tuple[str, str] | None = None
    lambda_history: list[np.ndarray] = field(default_factory=list, repr=False)
    pretrain: "TrainReport | None" = field(default=None, repr=False)

    @property
    def epochs(self) -> int:
        return len(self.val_mse)

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "train_loss", "val_mse"])
            for i, (tl, vm) in enumerate(zip(self.train_loss, self.val_mse), start=1):
                w.writerow([i, repr(tl), repr(vm)])
            names = list(self.params.names) if self.params is not None else []
            w.writerow(["best_epoch", "test_mse", *names])
            test = "" if self.test_mse is None else repr(self.test_mse)
            vals = [repr(self.params.values[n]) for n in names]
            w.writerow([self.best_epoch, test, *vals])


class EarlyStopper:
    """Tracks the best validation value; signals a stop after ``patience`` epochs without a new strict minimum."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = np.inf
        self.best_epoch = 0
        self.stale = 0

    def update(self, epoch: int, value: float) -> bool:
        if value < self.best:
            self.best, self.best_epoch, self.stale = value, epoch, 0
            return True
        self.stale += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.stale >= self.patience


def generate_collocation(bounds, n_c: int, mode: str = "uniform_random", seed: int = 0) -> list[State]:
    """Collocation states inside the box ``bounds = ((h_lo, h_hi), (dv_lo, dv_hi), (v_lo, v_hi))``.

    Grid mode uses the smallest lattice with at least ``n_c`` nodes and keeps a
    seeded subset when ``n_c`` is not a perfect cube.
    """
    if n_c < 1:
        raise ConfigError("n_c must be >= 1")
    b = np.asarray(bounds, dtype=float)
    if b.shape != (3, 2) or np.any(b[:, 0] >= b[:, 1]):
        raise ConfigError(f"collocation bounds must be three non-degenerate intervals, got {bounds}")
    if b[0, 0] <= 0 or b[2, 0] < 0:
        raise ConfigError("collocation spacing must be positive and speed non-negative")
    rng = np.random.default_rng(seed)
    if mode == "uniform_random":
        pts = rng.uniform(b[:, 0], b[:, 1], size=(n_c, 3))
    elif mode == "uniform_grid":
        k = int(round(n_c ** (1.0 / 3.0)))
        if k**3 < n_c:
            k += 1
        axes = [np.linspace(lo, hi, k) for lo, hi in b]
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
        if grid.shape[0] > n_c:
            grid = grid[np.sort(rng.choice(grid.shape[0], n_c, replace=False))]
        pts = grid
    else:
        raise ConfigError(f"unknown collocation mode {mode!r}; expected one of {COLLOCATION_MODES}")
    return [State(float(h), float(dv), float(v)) for h, dv, v in pts]


def state_box(states: np.ndarray, margin: float = 0.0):
    """Axis-aligned bounding box of an ``(N, 3)`` state array, widened by ``margin`` of its span."""
    lo = states.min(axis=0)
    hi = states.max(axis=0)
    pad = margin * (hi - lo)
    lo, hi = lo - pad, hi + pad
    lo[0] = max(lo[0], 1e-3)
    lo[2] = max(lo[2], 0.0)
    hi = np.maximum(hi, lo + 1e-6)
    return tuple((float(a), float(c)) for a, c in zip(lo, hi))


def make_collocation(params: PhysicsParams, states: Sequence[State], accel_floor=None) -> list[CollocationPoint]:
    X = states_to_array(states)
    a = accel(params, X, accel_floor)
    return [CollocationPoint(s, float(ai)) for s, ai in zip(states, a)]


def _collocation_states(colloc) -> np.ndarray:
    if colloc is None or len(colloc) == 0:
        return np.zeros((0, 3))
    if isinstance(colloc, np.ndarray):
        return colloc.reshape(-1, 3)
    return states_to_array(colloc)


def pidl_loss(net: Mlp, physics, observed: Sequence[ObservedPair], colloc, alpha: float, accel_floor=None):
    """Weighted data/physics loss; returns ``(loss, mse_observed, mse_collocation)``.

    ``physics`` is :class:`PhysicsParams`, an array of precomputed physics
    accelerations, or ``None`` to use ``CollocationPoint.accel_phys``.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ConfigError(f"alpha must lie in [0, 1], got {alpha}")
    if not observed:
        raise DataError("need at least one observed pair")
    mse_o = float(np.mean((net.forward(states_to_array(observed)) - targets_to_array(observed)) ** 2))
    Xc = _collocation_states(colloc)
    if Xc.shape[0] == 0:
        if alpha != 1.0:
            raise DataError("collocation points required unless alpha = 1")
        return mse_o, mse_o, 0.0
    if isinstance(physics, PhysicsParams):
        a_phy = np.asarray(accel(physics, Xc, accel_floor))
    elif physics is None:
        a_phy = np.array([c.accel_phys for c in colloc])
    else:
        a_phy = np.asarray(physics, dtype=float).ravel()
    mse_c = float(np.mean((net.forward(Xc) - a_phy) ** 2))
    return alpha * mse_o + (1.0 - alpha) * mse_c, mse_o, mse_c


def _checksum(a: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(a).tobytes()).hexdigest()


def _prepare(net: Mlp | None, dataset: Dataset, cfg: TrainConfig):
    if not dataset.train_observed:
        raise DataError("empty training set")
    if not dataset.val:
        raise DataError("early stopping needs a non-empty validation set")
    X_o = states_to_array(dataset.train_observed)
    y_o = targets_to_array(dataset.train_observed)
    X_c = _collocation_states(dataset.collocation)
    if X_c.shape[0] == 0 and cfg.alpha != 1.0:
        raise DataError("collocation points required unless alpha = 1")
    if net is None:
        net = xavier_init((3, *cfg.hidden, 1), seed=cfg.seed)
        net.set_standardizer(X_o)
    X_v = states_to_array(dataset.val)
    y_v = targets_to_array(dataset.val)
    return net, X_o, y_o, X_c, X_v, y_v


def _clip_bounds(params: PhysicsParams, cfg: TrainConfig):
    if cfg.clip_relative:
        lo, hi = params.bound_arrays()
        width = hi - lo
        return cfg.min_clip * width, cfg.max_clip * width
    n = len(params.names)
    return np.full(n, cfg.min_clip), np.full(n, cfg.max_clip)


class _PhysicsStepper:
    """Clipped, projected update of the physics parameter vector."""

    def __init__(self, params: PhysicsParams, cfg: TrainConfig):
        self.params = params
        self.cfg = cfg
        self.clip_lo, self.clip_hi = _clip_bounds(params, cfg)
        lo, hi = params.bound_arrays()
        self.scale = np.where(hi > lo, hi - lo, 1.0) if cfg.phy_normalized else np.ones(lo.size)
        self.opt = AdamState.like([params.vector()])

    def step(self, lam: np.ndarray, grad: np.ndarray) -> np.ndarray:
        g = np.clip(grad, self.clip_lo, self.clip_hi)
        if self.cfg.phy_optimizer == "adam":
            # Adam acts on lam / scale; take the step as an increment so a zero gradient leaves lam untouched
            du = [np.zeros_like(lam)]
            adam_update(du, [g * self.scale], self.opt, self.cfg.lr_phy)
            return self.params.project(lam + du[0] * self.scale)
        return self.params.project(lam - self.cfg.lr_phy * g * self.scale * self.scale)


def _lambda_grad(params, lam, out_c, X_c, cfg):
    a_phy, G = accel_and_param_grad(params.with_vector(lam), X_c, cfg.accel_floor)
    r_c = out_c - a_phy
    return a_phy, r_c, (1.0 - cfg.alpha) * 2.0 / X_c.shape[0] * ((-r_c) @ G)


def _run(net, X_o, y_o, X_c, X_v, y_v, cfg, a_phy_fixed=None, params=None, test=None):
    joint = params is not None
    alpha = cfg.alpha
    n_o, n_c = X_o.shape[0], X_c.shape[0]
    X_all = np.vstack([X_o, X_c]) if n_c else X_o
    opt = AdamState.like(net.params())
    stopper = EarlyStopper(cfg.patience)
    train_loss, val_mse, lam_hist = [], [], []
    best_net = net.copy()
    lam = params.vector() if joint else None
    best_lam = lam.copy() if joint else None
    if joint:
        stepper = _PhysicsStepper(params, cfg)
    a_phy = a_phy_fixed

    for epoch in range(1, cfg.max_epochs + 1):
        out, acts = net.forward_cached(X_all)
        r_o = out[:n_o] - y_o
        mse_o = float(np.mean(r_o**2))
        upstream = np.empty(n_o + n_c)
        upstream[:n_o] = alpha * 2.0 / n_o * r_o
        if n_c:
            if joint:
                a_phy, r_c, g_lam = _lambda_grad(params, lam, out[n_o:], X_c, cfg)
            else:
                r_c = out[n_o:] - a_phy
            mse_c = float(np.mean(r_c**2))
            upstream[n_o:] = (1.0 - alpha) * 2.0 / n_c * r_c
        else:
            mse_c = 0.0
        loss = alpha * mse_o + (1.0 - alpha) * mse_c
        if not np.isfinite(loss):
            raise DivergenceError(f"non-finite training loss at epoch {epoch}")
        grads = net.backward(acts, upstream)
        adam_update(net.params(), grads, opt, cfg.lr_punn)
        if not net.all_finite():
            raise DivergenceError(f"network parameters became non-finite at epoch {epoch}")
        if joint and n_c:
            lam = stepper.step(lam, g_lam)
            lam_hist.append(lam.copy())

        v = float(np.mean((net.forward(X_v) - y_v) ** 2))
        if not np.isfinite(v):
            raise DivergenceError(f"non-finite validation error at epoch {epoch}")
        train_loss.append(loss)
        val_mse.append(v)
        if stopper.update(epoch, v):
            best_net = net.copy()
            if joint:
                best_lam = lam.copy()
        if stopper.should_stop:
            break

    report = TrainReport(
        train_loss=train_loss,
        val_mse=val_mse,
        best_epoch=stopper.best_epoch,
        best_val_mse=stopper.best,
        net=best_net,
        params=params.with_vector(best_lam) if joint else None,
        lambda_history=lam_hist,
    )
    if test:
        X_t = states_to_array(test)
        report.test_mse = float(np.mean((best_net.forward(X_t) - targets_to_array(test)) ** 2))
    return report


def _fit_physics_to_net(net: Mlp, params: PhysicsParams, X_c: np.ndarray, cfg: TrainConfig) -> PhysicsParams:
    """Physics-only updates against a frozen network, ``cfg.pretrain_epochs`` steps."""
    out_c = net.forward(X_c)
    stepper = _PhysicsStepper(params, cfg)
    lam = params.vector()
    for _ in range(cfg.pretrain_epochs):
        _, _, g = _lambda_grad(params, lam, out_c, X_c, cfg)
        lam = stepper.step(lam, g)
    return params.with_vector(lam)


def train_prediction_only(net: Mlp | None, params: PhysicsParams | None, dataset: Dataset, cfg: TrainConfig) -> TrainReport:
    """Train the network with physics targets frozen at the calibrated ``params``.

    ``net=None`` builds a Xavier-initialised network from ``cfg``.  When
    ``params`` is ``None`` the stored ``CollocationPoint.accel_phys`` values are
    used as-is.
    """
    net, X_o, y_o, X_c, X_v, y_v = _prepare(net, dataset, cfg)
    if X_c.shape[0]:
        if params is not None:
            a_phy = np.asarray(accel(params, X_c, cfg.accel_floor), dtype=float)
        else:
            a_phy = np.array([c.accel_phys for c in dataset.collocation], dtype=float)
        a_phy.setflags(write=False)
    else:
        a_phy = np.zeros(0)
    before = _checksum(a_phy)
    report = _run(net, X_o, y_o, X_c, X_v, y_v, cfg, a_phy_fixed=a_phy, test=dataset.test)
    report.collocation_checksum = (before, _checksum(a_phy))
    report.params = params
    return report


def train_joint(net: Mlp | None, params0: PhysicsParams, dataset: Dataset, cfg: TrainConfig) -> TrainReport:
    """Train network weights and physics parameters together.

    The reported parameters are the ones held at the best-validation epoch.
    With ``cfg.pretrain_epochs > 0`` two warm-up stages run first: the network
    is fitted to the observations alone (best-validation weights kept), then
    the physics parameters are fitted to that frozen network on the
    collocation states.  Epoch numbering and early stopping of the report
    cover the joint phase only.
    """
    lo, hi = params0.bound_arrays()
    vec = params0.vector()
    if np.any(vec < lo) or np.any(vec > hi):
        raise ConfigError("initial physics parameters lie outside their bounds")
    accel_and_param_grad(params0, np.array([[10.0, 0.0, 10.0]]))  # rejects families without gradients
    net, X_o, y_o, X_c, X_v, y_v = _prepare(net, dataset, cfg)
    pre = None
    if cfg.pretrain_epochs:
        pre_cfg = replace(cfg, alpha=1.0, max_epochs=cfg.pretrain_epochs)
        pre = _run(net, X_o, y_o, np.zeros((0, 3)), X_v, y_v, pre_cfg)
        net = pre.net
        if X_c.shape[0] and cfg.alpha < 1.0:
            params0 = _fit_physics_to_net(net, params0, X_c, cfg)
    report = _run(net, X_o, y_o, X_c, X_v, y_v, cfg, params=params0, test=dataset.test)
    report.pretrain = pre
    return report
