"""YAML experiment configuration.

One file drives every CLI subcommand.  Each top-level section maps onto a
dataclass below; keys that are not fields raise :class:`ConfigError`, and
:func:`resolved` returns the config with every default filled in so that the
output manifest records exactly what ran.

Seed derivation: the top-level ``seed`` (or ``--seed``) seeds the simulator,
the train/val/test shuffle, the collocation draw, the network initialisation
and the GA.  Sweep replicate ``r`` uses ``seed + r`` for all of these, so
cells that differ only in ``alpha`` or ``n_observed`` share data and weights.
"""

from __future__ import annotations

import dataclasses
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .calib import GaConfig
from .errors import ConfigError
from .experiments import COLLOCATION_SOURCES, PHYSICS_SOURCES
from .ingest import NGSIM_COLUMNS, IngestConfig
from .physics import PARAM_NAMES
from .sim import REGIMES, SimConfig
from .trainer import COLLOCATION_MODES, TrainConfig

MODES = ("prediction_only", "joint")
EVAL_KINDS = ("one_step", "trajectorial")


@dataclass
class ModelSection:
    family: str = "IDM"
    params: dict[str, float] | None = None  # None: simulation ground truth
    bounds: dict[str, list[float]] | None = None


@dataclass
class DataSection:
    source: str = "simulate"  # simulate | files
    path: str | None = None
    regime: str = "combined"
    n_trajectories: int = 20
    reaction_steps: int = 1
    sim: dict[str, Any] = field(default_factory=dict)  # SimConfig fields other than regime and seed


@dataclass
class SplitSection:
    ratio: list[float] = field(default_factory=lambda: [0.5, 0.25, 0.25])
    n_observed: int | None = 20  # None: the whole training partition
    n_collocation: int = 20
    collocation_source: str = "states"
    collocation_mode: str = "uniform_random"


@dataclass
class TrainSection:
    mode: str = "prediction_only"
    physics: str = "ground_truth"  # ground_truth | ls | path to a params JSON
    init: dict[str, float] | None = None  # joint start; None: middle of the bounds
    alpha: float = 0.7
    lr_punn: float = 1e-3
    lr_phy: float = 0.01
    min_clip: float = -0.1
    max_clip: float = 0.1
    clip_relative: bool = True
    phy_optimizer: str = "adam"
    phy_normalized: bool = True
    pretrain_epochs: int = 3000
    patience: int = 500
    max_epochs: int = 20000
    hidden: list[int] = field(default_factory=lambda: [60, 60, 60])


@dataclass
class CalibrateSection:
    method: str = "ls"  # ls | ga
    init: dict[str, float] | None = None
    lr: float = 0.01
    max_iters: int = 20000
    patience: int = 100
    free: list[str] | None = None
    population: int = 50
    generations: int = 200
    crossover_rate: float = 0.9
    mutation_rate: float = 0.1
    mutation_scale: float = 0.05
    elitism: int = 2
    tournament_size: int = 2


@dataclass
class EvaluateSection:
    kind: str = "one_step"
    checkpoint: str | None = None  # network checkpoint JSON
    params: str | None = None  # physics params JSON
    metrics: list[str] = field(default_factory=lambda: ["MSE", "MAE", "RMSE", "RMSPE"])


@dataclass
class SweepSection:
    n_observed: list[int] = field(default_factory=lambda: [20, 100, 400])
    alpha: list[float] = field(default_factory=lambda: [0.1, 0.4, 0.7, 1.0])
    replicates: int = 5


@dataclass
class IngestSection:
    input: str | None = None
    columns: dict[str, str] = field(default_factory=lambda: dict(NGSIM_COLUMNS))
    frame_period: float = 0.1
    select: int | None = None
    with_features: bool = True
    dt: float = 0.1
    automobile_class: int = 2
    max_spacing: float = 150.0
    min_duration: float = 10.0
    sg_window: int = 21
    sg_order: int = 3
    position_scale: float = 1.0
    reaction_steps: int = 10
    feature_iters: int = 2000
    origin: float = 1.0


@dataclass
class Config:
    experiment: str = "experiment"
    seed: int = 0
    model: ModelSection = field(default_factory=ModelSection)
    data: DataSection = field(default_factory=DataSection)
    split: SplitSection = field(default_factory=SplitSection)
    train: TrainSection = field(default_factory=TrainSection)
    calibrate: CalibrateSection = field(default_factory=CalibrateSection)
    evaluate: EvaluateSection = field(default_factory=EvaluateSection)
    sweep: SweepSection = field(default_factory=SweepSection)
    ingest: IngestSection = field(default_factory=IngestSection)
    base_dir: Path = field(default=Path("."), repr=False, compare=False)

    def resolve_path(self, p: str | None) -> str | None:
        if p is None:
            return None
        path = Path(p)
        return str(path if path.is_absolute() else self.base_dir / path)


def _build(cls, raw, where: str):
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{where}: expected a mapping, got {type(raw).__name__}")
    hints = typing.get_type_hints(cls)
    fields = {f.name for f in dataclasses.fields(cls) if f.name != "base_dir"}
    unknown = sorted(set(raw) - fields)
    if unknown:
        raise ConfigError(f"{where or 'config'}: unknown key(s) {', '.join(unknown)}")
    kw = {}
    for name, value in raw.items():
        hint = hints[name]
        if dataclasses.is_dataclass(hint):
            kw[name] = _build(hint, value, f"{where}.{name}" if where else name)
        else:
            kw[name] = _coerce(value, hint, f"{where}.{name}" if where else name)
    try:
        return cls(**kw)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def _coerce(value, hint, where):
    origin = typing.get_origin(hint)
    args = typing.get_args(hint)
    if origin is typing.Union or str(origin) == "types.UnionType":
        if value is None and type(None) in args:
            return None
        inner = [a for a in args if a is not type(None)]
        return _coerce(value, inner[0], where)
    if hint is Any:
        return value
    if origin is list:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{where}: expected a list")
        return [_coerce(v, args[0], f"{where}[{i}]") for i, v in enumerate(value)]
    if origin is dict:
        if not isinstance(value, dict):
            raise ConfigError(f"{where}: expected a mapping")
        return {str(k): _coerce(v, args[1], f"{where}.{k}") for k, v in value.items()}
    if hint is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true or false")
        return value
    if hint is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return value
    if hint is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        return float(value)
    if hint is str:
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string, got {value!r}")
        return value
    return value


def _check(cfg: Config) -> None:
    fam = cfg.model.family.upper()
    if fam not in PARAM_NAMES:
        raise ConfigError(f"model.family: unknown family {cfg.model.family!r}")
    cfg.model.family = fam
    for sec, mp in (("model.params", cfg.model.params), ("model.bounds", cfg.model.bounds),
                    ("train.init", cfg.train.init), ("calibrate.init", cfg.calibrate.init)):
        if mp is not None and set(mp) - set(PARAM_NAMES[fam]):
            raise ConfigError(f"{sec}: {fam} has no parameter(s) {sorted(set(mp) - set(PARAM_NAMES[fam]))}")
    if cfg.data.source not in ("simulate", "files"):
        raise ConfigError("data.source must be simulate or files")
    if cfg.data.source == "files" and not cfg.data.path:
        raise ConfigError("data.path is required when data.source is files")
    if cfg.data.regime not in REGIMES:
        raise ConfigError(f"data.regime must be one of {REGIMES}")
    bad = sorted(set(cfg.data.sim) - ({f.name for f in dataclasses.fields(SimConfig)} - {"regime", "seed"}))
    if bad:
        raise ConfigError(f"data.sim: unknown key(s) {', '.join(bad)}")
    if cfg.split.collocation_source not in COLLOCATION_SOURCES:
        raise ConfigError(f"split.collocation_source must be one of {COLLOCATION_SOURCES}")
    if cfg.split.collocation_mode not in COLLOCATION_MODES:
        raise ConfigError(f"split.collocation_mode must be one of {COLLOCATION_MODES}")
    if cfg.train.mode not in MODES:
        raise ConfigError(f"train.mode must be one of {MODES}")
    if cfg.train.physics not in PHYSICS_SOURCES and not cfg.train.physics.endswith(".json"):
        raise ConfigError(f"train.physics must be one of {PHYSICS_SOURCES} or a params .json path")
    if cfg.calibrate.method not in ("ls", "ga"):
        raise ConfigError("calibrate.method must be ls or ga")
    if cfg.evaluate.kind not in EVAL_KINDS:
        raise ConfigError(f"evaluate.kind must be one of {EVAL_KINDS}")
    if not cfg.sweep.n_observed or not cfg.sweep.alpha or cfg.sweep.replicates < 1:
        raise ConfigError("sweep needs non-empty n_observed and alpha lists and replicates >= 1")
    train_config(cfg)  # validates the trainer fields
    ga_config(cfg)
    sim_config(cfg)
    ingest_config(cfg)


def load_config(path: str | Path, seed: int | None = None) -> Config:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    cfg = from_dict(raw or {}, seed)
    cfg.base_dir = path.resolve().parent
    return cfg


def from_dict(raw: dict, seed: int | None = None) -> Config:
    cfg = _build(Config, raw, "")
    if seed is not None:
        cfg.seed = seed
    _check(cfg)
    return cfg


def resolved(cfg: Config) -> dict:
    d = dataclasses.asdict(cfg)
    d.pop("base_dir")
    return d


def train_config(cfg: Config, alpha: float | None = None, seed: int | None = None) -> TrainConfig:
    t = cfg.train
    kw = {f.name: getattr(t, f.name) for f in dataclasses.fields(TrainConfig) if hasattr(t, f.name)}
    kw["hidden"] = tuple(t.hidden)
    kw["alpha"] = t.alpha if alpha is None else alpha
    kw["seed"] = cfg.seed if seed is None else seed
    return TrainConfig(**kw)


def ga_config(cfg: Config, jobs: int = 1) -> GaConfig:
    c = cfg.calibrate
    names = [f.name for f in dataclasses.fields(GaConfig) if f.name not in ("seed", "jobs")]
    return GaConfig(**{n: getattr(c, n) for n in names}, seed=cfg.seed, jobs=jobs)


def sim_config(cfg: Config, seed: int | None = None) -> SimConfig:
    extra = dict(cfg.data.sim)
    for k, v in extra.items():
        if isinstance(v, list):
            extra[k] = tuple(v)
    return SimConfig(regime=cfg.data.regime, seed=cfg.seed if seed is None else seed, **extra)


def ingest_config(cfg: Config) -> IngestConfig:
    names = [f.name for f in dataclasses.fields(IngestConfig)]
    return IngestConfig(**{n: getattr(cfg.ingest, n) for n in names})

