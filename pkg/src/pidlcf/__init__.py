"""Physics-informed deep learning for car-following models."""

from .core import CollocationPoint, Dataset, ObservedPair, State, Trajectory
from .errors import ConfigError, DataError, DivergenceError, PidlError
from .physics import PhysicsParams, accel, make_params

__version__ = "0.1.0"

__all__ = [
    "CollocationPoint",
    "ConfigError",
    "DataError",
    "Dataset",
    "DivergenceError",
    "ObservedPair",
    "PhysicsParams",
    "PidlError",
    "State",
    "Trajectory",
    "accel",
    "make_params",
    "__version__",
]
