"""Backend selection for the sequential inner loops.

The compiled extension is used when it imports; otherwise, or when
``PIDLCF_PURE_PYTHON=1`` is set, the pure-Python module is used.  Both
expose the same functions.
"""

import os

from . import _pykernels

if os.environ.get("PIDLCF_PURE_PYTHON", "") not in ("", "0"):
    _impl = _pykernels
else:
    try:
        from . import _ckernels as _impl
    except ImportError:  # extension not built
        _impl = _pykernels

BACKEND = _impl.BACKEND
integrate_follower = _impl.integrate_follower
median_velocity = _impl.median_velocity
model_accel = _impl.model_accel

STATUS_COLLISION = _pykernels.STATUS_COLLISION
STATUS_SPEED_CLAMPED = _pykernels.STATUS_SPEED_CLAMPED
TERMINATE_NEVER = _pykernels.TERMINATE_NEVER
TERMINATE_ON_ZERO_OR_FLIP = _pykernels.TERMINATE_ON_ZERO_OR_FLIP


def backends():
    """All importable backends, keyed by name (used by tests and the benchmark)."""
    out = {"python": _pykernels}
    try:
        from . import _ckernels

        out["cython"] = _ckernels
    except ImportError:
        pass
    return out
