"""Kernel backend selection.

The compiled extension is used when it imports; setting the environment
variable SYMPLUG_PURE_PYTHON=1 forces the pure-Python twin.
"""
import os

from . import _pykernels

if os.environ.get("SYMPLUG_PURE_PYTHON", "") not in ("", "0"):
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _pykernels
        BACKEND = "python"

CYTHON_AVAILABLE = BACKEND == "cython"

EXIT_TOP, EXIT_BOTTOM, X_FACE, BUDGET, UNDERFLOW = 0, 1, 2, 3, 4
T_OK, T_EXTENDED, T_SIDEWAYS, T_FAILED = 0, 1, 2, 3

field_values = _impl.field_values
orbit = _impl.orbit
orbit_batch = _impl.orbit_batch
transport = _impl.transport
