"""Kernel backend selection.

The hot per-step kernels exist twice: a numba-JIT build and a pure-numpy
fallback. MCAD_BACKEND=numpy or MCAD_BACKEND=numba forces one; unset, the
numba build is used when importable and numpy otherwise.
"""

import os

from . import _kernels_numpy
from .errors import ConfigurationError

_VALID = ("numba", "numpy")


def get_kernels(name):
    """Return the kernel module for an explicit backend name."""
    if name == "numpy":
        return _kernels_numpy
    if name == "numba":
        from . import _kernels_numba

        return _kernels_numba
    raise ConfigurationError(f"unknown backend {name!r}, expected one of {_VALID}")


def _select():
    flag = os.environ.get("MCAD_BACKEND", "").strip().lower()
    if flag and flag not in _VALID:
        raise ConfigurationError(
            f"MCAD_BACKEND={flag!r} not understood, expected one of {_VALID}"
        )
    if flag == "numpy":
        return _kernels_numpy
    if flag == "numba":
        return get_kernels("numba")
    try:
        return get_kernels("numba")
    except ImportError:
        return _kernels_numpy


kernels = _select()


def active_backend():
    return kernels.BACKEND_NAME
