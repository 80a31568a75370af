"""Kernel backend selection.

The hot loops (counter-based random draws, polar normals, Levy-area sums,
the Heston full-truncation stepper) exist twice: a numba
``@njit`` version and a pure-numpy version.  ``SDESIM_BACKEND`` picks one:

    SDESIM_BACKEND=numba   (default when numba imports)
    SDESIM_BACKEND=numpy

Both produce the same random integers; floating results agree to rounding.
"""
import os
import warnings

from . import _kernels_numpy

_requested = os.environ.get("SDESIM_BACKEND", "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    raise ImportError(f"SDESIM_BACKEND must be 'numba' or 'numpy', got {_requested!r}")

if _requested == "numba":
    try:
        from . import _kernels_numba as kernels
        BACKEND = "numba"
    except ImportError as exc:  # pragma: no cover - depends on install
        warnings.warn(f"numba unavailable ({exc}); using numpy kernels", RuntimeWarning)
        kernels = _kernels_numpy
        BACKEND = "numpy"
else:
    kernels = _kernels_numpy
    BACKEND = "numpy"


def get_kernels(name=None):
    """Return a kernel module by name, or the active one."""
    if name is None:
        return kernels
    if name == "numpy":
        return _kernels_numpy
    if name == "numba":
        from . import _kernels_numba
        return _kernels_numba
    raise ValueError(f"unknown backend {name!r}")
