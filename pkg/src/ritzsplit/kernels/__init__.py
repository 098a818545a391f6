"""Hot numeric kernels with two interchangeable backends.

``numba`` compiles per-point loops with ``@njit``; ``numpy`` is a vectorized
fallback with no compiler dependency.  The default comes from the
``RITZSPLIT_BACKEND`` environment variable (``numba`` unless set to
``numpy``, and ``numpy`` whenever numba cannot be imported).  Every kernel
has the same signature in both modules.
"""

import importlib
import os

from . import _numpy

BACKENDS = ("numpy", "numba")


def _numba_available():
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


def _default_name():
    name = os.environ.get("RITZSPLIT_BACKEND", "numba").strip().lower()
    if name not in BACKENDS:
        raise ValueError(f"RITZSPLIT_BACKEND must be one of {BACKENDS}, got {name!r}")
    if name == "numba" and not _numba_available():
        return "numpy"
    return name


_active = _default_name()


def get(name=None):
    """Return the kernel module for ``name`` (default: the active backend)."""
    name = _active if name is None else name
    if name == "numpy":
        return _numpy
    if name == "numba":
        return importlib.import_module(f"{__name__}._numba")
    raise ValueError(f"unknown backend {name!r}")


def active():
    return _active


def set_backend(name):
    """Switch the process-wide default backend."""
    global _active
    if name not in BACKENDS:
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not _numba_available():
        raise RuntimeError("numba is not importable")
    _active = name
