"""Kernel backend selection: numba JIT kernels or the pure-numpy mirrors.

The env var RXINDEX_BACKEND picks the initial backend: "numba", "numpy", or
"auto" (default; numba when importable). set_backend() switches at runtime,
which is how the parity tests and the backend benchmark drive both paths in
one process. Both backends implement identical traversal/probe semantics and
produce identical results and work counters; only wall-clock differs.
"""

from __future__ import annotations

import os

BACKENDS = ("numba", "numpy")

_current: str | None = None


def numba_available() -> bool:
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


def _initial() -> str:
    env = os.environ.get("RXINDEX_BACKEND", "auto").strip().lower()
    if env in ("", "auto"):
        return "numba" if numba_available() else "numpy"
    if env == "numpy":
        return "numpy"
    if env == "numba":
        if not numba_available():
            raise RuntimeError("RXINDEX_BACKEND=numba but numba is not importable")
        return "numba"
    raise RuntimeError(f"RXINDEX_BACKEND={env!r} not recognized (numba/numpy/auto)")


def get_backend() -> str:
    global _current
    if _current is None:
        _current = _initial()
    return _current


def set_backend(name: str) -> None:
    if name not in BACKENDS:
        raise ValueError(f"backend must be one of {BACKENDS}, got {name!r}")
    if name == "numba" and not numba_available():
        raise RuntimeError("numba backend requested but numba is not importable")
    global _current
    _current = name


def kernels():
    """The active kernel module; both expose the same function set."""
    if get_backend() == "numba":
        from . import _kernels_numba as mod
    else:
        from . import _kernels_numpy as mod
    return mod
