"""Kernel backend selection.

The hot kernels (cart-pole stepping, tiny-net forward passes, greedy
rollouts, minibatch Q-gradients) exist twice: a compiled Cython extension
`polezoo._core` and a pure NumPy fallback `polezoo._core_py`. At import time
the compiled one is preferred; set POLEZOO_BACKEND=python or =compiled to
force a choice (forcing `compiled` raises if the extension did not build).

Hot call sites grab `backend.kernels` once per function call, so
`set_backend` (used by tests and the benchmark) takes effect everywhere.
"""

from __future__ import annotations

import os

from . import _core_py

try:
    from . import _core
except ImportError:
    _core = None

_BY_NAME = {"python": _core_py, "compiled": _core}


def _initial():
    forced = os.environ.get("POLEZOO_BACKEND")
    if forced:
        if forced not in _BY_NAME:
            raise ValueError(f"POLEZOO_BACKEND must be 'python' or 'compiled', got {forced!r}")
        if _BY_NAME[forced] is None:
            raise ImportError("POLEZOO_BACKEND=compiled but the polezoo._core extension is not built")
        return _BY_NAME[forced]
    return _core if _core is not None else _core_py


kernels = _initial()


def backend_name() -> str:
    return "compiled" if kernels.COMPILED else "python"


def compiled_available() -> bool:
    return _core is not None


def set_backend(name: str) -> None:
    """Switch the active kernel set; mainly for tests and benchmarks."""
    global kernels
    if name not in _BY_NAME:
        raise ValueError(f"unknown backend {name!r}")
    if _BY_NAME[name] is None:
        raise ImportError("compiled backend requested but polezoo._core is not built")
    kernels = _BY_NAME[name]
