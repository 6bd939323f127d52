"""Simulation kernels with a compiled backend and a pure-Python fallback.

The compiled extension is used when it imports; set the environment
variable ``MARKOV_BILLIARD_BACKEND=python`` to force the fallback.
"""

import os

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

__all__ = ["BACKEND", "get_backend", "available_backends"]


def available_backends():
    return ["compiled", "python"] if _ckernels is not None else ["python"]


def get_backend(name=None):
    """Kernel module for ``name`` (``"compiled"``, ``"python"`` or ``None`` for default)."""
    if name is None:
        name = BACKEND
    if name == "python":
        return _pykernels
    if name == "compiled":
        if _ckernels is None:
            raise ImportError("compiled kernels are not built; reinstall the package")
        return _ckernels
    raise ValueError(f"unknown backend {name!r}")


_requested = os.environ.get("MARKOV_BILLIARD_BACKEND", "").strip().lower()
if _requested == "python" or _ckernels is None:
    BACKEND = "python"
else:
    BACKEND = "compiled"
