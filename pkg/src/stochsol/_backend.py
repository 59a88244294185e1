"""Select the compiled tree kernel when available, else the pure-Python one.

Set ``STOCHSOL_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _pykernels

BACKEND = "python"
simulate_forest = _pykernels.simulate_forest

if not os.environ.get("STOCHSOL_PURE_PYTHON"):
    try:
        from . import _ckernels
    except ImportError:  # extension not built
        _ckernels = None
    else:
        BACKEND = "cython"
        simulate_forest = _ckernels.simulate_forest


def get_kernel(name: str | None = None):
    """Kernel by name (``"cython"``/``"python"``), or the active one."""
    if name is None:
        return simulate_forest
    if name == "python":
        return _pykernels.simulate_forest
    if name == "cython":
        from . import _ckernels as ck
        return ck.simulate_forest
    raise ValueError(f"unknown kernel backend {name!r}")
