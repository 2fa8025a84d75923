"""Backend selection for the hot loops.

The compiled extension is used when it imports; setting the environment
variable ``ROWPROX_PURE_PYTHON=1`` forces the pure-Python fallback.
``BACKEND`` names the active implementation.
"""
from __future__ import annotations

import os

from . import _pykernels

ART, DAMPED, L1, HUBER, DIST, DISTSQ = range(6)

_impl = _pykernels
BACKEND = "python"
if os.environ.get("ROWPROX_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels

row_sweep = _impl.row_sweep
row_coef = _impl.row_coef
trace_rays = _impl.trace_rays


def get_backend(name: str):
    """Module implementing the kernels for ``name`` (``"python"`` or ``"cython"``)."""
    if name == "python":
        return _pykernels
    if name == "cython":
        from . import _ckernels

        return _ckernels
    raise ValueError(f"unknown backend {name!r}")
