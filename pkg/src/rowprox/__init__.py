"""Relaxed incremental proximal gradient methods and row-action tomographic reconstruction."""
from importlib import metadata as _metadata

from .kernels import BACKEND
from .prox import ALL_SPACE, NONNEG, ConstraintSet
from .rowaction import METHODS, MethodSpec, reconstruct
from .ripg import ComponentSpec, SolveConfig, run
from .sparsela import BlockPartition, SparseMatrix

try:
    __version__ = _metadata.version("artifact")
except _metadata.PackageNotFoundError:
    __version__ = "0.0.0"

__all__ = [
    "ALL_SPACE",
    "BACKEND",
    "BlockPartition",
    "ComponentSpec",
    "ConstraintSet",
    "METHODS",
    "MethodSpec",
    "NONNEG",
    "SolveConfig",
    "SparseMatrix",
    "reconstruct",
    "run",
]
