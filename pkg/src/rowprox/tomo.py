"""Parallel-beam tomography test problems.

The image covers ``[-1, 1]^2`` with ``N x N`` pixels, row ``i`` counted
from the top (``y = 1``) and pixel ``(i, j)`` stored at ``j * N + i``.  Ray
``(a, k)`` uses angle ``theta_a = a * pi / p`` and detector offset
``s_k = -sqrt(2) + k * 2 sqrt(2) / (r - 1)`` (both ends of the diagonal
included); it is the line
``s_k (cos theta, sin theta) + tau (-sin theta, cos theta)`` and occupies
row ``a * r + k`` of the projector.  Intersection lengths are measured in
units where a pixel has side ``pixel_size``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import kernels
from .sparsela import SparseMatrix, csr_from_coo

__all__ = [
    "Geometry",
    "TomoProblem",
    "build_projector",
    "fine_geometry",
    "forward_project",
    "inscribed_circle_mask",
    "make_sinogram",
    "pixel_centers",
    "shepp_logan",
]

# Modified Shepp-Logan: intensity, semi-axes (a, b), center (x0, y0), tilt in degrees.
_ELLIPSES = (
    (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    (-0.8, 0.6624, 0.8740, 0.0, -0.0184, 0.0),
    (-0.2, 0.1100, 0.3100, 0.22, 0.0, -18.0),
    (-0.2, 0.1600, 0.4100, -0.22, 0.0, 18.0),
    (0.1, 0.2100, 0.2500, 0.0, 0.35, 0.0),
    (0.1, 0.0460, 0.0460, 0.0, 0.1, 0.0),
    (0.1, 0.0460, 0.0460, 0.0, -0.1, 0.0),
    (0.1, 0.0460, 0.0230, -0.08, -0.605, 0.0),
    (0.1, 0.0230, 0.0230, 0.0, -0.606, 0.0),
    (0.1, 0.0230, 0.0460, 0.06, -0.605, 0.0),
)

SQRT2 = math.sqrt(2.0)


def pixel_centers(N: int):
    """``(x, y)`` coordinates of all pixel centers in storage order."""
    c = -1.0 + (np.arange(N) + 0.5) * 2.0 / N
    X, Y = np.meshgrid(c, -c, indexing="xy")
    return X.ravel(order="F"), Y.ravel(order="F")


def shepp_logan(N: int) -> np.ndarray:
    """Modified Shepp-Logan phantom sampled at pixel centers, clipped at 0.

    Returns a vector of length ``N**2`` in column-major order; use
    ``x.reshape(N, N, order="F")`` for the image.
    """
    if N < 8:
        raise ValueError("N must be at least 8")
    x, y = pixel_centers(N)
    img = np.zeros(N * N)
    for val, a, b, x0, y0, phi in _ELLIPSES:
        c, s = math.cos(math.radians(phi)), math.sin(math.radians(phi))
        dx, dy = x - x0, y - y0
        u = (dx * c + dy * s) / a
        v = (-dx * s + dy * c) / b
        img[u * u + v * v <= 1.0] += val
    return np.maximum(img, 0.0)


@dataclass(frozen=True)
class Geometry:
    """Parallel-beam geometry: ``p`` angles in ``[0, 180)`` degrees, ``r`` rays each."""

    N: int
    p: int
    r: int
    pixel_size: float = 1.0

    def __post_init__(self):
        if self.N < 1 or self.p < 1 or self.r < 1:
            raise ValueError("N, p and r must be positive")
        if not self.pixel_size > 0:
            raise ValueError("pixel_size must be positive")

    @property
    def angles(self) -> np.ndarray:
        """Projection angles in radians."""
        return np.arange(self.p) * math.pi / self.p

    @property
    def detector(self) -> np.ndarray:
        """Detector offsets: ``r`` equispaced points from ``-sqrt 2`` to ``sqrt 2``."""
        if self.r == 1:
            return np.zeros(1)
        return np.linspace(-SQRT2, SQRT2, self.r)

    @property
    def detector_spacing(self) -> float:
        return 2.0 * SQRT2 / max(self.r - 1, 1)

    @property
    def shape(self):
        return (self.p * self.r, self.N * self.N)

    @property
    def length_scale(self) -> float:
        """Factor from normalized lengths on ``[-1, 1]`` to ``pixel_size`` units."""
        return 0.5 * self.N * self.pixel_size

    def rays(self, angle_index=None, oversample: int = 1):
        """Start points and unit directions of the rays (``oversample`` sub-rays per bin)."""
        th = self.angles if angle_index is None else self.angles[np.atleast_1d(angle_index)]
        width = self.detector_spacing
        sub = (np.arange(oversample) + 0.5) / oversample - 0.5
        s = (self.detector[:, None] + sub[None, :] * width).ravel()
        cos, sin = np.cos(th)[:, None], np.sin(th)[:, None]
        px = (s[None, :] * cos).ravel()
        py = (s[None, :] * sin).ravel()
        ux = np.broadcast_to(-sin, (th.size, s.size)).ravel()
        uy = np.broadcast_to(cos, (th.size, s.size)).ravel()
        return (np.ascontiguousarray(px), np.ascontiguousarray(py),
                np.ascontiguousarray(ux), np.ascontiguousarray(uy))


def build_projector(geometry: Geometry, oversample: int = 1) -> SparseMatrix:
    """Sparse ray/pixel intersection-length matrix of shape ``(p r, N^2)``.

    With ``oversample > 1`` every detector bin is covered by that many
    parallel sub-rays and their rows are averaged.
    """
    if oversample < 1:
        raise ValueError("oversample must be at least 1")
    rows, cols, vals = kernels.trace_rays(
        *geometry.rays(oversample=oversample), geometry.N, geometry.length_scale
    )
    if oversample > 1:
        rows = rows // oversample
        vals = vals / oversample
    return csr_from_coo(*geometry.shape, rows, cols, vals)


def forward_project(geometry: Geometry, x) -> np.ndarray:
    """``A x`` computed angle by angle without storing ``A``."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (geometry.N**2,):
        raise ValueError("image has the wrong size for this geometry")
    out = np.zeros(geometry.p * geometry.r)
    for a in range(geometry.p):
        rows, cols, vals = kernels.trace_rays(*geometry.rays(a), geometry.N, geometry.length_scale)
        out[a * geometry.r : (a + 1) * geometry.r] = np.bincount(
            rows, weights=vals * x[cols], minlength=geometry.r
        )
    return out


@dataclass(frozen=True, eq=False)
class TomoProblem:
    A: SparseMatrix
    x_exact: np.ndarray
    b_exact: np.ndarray
    b: np.ndarray
    eta: float
    seed: int
    geometry: Geometry


def fine_geometry(geometry: Geometry) -> Geometry:
    """Finer grid (``round(sqrt 3 N)``) and detector (``round(sqrt 2 r)``) over the same extent."""
    Nf = int(round(math.sqrt(3.0) * geometry.N))
    rf = int(round(SQRT2 * geometry.r))
    return replace(geometry, N=Nf, r=rf, pixel_size=geometry.pixel_size * geometry.N / Nf)


def make_sinogram(geometry: Geometry, eta: float, seed: int = 0, A: SparseMatrix | None = None) -> TomoProblem:
    """Noisy test problem whose data come from a finer discretization.

    The fine sinogram is interpolated linearly, per angle, onto the coarse
    detector positions.  Gaussian noise is scaled so that
    ``||b - b_exact|| = eta ||b_exact||``.
    """
    if eta < 0:
        raise ValueError("eta must be nonnegative")
    fine = fine_geometry(geometry)
    fine_sino = forward_project(fine, shepp_logan(fine.N)).reshape(fine.p, fine.r)
    s_fine, s = fine.detector, geometry.detector
    b_exact = np.concatenate([np.interp(s, s_fine, row) for row in fine_sino])
    b = b_exact.copy()
    if eta > 0:
        e = np.random.default_rng(seed).standard_normal(b.size)
        e *= eta * np.linalg.norm(b_exact) / np.linalg.norm(e)
        b = b_exact + e
    if A is None:
        A = build_projector(geometry)
    return TomoProblem(A, shepp_logan(geometry.N), b_exact, b, float(eta), int(seed), geometry)


def inscribed_circle_mask(N: int) -> np.ndarray:
    """Pixels whose centers lie inside the unit circle (storage order)."""
    x, y = pixel_centers(N)
    return x * x + y * y <= 1.0
