"""Byte-exact on-disk formats: problem bundles, error histories and image previews.

Matrix file (little-endian)::

    b"RPX1" | u64 nrows | u64 ncols | u64 nnz
    | u64[nrows + 1] row_offsets | u64[nnz] col_indices | f64[nnz] values

Vector file (little-endian)::

    b"RPV1" | u64 length | f64[length] data
"""
from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .sparsela import SparseMatrix
from .tomo import Geometry, TomoProblem

__all__ = [
    "HISTORY_HEADER",
    "load_problem",
    "read_matrix",
    "read_vector",
    "save_problem",
    "write_history",
    "write_json",
    "write_matrix",
    "write_pgm",
    "write_vector",
]

MATRIX_MAGIC = b"RPX1"
VECTOR_MAGIC = b"RPV1"
HISTORY_HEADER = "cycle,relative_error,objective,t_k"


def write_matrix(path, A: SparseMatrix) -> None:
    with open(path, "wb") as fh:
        fh.write(MATRIX_MAGIC)
        fh.write(np.array([A.nrows, A.ncols, A.nnz], dtype="<u8").tobytes())
        fh.write(A.row_offsets.astype("<u8").tobytes())
        fh.write(A.col_indices.astype("<u8").tobytes())
        fh.write(A.values.astype("<f8").tobytes())


def _check_magic(data: bytes, magic: bytes, path):
    if data[:4] != magic:
        raise ValueError(f"{path}: bad magic {data[:4]!r}, expected {magic!r}")


def read_matrix(path) -> SparseMatrix:
    data = Path(path).read_bytes()
    _check_magic(data, MATRIX_MAGIC, path)
    nrows, ncols, nnz = (int(v) for v in np.frombuffer(data, "<u8", 3, 4))
    expected = 4 + 8 * (3 + nrows + 1 + 2 * nnz)
    if len(data) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, found {len(data)}")
    off = 28
    ro = np.frombuffer(data, "<u8", nrows + 1, off).astype(np.int64)
    off += 8 * (nrows + 1)
    ci = np.frombuffer(data, "<u8", nnz, off).astype(np.int64)
    off += 8 * nnz
    vals = np.frombuffer(data, "<f8", nnz, off).astype(np.float64)
    return SparseMatrix(nrows, ncols, ro, ci, vals)


def write_vector(path, x) -> None:
    x = np.asarray(x, dtype="<f8").ravel()
    with open(path, "wb") as fh:
        fh.write(VECTOR_MAGIC)
        fh.write(np.array([x.size], dtype="<u8").tobytes())
        fh.write(x.tobytes())


def read_vector(path) -> np.ndarray:
    data = Path(path).read_bytes()
    _check_magic(data, VECTOR_MAGIC, path)
    (n,) = (int(v) for v in np.frombuffer(data, "<u8", 1, 4))
    if len(data) != 12 + 8 * n:
        raise ValueError(f"{path}: expected {12 + 8 * n} bytes, found {len(data)}")
    return np.frombuffer(data, "<f8", n, 12).astype(np.float64)


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def write_pgm(path, image) -> dict:
    """Binary 8-bit graymap with linear min-max scaling; returns the scaling used."""
    image = np.asarray(image, dtype=np.float64)
    lo, hi = float(np.min(image)), float(np.max(image))
    span = hi - lo
    scaled = np.zeros(image.shape) if span == 0 else (image - lo) / span
    pix = np.clip(np.round(scaled * 255.0), 0, 255).astype(np.uint8)
    h, w = pix.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(pix.tobytes())
    return {"min": lo, "max": hi}


def _fmt(v) -> str:
    v = float(v)
    if math.isnan(v):
        return "nan"
    return format(v, ".17g")


def write_history(path, trace) -> None:
    """Error history CSV: one row per recorded cycle (row 0 describes the start point)."""
    lines = [HISTORY_HEADER]
    for c, e, f, t in zip(trace.cycles, trace.relative_errors, trace.objectives, trace.step_sizes):
        lines.append(f"{c},{_fmt(e)},{_fmt(f)},{_fmt(t)}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def image_of(x, N):
    return np.asarray(x).reshape(N, N, order="F")


def save_problem(path, problem: TomoProblem, extra: dict | None = None) -> dict:
    """Write a problem bundle directory; returns its metadata."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    g = problem.geometry
    write_matrix(path / "A.rpx", problem.A)
    write_vector(path / "b.rpv", problem.b)
    write_vector(path / "b_exact.rpv", problem.b_exact)
    write_vector(path / "x_exact.rpv", problem.x_exact)
    scaling = write_pgm(path / "x_exact.pgm", image_of(problem.x_exact, g.N))
    meta = {
        "format": "rowprox-problem-1",
        "N": g.N,
        "projections": g.p,
        "rays": g.r,
        "pixel_size": g.pixel_size,
        "eta": problem.eta,
        "seed": problem.seed,
        "shape": list(g.shape),
        "nnz": problem.A.nnz,
        "files": {
            "A": "A.rpx",
            "b": "b.rpv",
            "b_exact": "b_exact.rpv",
            "x_exact": "x_exact.rpv",
            "preview": "x_exact.pgm",
        },
        "preview_scaling": scaling,
    }
    if extra:
        meta.update(extra)
    write_json(path / "meta.json", meta)
    return meta


def load_problem(path) -> TomoProblem:
    path = Path(path)
    meta_path = path / "meta.json"
    if not meta_path.is_file():
        raise FileNotFoundError(f"{path} is not a problem bundle (no meta.json)")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    files = meta["files"]
    geometry = Geometry(meta["N"], meta["projections"], meta["rays"], meta.get("pixel_size", 1.0))
    return TomoProblem(
        A=read_matrix(path / files["A"]),
        x_exact=read_vector(path / files["x_exact"]),
        b_exact=read_vector(path / files["b_exact"]),
        b=read_vector(path / files["b"]),
        eta=meta["eta"],
        seed=meta["seed"],
        geometry=geometry,
    )
