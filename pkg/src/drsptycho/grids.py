"""Complex grid primitives.

Every object, probe and transform-domain vector in the package is a plain
``numpy`` array of dtype ``complex128`` (row-major).  This module holds the
few elementwise maps everything else is built from, plus NPY I/O.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from .errors import DimensionError

CDTYPE = np.complex128


def as_grid(a) -> np.ndarray:
    """Return `a` as a C-contiguous complex128 array (no copy if possible)."""
    return np.ascontiguousarray(a, dtype=CDTYPE)


def sgn(u) -> np.ndarray:
    """Phase vector of `u` with the convention ``sgn(0) = 1``.

    Entries are ``u / |u|`` where ``u != 0`` and exactly ``1 + 0j`` elsewhere,
    so the result always has unit modulus.
    """
    u = np.asarray(u, dtype=CDTYPE)
    mag = np.abs(u)
    out = np.ones_like(u)
    nz = mag > 0
    out[nz] = u[nz] / mag[nz]
    return out


def hadamard(a, b) -> np.ndarray:
    """Entrywise product of two equally shaped grids."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch {a.shape} vs {b.shape}")
    return a * b


def norm2(u) -> float:
    """Euclidean norm over all entries."""
    return float(np.linalg.norm(np.ravel(u)))


def rinner(u, v) -> float:
    """Real inner product ``Re <u, v>`` used for all adjoint statements."""
    return float(np.real(np.vdot(np.ravel(u), np.ravel(v))))


def save_npy(path, arr, dtype=CDTYPE) -> Path:
    """Write `arr` as NPY v1.0 (C-order) atomically; returns the path."""
    path = Path(path)
    arr = np.ascontiguousarray(arr, dtype=dtype)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        np.lib.format.write_array(fh, arr, version=(1, 0), allow_pickle=False)
    os.replace(tmp, path)
    return path


def load_npy(path, dtype=CDTYPE) -> np.ndarray:
    arr = np.load(path, allow_pickle=False)
    return np.ascontiguousarray(arr, dtype=dtype)
