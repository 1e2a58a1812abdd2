"""Dense float64 kernels used by every other module.

Matrices are C-contiguous (row-major) 2-D float64 ndarrays, vectors 1-D
float64 ndarrays; the constructors below enforce that. All functions are
pure: no global state, identical inputs give bit-identical outputs.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError

# Smallest/largest values sigmoid may return. Keeps the output strictly
# inside (0, 1) even when exp underflows.
_SIGMOID_MIN = np.nextafter(0.0, 1.0)
_SIGMOID_MAX = np.nextafter(1.0, 0.0)


def matrix(data, rows: int | None = None, cols: int | None = None) -> np.ndarray:
    """Build a row-major float64 matrix and validate its shape.

    ``data`` may be nested sequences, a 2-D array, or (with ``rows``/``cols``)
    a flat sequence of length rows*cols.
    """
    arr = np.array(data, dtype=np.float64, order="C")
    if rows is not None and cols is not None:
        if arr.ndim != 1 or arr.size != rows * cols:
            raise ShapeError(
                f"flat data of length {arr.size} cannot fill a {rows}x{cols} matrix"
            )
        arr = arr.reshape(rows, cols)
    if arr.ndim != 2:
        raise ShapeError(f"matrix must be 2-D, got ndim={arr.ndim}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ShapeError(f"matrix must have at least one row and column, got {arr.shape}")
    return arr


def vector(data) -> np.ndarray:
    """Build a 1-D float64 vector."""
    arr = np.array(data, dtype=np.float64)
    if arr.ndim != 1:
        raise ShapeError(f"vector must be 1-D, got ndim={arr.ndim}")
    return arr


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Standard matrix product; raises ShapeError naming both shapes on mismatch."""
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul needs 2-D operands, got ndim {a.ndim} and {b.ndim}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape[0]}x{a.shape[1]} by {b.shape[0]}x{b.shape[1]}")
    return a @ b


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Elementwise logistic function, numerically stable.

    Branches on sign so exp never overflows, then clamps into the open
    interval (0, 1): large negative inputs saturate to the smallest positive
    double instead of 0, large positive ones to the double just below 1.
    """
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return np.clip(out, _SIGMOID_MIN, _SIGMOID_MAX)


def tanh_vec(x: np.ndarray) -> np.ndarray:
    """Elementwise hyperbolic tangent."""
    return np.tanh(np.asarray(x, dtype=np.float64))


def relu(x: np.ndarray) -> np.ndarray:
    """Elementwise max(0, x)."""
    return np.maximum(np.asarray(x, dtype=np.float64), 0.0)
