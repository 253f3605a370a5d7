"""Dense matrix/vector helpers with explicit shape checks.

Matrices are 2-D float64 arrays (row-major), vectors 1-D. These wrappers
exist so every affine step in the library funnels through one checked,
tested surface; numpy does the arithmetic.
"""

import numpy as np


def _check_matrix(w):
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 2:
        raise ValueError(f"expected a matrix, got ndim={w.ndim}")
    return w


def _check_vector(v):
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError(f"expected a vector, got ndim={v.ndim}")
    return v


def matvec(w, v):
    """W @ v with a dimension check."""
    w, v = _check_matrix(w), _check_vector(v)
    if w.shape[1] != v.shape[0]:
        raise ValueError(f"matvec shape mismatch: {w.shape} @ {v.shape}")
    return w @ v


def transpose_matvec(w, v):
    """W.T @ v with a dimension check."""
    w, v = _check_matrix(w), _check_vector(v)
    if w.shape[0] != v.shape[0]:
        raise ValueError(f"transpose_matvec shape mismatch: {w.shape}.T @ {v.shape}")
    return w.T @ v


def outer_accumulate(g, h, acc):
    """acc + g h^T (rank-1 update), returned as a new matrix."""
    g, h, acc = _check_vector(g), _check_vector(h), _check_matrix(acc)
    if acc.shape != (g.shape[0], h.shape[0]):
        raise ValueError(f"accumulator shape {acc.shape} != ({g.shape[0]}, {h.shape[0]})")
    return acc + np.outer(g, h)


def axpy(a, x, y):
    """a * x + y elementwise."""
    x, y = _check_vector(x), _check_vector(y)
    if x.shape != y.shape:
        raise ValueError(f"axpy shape mismatch: {x.shape} vs {y.shape}")
    return a * x + y
