"""Symmetric matrix-root helpers shared by the map and statistic modules."""

from __future__ import annotations

import numpy as np

_EIGEN_FLOOR = 1e-12


def _sym_eig(s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(s, dtype=float)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {s.shape}")
    if not np.allclose(s, s.T, atol=1e-10):
        raise ValueError("matrix is not symmetric")
    w, v = np.linalg.eigh(s)
    if w.min() < _EIGEN_FLOOR:
        raise ValueError(f"matrix is not positive definite (min eigenvalue {w.min():.3e})")
    return w, v


def sym_sqrt(s) -> np.ndarray:
    """Unique symmetric positive-definite square root."""
    w, v = _sym_eig(s)
    return (v * np.sqrt(w)) @ v.T


def sym_inv_sqrt(s) -> np.ndarray:
    """Inverse of the symmetric positive-definite square root."""
    w, v = _sym_eig(s)
    return (v / np.sqrt(w)) @ v.T
