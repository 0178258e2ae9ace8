"""Symmetric-matrix helpers shared across the package.

All decompositions go through `eigh`.  Eigenvalues below RTOL times the top
eigenvalue are treated as exactly zero, both for pseudo-inverses and for
square roots; tiny negative eigenvalues from floating drift are clamped.
"""

from __future__ import annotations

import numpy as np

RTOL = 1e-10


def sym(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.T)


def eigh_clamped(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix with small eigenvalues zeroed."""
    vals, vecs = np.linalg.eigh(sym(a))
    cut = RTOL * max(vals[-1], 0.0) if vals.size else 0.0
    vals = np.where(vals > cut, vals, 0.0)
    return vals, vecs


def psd_sqrt(a: np.ndarray) -> np.ndarray:
    vals, vecs = eigh_clamped(a)
    return (vecs * np.sqrt(vals)) @ vecs.T


def psd_pinv(a: np.ndarray) -> np.ndarray:
    vals, vecs = eigh_clamped(a)
    inv = np.divide(1.0, vals, out=np.zeros_like(vals), where=vals > 0)
    return (vecs * inv) @ vecs.T


def psd_pinv_sqrt(a: np.ndarray) -> np.ndarray:
    vals, vecs = eigh_clamped(a)
    inv = np.divide(1.0, np.sqrt(vals, where=vals > 0, out=np.ones_like(vals)),
                    out=np.zeros_like(vals), where=vals > 0)
    return (vecs * inv) @ vecs.T


def range_projection(a: np.ndarray) -> np.ndarray:
    """Projection onto the positive eigenspace of a PSD matrix."""
    vals, vecs = eigh_clamped(a)
    mask = (vals > 0).astype(float)
    return (vecs * mask) @ vecs.T


def min_eigenvalue(a: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(sym(a))[0])


def fro(a: np.ndarray) -> float:
    return float(np.linalg.norm(a, "fro"))
