"""Small dense linear-algebra helpers: numerical rank and finite differences."""

from __future__ import annotations

from typing import Callable

import numpy as np

RANK_RTOL = 1e-10


def singular_values(X: np.ndarray) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.size == 0:
        return np.zeros(0)
    return np.linalg.svd(X, compute_uv=False)


def rank_threshold(sv: np.ndarray, rtol: float, scale: float | None = None) -> float:
    ref = scale if scale is not None else (sv[0] if sv.size else 0.0)
    return rtol * ref


def numerical_rank(X: np.ndarray, rtol: float = RANK_RTOL, scale: float | None = None) -> int:
    """Number of singular values above ``rtol * scale``.

    ``scale`` defaults to the largest singular value of ``X``. Pass an
    explicit scale when ``X`` is a product that may vanish entirely, so the
    threshold stays tied to the size of its factors.
    """
    sv = singular_values(X)
    if sv.size == 0:
        return 0
    return int(np.sum(sv > rank_threshold(sv, rtol, scale)))


def rank_gap(X: np.ndarray, rtol: float = RANK_RTOL, scale: float | None = None) -> tuple[int, float, float]:
    """Return ``(rank, smallest kept singular value, largest dropped one)``."""
    sv = singular_values(X)
    if sv.size == 0:
        return 0, float("inf"), 0.0
    thresh = rank_threshold(sv, rtol, scale)
    r = int(np.sum(sv > thresh))
    kept = float(sv[r - 1]) if r > 0 else float("inf")
    dropped = float(sv[r]) if r < sv.size else 0.0
    return r, kept, dropped


def fd_step(x: np.ndarray, rel: float) -> np.ndarray:
    return rel * (1.0 + np.abs(x))


def fd_gradient(f: Callable[[np.ndarray], float], x: np.ndarray, rel: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of a scalar function."""
    x = np.asarray(x, dtype=float)
    h = fd_step(x, rel)
    g = np.empty_like(x)
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[i] += h[i]
        xm[i] -= h[i]
        g[i] = (f(xp) - f(xm)) / (2.0 * h[i])
    return g


def fd_jacobian(f: Callable[[np.ndarray], np.ndarray], x: np.ndarray, rel: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian, rows indexed by outputs."""
    x = np.asarray(x, dtype=float)
    f0 = np.atleast_1d(np.asarray(f(x), dtype=float))
    h = fd_step(x, rel)
    J = np.empty((f0.size, x.size))
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[i] += h[i]
        xm[i] -= h[i]
        J[:, i] = (np.atleast_1d(f(xp)) - np.atleast_1d(f(xm))) / (2.0 * h[i])
    return J
