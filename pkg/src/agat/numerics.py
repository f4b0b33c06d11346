"""Small dense linear algebra and finite-difference oracles.

All systems in this package live in R^3 (or R^6/R^9 for stacked states), so
everything here works on tiny dense arrays and favours clarity over speed.
"""

from __future__ import annotations

from typing import Callable

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import NearSingular

COND_LIMIT = 1e12
TIKHONOV_FLOOR = 1e-12
FD_STEP = 1e-5

Array = NDArray[np.float64]


def cross3(a: Array, b: Array) -> Array:
    """Cross product of two 3-vectors.

    ``np.cross`` handles broadcasting and axis bookkeeping that costs tens of
    microseconds per call; the integrator calls this in its innermost loop.
    """
    a0, a1, a2 = a.tolist()
    b0, b1, b2 = b.tolist()
    return np.array((a1 * b2 - a2 * b1, a2 * b0 - a0 * b2, a0 * b1 - a1 * b0))


def solve_linear(A: ArrayLike, b: ArrayLike) -> Array:
    """Solve the square system ``A x = b`` with LU and partial pivoting.

    Raises:
        NearSingular: if the 2-norm condition number of ``A`` exceeds 1e12.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    if np.linalg.cond(A) > COND_LIMIT:
        raise NearSingular(f"condition number exceeds {COND_LIMIT:g}")
    return np.linalg.solve(A, b)


def pseudo_solve(A: ArrayLike, b: ArrayLike, floor: float = TIKHONOV_FLOOR) -> Array:
    """Minimum-norm least-squares solution of ``A x = b`` via normal equations.

    Tall systems use ``(A^T A + floor I) x = A^T b``; wide systems use
    ``x = A^T (A A^T + floor I)^{-1} b``.  A 1-D ``A`` is read as a column.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim == 1:
        A = A[:, None]
    b = np.asarray(b, dtype=float)
    m, n = A.shape
    if m >= n:
        gram = A.T @ A + floor * np.eye(n)
        if np.linalg.cond(gram) > COND_LIMIT:
            raise NearSingular("normal equations are near singular")
        return np.linalg.solve(gram, A.T @ b)
    gram = A @ A.T + floor * np.eye(m)
    if np.linalg.cond(gram) > COND_LIMIT:
        raise NearSingular("normal equations are near singular")
    return A.T @ np.linalg.solve(gram, b)


def fd_jacobian(f: Callable[[Array], ArrayLike], x: ArrayLike, h: float = FD_STEP) -> Array:
    """Central-difference Jacobian of ``f`` at ``x``; shape ``f(x).shape + x.shape``."""
    x = np.asarray(x, dtype=float)
    f0 = np.asarray(f(x), dtype=float)
    J = np.empty(f0.shape + x.shape)
    for idx in np.ndindex(x.shape):
        dx = np.zeros_like(x)
        dx[idx] = h
        fp = np.asarray(f(x + dx), dtype=float)
        fm = np.asarray(f(x - dx), dtype=float)
        J[(...,) + idx] = (fp - fm) / (2.0 * h)
    return J


def fd_directional(f: Callable[[Array], ArrayLike], x: ArrayLike, d: ArrayLike,
                   h: float = FD_STEP) -> Array:
    """Central difference of ``f`` at ``x`` along direction ``d``."""
    x = np.asarray(x, dtype=float)
    d = np.asarray(d, dtype=float)
    return (np.asarray(f(x + h * d)) - np.asarray(f(x - h * d))) / (2.0 * h)


def richardson_jacobian(f: Callable[[Array], ArrayLike], x: ArrayLike,
                        h: float = FD_STEP) -> Array:
    """Richardson-extrapolated central difference, O(h^4) accurate.

    Used as a sanity check on :func:`fd_jacobian` itself.
    """
    J_h = fd_jacobian(f, x, h)
    J_h2 = fd_jacobian(f, x, h / 2.0)
    return (4.0 * J_h2 - J_h) / 3.0
