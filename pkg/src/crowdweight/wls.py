"""Closed-form weighted ridge regression.

Solves ``w = (X^T D X + lam I)^{-1} X^T D y`` with ``D = diag(weights)``.
The objective minimized is the unnormalized
``sum_i weights_i (<w, x_i> - y_i)^2 + lam ||w||^2``; any ``1/m`` factor is
folded into ``lam`` by the caller.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import SingularMatrixError

COND_WARN = 1e12


class IllConditionedWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class WlsProblem:
    X: np.ndarray
    y: np.ndarray
    weights: np.ndarray
    lam: float = 0.0

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if X.ndim != 2:
            raise ValueError("X must be 2-D")
        if y.shape != (X.shape[0],) or w.shape != (X.shape[0],):
            raise ValueError("y and weights must have one entry per row of X")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and nonnegative")
        if not self.lam >= 0:
            raise ValueError("lam must be nonnegative")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "lam", float(self.lam))

    def objective(self, w) -> float:
        r = self.X @ w - self.y
        return float(np.dot(self.weights, r * r) + self.lam * np.dot(w, w))


def _solve_normal(G, b, lam):
    n = G.shape[0]
    A = G + lam * np.eye(n)
    if lam == 0.0:
        warnings.warn("solving with lam=0; no regularization", IllConditionedWarning, stacklevel=3)
    try:
        c, low = scipy.linalg.cho_factor(A, check_finite=False)
        sol = scipy.linalg.cho_solve((c, low), b, check_finite=False)
    except np.linalg.LinAlgError:
        sol = None
    cond = np.linalg.cond(A) if n <= 300 else None
    if cond is not None and not np.isfinite(cond):
        raise SingularMatrixError("normal equations are singular")
    if cond is not None and cond > COND_WARN:
        if lam == 0.0 and cond > 1e15:
            raise SingularMatrixError(f"normal equations are singular (cond={cond:.3g})")
        warnings.warn(f"condition number {cond:.3g}", IllConditionedWarning, stacklevel=3)
    if sol is None:
        # Cholesky failed on a PSD-but-not-PD system: pivoted LU instead.
        try:
            sol = scipy.linalg.solve(A, b, assume_a="sym", check_finite=False)
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgWarning) as exc:
            raise SingularMatrixError(str(exc)) from None
    return sol


def solve(p: WlsProblem) -> np.ndarray:
    Xw = p.X * p.weights[:, None]
    return _solve_normal(p.X.T @ Xw, Xw.T @ p.y, p.lam)


def ridge(X, y, lam) -> np.ndarray:
    """Ordinary (unweighted) ridge regression."""
    X = np.asarray(X, dtype=float)
    return _solve_normal(X.T @ X, X.T @ np.asarray(y, dtype=float), float(lam))


def solve_by_rescaling(p: WlsProblem) -> np.ndarray:
    """Same solution as :func:`solve`, via ``X <- sqrt(D) X, y <- sqrt(D) y``."""
    s = np.sqrt(p.weights)
    return ridge(p.X * s[:, None], p.y * s, p.lam)
