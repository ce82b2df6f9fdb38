"""Learning a linear model and annotator expertise from multiple noisy labels.

Two estimators share one alternating loop:

* ``baseline``: ridge fit on the expertise-weighted consensus labels, then
  ``1/z_l = mean_i (y_il - <w, x_i>)^2``.
* ``interactive``: the same loop, but every example is weighted by
  ``g(d_i) = 1 / (1 + exp(alpha * d_i))`` where ``d_i`` measures annotator
  disagreement on example ``i``.  The weights are fixed for the whole run.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Literal

import numpy as np

from . import wls
from .dataset import MultiLabelDataset, majority_vote

RESIDUAL_FLOOR = 1e-12
WEIGHT_FLOOR = 1e-300


def disagreement(labels) -> np.ndarray:
    """Sum of squared label differences over unordered annotator pairs.

    Accepts one label vector or an ``m x L`` matrix (one value per row).  For
    ``k`` positive labels out of ``L`` this equals ``4 k (L - k)``.
    """
    A = np.asarray(labels)
    L = A.shape[-1]
    k = (A > 0).sum(axis=-1)
    return (4 * k * (L - k)).astype(float)


def reweight(d, alpha: float):
    """Example weight ``1/(1+exp(alpha*d))`` in (0, 0.5], floored at 1e-300."""
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    d = np.asarray(d, dtype=float)
    if np.any(d < 0):
        raise ValueError("disagreement must be nonnegative")
    g = np.maximum(np.exp(-np.logaddexp(0.0, alpha * d)), WEIGHT_FLOOR)
    return float(g) if g.ndim == 0 else g


def consensus_labels(annotator_labels, z) -> np.ndarray:
    """Expertise-weighted mean of each example's labels."""
    z = np.asarray(z, dtype=float)
    total = z.sum()
    if not total > 0:
        raise ValueError("expertise scores must have a positive sum")
    return np.asarray(annotator_labels, dtype=float) @ (z / total)


def update_expertise(residuals, weights=None) -> np.ndarray:
    """Inverse of the (optionally example-weighted) mean squared residual.

    ``residuals`` is ``m x L``: ``y_il - <w, x_i>`` for each annotator.
    """
    R = np.asarray(residuals, dtype=float)
    if R.ndim == 1:
        R = R[:, None]
    sq = R * R
    floor = RESIDUAL_FLOOR
    if weights is not None:
        weights = np.asarray(weights, dtype=float)
        sq = sq * weights[:, None]
        # weights can sit near 1e-38; scale the floor with them
        floor = RESIDUAL_FLOOR * weights.mean()
    mean = sq.sum(axis=0) / R.shape[0]
    return 1.0 / np.maximum(mean, floor)


@dataclass(frozen=True)
class InteractiveConfig:
    alpha: float = 2.0
    lam: float = 1.0
    max_iters: int = 100
    tol: float = 1e-6
    mode: Literal["baseline", "interactive"] = "interactive"

    def __post_init__(self):
        if self.mode not in ("baseline", "interactive"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.alpha < 0 or self.lam < 0:
            raise ValueError("alpha and lam must be nonnegative")


@dataclass(frozen=True)
class CrowdModel:
    w: np.ndarray
    z: np.ndarray
    y_hat: np.ndarray
    d: np.ndarray
    example_weights: np.ndarray
    trace: tuple
    alpha: float
    lam: float
    mode: str
    iterations: int
    converged: bool

    def decision_function(self, X) -> np.ndarray:
        return np.asarray(X, dtype=float) @ self.w

    def predict(self, X) -> np.ndarray:
        return np.where(self.decision_function(X) >= 0, 1, -1)

    def to_dict(self) -> dict:
        return {
            "w": self.w.tolist(),
            "z": self.z.tolist(),
            "alpha": self.alpha,
            "lambda": self.lam,
            "mode": self.mode,
            "iterations": self.iterations,
            "converged": self.converged,
            "objective_trace": list(self.trace),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def example_weights(annotator_labels, cfg: InteractiveConfig) -> tuple[np.ndarray, np.ndarray]:
    d = disagreement(annotator_labels)
    if cfg.mode == "baseline":
        return d, np.ones_like(d)
    return d, reweight(d, cfg.alpha)


def fit(ds: MultiLabelDataset, cfg: InteractiveConfig) -> CrowdModel:
    X = ds.features
    A = ds.annotator_labels.astype(float)
    d, g = example_weights(A, cfg)
    exp_weights = None if cfg.mode == "baseline" else g

    y_hat = majority_vote(A).astype(float)
    z = np.ones(A.shape[1])
    w = np.zeros(X.shape[1])
    trace = []
    converged = False
    it = 0
    for it in range(1, cfg.max_iters + 1):
        problem = wls.WlsProblem(X, y_hat, g, cfg.lam)
        w_new = wls.solve(problem)
        trace.append(problem.objective(w_new))
        f = X @ w_new
        z = update_expertise(A - f[:, None], exp_weights)
        y_hat = consensus_labels(A, z)
        # w itself can be ~1e-38 when every weight is tiny, so no absolute guard
        scale = max(np.linalg.norm(w_new), np.finfo(float).tiny)
        change = np.linalg.norm(w_new - w) / scale
        w = w_new
        if it > 1 and change < cfg.tol:
            converged = True
            break
    return CrowdModel(
        w=w, z=z, y_hat=y_hat, d=d, example_weights=g, trace=tuple(trace),
        alpha=cfg.alpha, lam=cfg.lam, mode=cfg.mode, iterations=it, converged=converged,
    )
