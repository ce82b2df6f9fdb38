"""Per-example margin estimates from annotator agreement.

Pipeline: align annotators to a centered linear kernel to get expertise
``z`` in [0, 1]; take the sign of the ``z``-weighted vote as the consensus
label; fit each annotator a neighbourhood radius; then, for each example, walk
the annotators from the smallest radius upward and report the radius of the
first one whose label disagrees with the consensus.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.spatial.distance import pdist, squareform

from .dataset import MultiLabelDataset


def centered_kernel(X) -> np.ndarray:
    """Linear kernel of column-centered rows, scaled so entries lie in [-1, 1]."""
    Xc = _centered_scaled(X)
    return Xc @ Xc.T


def _centered_scaled(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    Xc = X - X.mean(axis=0)
    top = np.max(np.linalg.norm(Xc, axis=1))
    return Xc / top if top > 0 else Xc


# ---------------------------------------------------------------------------
# expertise by kernel-target alignment
#
# F(z) = (1/m^2) sum_ij (k_ij - (1/L) sum_l z_l y_il y_jl)^2
#      = c - 2 b.z + z.G z,   G_ll' = (y_l . y_l')^2 / (L m)^2,   b_l = y_l' K y_l / (L m^2)
# The 1/m^2 scaling leaves the minimizer unchanged and keeps gradients O(1).

@dataclass(frozen=True)
class ExpertiseFit:
    z: np.ndarray
    objective_trace: tuple
    iterations: int
    converged: bool


def _quadratic_from_kernel(K, Y):
    m, L = Y.shape
    b = np.einsum("il,ij,jl->l", Y, K, Y) / (L * m * m)
    c = float(np.sum(K * K)) / (m * m)
    return c, b


def _quadratic_from_features(X, Y):
    m, L = Y.shape
    Xc = _centered_scaled(X)
    proj = Xc.T @ Y
    b = np.sum(proj * proj, axis=0) / (L * m * m)
    gram = Xc.T @ Xc
    c = float(np.sum(gram * gram)) / (m * m)
    return c, b


def _label_gram(Y):
    m, L = Y.shape
    inner = Y.T @ Y
    return inner * inner / (L * m) ** 2


def _power_iteration(G, iters=200, seed=0):
    v = np.random.default_rng(seed).random(G.shape[0]) + 0.1
    lam = 0.0
    for _ in range(iters):
        gv = G @ v
        norm = np.linalg.norm(gv)
        if norm == 0:
            return 0.0
        v = gv / norm
        new = float(v @ G @ v)
        if abs(new - lam) <= 1e-12 * max(new, 1e-300):
            return new
        lam = new
    return lam


def _pgd(G, b, c, z0, tol, max_iter):
    lip = 2.0 * _power_iteration(G)
    # 1.01 guards against the power estimate landing just under the top eigenvalue
    step = 1.0 / (1.01 * lip) if lip > 0 else 1.0
    obj = lambda z: c - 2.0 * b @ z + z @ G @ z  # noqa: E731
    z = np.clip(z0, 0.0, 1.0)
    trace = [obj(z)]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        grad = 2.0 * (G @ z - b)
        z_new = np.clip(z - step * grad, 0.0, 1.0)
        pg = np.linalg.norm(z_new - z) / step
        z = z_new
        trace.append(obj(z))
        if pg < tol:
            converged = True
            break
    return ExpertiseFit(z, tuple(trace), it, converged)


def fit_expertise(labels, K=None, X=None, tol: float = 1e-6, max_iter: int = 10_000, z0=None) -> ExpertiseFit:
    """Box-constrained kernel-target alignment by projected gradient descent.

    Pass the kernel ``K`` directly, or features ``X`` to use the centered
    linear kernel without forming the ``m x m`` matrix.
    """
    Y = np.asarray(labels, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if (K is None) == (X is None):
        raise ValueError("pass exactly one of K or X")
    c, b = _quadratic_from_kernel(np.asarray(K, dtype=float), Y) if K is not None else _quadratic_from_features(X, Y)
    G = _label_gram(Y)
    z0 = np.full(Y.shape[1], 0.5) if z0 is None else np.asarray(z0, dtype=float)
    return _pgd(G, b, c, z0, tol, max_iter)


def estimate_expertise(K, labels, **kw) -> np.ndarray:
    return fit_expertise(labels, K=K, **kw).z


def expertise_objective(K, labels, z) -> float:
    """Direct O(m^2 L) evaluation of the alignment loss (unscaled sum)."""
    Y = np.asarray(labels, dtype=float)
    L = Y.shape[1]
    target = (Y * np.asarray(z)) @ Y.T / L
    return float(np.sum((np.asarray(K) - target) ** 2))


# ---------------------------------------------------------------------------
# consensus, radii, margins

def consensus_sign(labels, z) -> np.ndarray:
    """Sign of the z-weighted vote; exact ties go to +1."""
    z = np.asarray(z, dtype=float)
    if not np.any(z != 0):
        raise ValueError("expertise scores are all zero")
    s = np.asarray(labels, dtype=float) @ z
    return np.where(s >= 0, 1, -1).astype(np.int8)


def _radius_objectives(D, y_hat, Y, candidates, chunk=4096):
    """Objective per (candidate radius, annotator): sum_i (ball mean - y_il)^2."""
    m = D.shape[0]
    order = np.argsort(D, axis=1, kind="stable")
    sorted_d = np.take_along_axis(D, order, axis=1)
    csum = np.cumsum(y_hat[order], axis=1)
    # sum_i (mu_i - y_il)^2 = sum mu^2 - 2 mu.y_l + m   (labels are ±1)
    out = np.empty((candidates.size, Y.shape[1]))
    for start in range(0, candidates.size, chunk):
        cand = candidates[start:start + chunk]
        mu = np.empty((cand.size, m))
        for i in range(m):
            cnt = np.searchsorted(sorted_d[i], cand, side="right")
            mu[:, i] = csum[i, cnt - 1] / cnt
        out[start:start + chunk] = (mu * mu).sum(axis=1)[:, None] - 2.0 * mu @ Y + m
    return out


def radius_candidates(X) -> tuple[np.ndarray, np.ndarray]:
    """Pairwise Euclidean distance matrix and the sorted candidate radii."""
    X = np.asarray(X, dtype=float)
    cond = pdist(X)
    return squareform(cond), np.unique(np.r_[0.0, cond])


def _argmin_smallest(values, candidates):
    best = values.min()
    tie = np.abs(values - best) <= 1e-9 * max(1.0, abs(best))
    return float(candidates[np.argmax(tie)])


def estimate_radii(X, y_hat, labels, return_objectives: bool = False):
    """Best ball radius for every annotator (smallest radius among ties)."""
    D, cand = radius_candidates(X)
    Y = np.asarray(labels, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    obj = _radius_objectives(D, np.asarray(y_hat, dtype=float), Y, cand)
    radii = np.array([_argmin_smallest(obj[:, l], cand) for l in range(Y.shape[1])])
    if return_objectives:
        return radii, cand, obj
    return radii


def estimate_radius(X, y_hat, labels, annotator_index: int) -> float:
    col = np.asarray(labels)[:, annotator_index]
    return float(estimate_radii(X, y_hat, col[:, None])[0])


def radius_objective(X, y_hat, annotator_labels, r) -> float:
    """Direct evaluation of the radius objective at one ``r``."""
    X = np.asarray(X, dtype=float)
    y_hat = np.asarray(y_hat, dtype=float)
    total = 0.0
    for i in range(X.shape[0]):
        inside = np.linalg.norm(X - X[i], axis=1) <= r
        total += (y_hat[inside].mean() - annotator_labels[i]) ** 2
    return float(total)


def margin_lower_bound(labels_row, y_hat_i, radii) -> float:
    radii = np.asarray(radii, dtype=float)
    labels_row = np.asarray(labels_row)
    for l in np.argsort(radii, kind="stable"):
        if labels_row[l] != y_hat_i:
            return float(radii[l])
    return float(radii.max())


def margin_lower_bounds(labels, y_hat, radii) -> np.ndarray:
    labels = np.asarray(labels)
    return np.array([margin_lower_bound(labels[i], y_hat[i], radii) for i in range(labels.shape[0])])


@dataclass(frozen=True)
class MarginEstimate:
    expertise: np.ndarray
    consensus: np.ndarray
    radii: np.ndarray
    margin_lb: np.ndarray
    converged: Optional[bool] = None

    def to_dict(self) -> dict:
        return {
            "z": self.expertise.tolist(),
            "consensus": [int(v) for v in self.consensus],
            "radii": self.radii.tolist(),
            "margins": self.margin_lb.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "MarginEstimate":
        return cls(np.asarray(d["z"], dtype=float), np.asarray(d["consensus"], dtype=np.int8),
                   np.asarray(d["radii"], dtype=float), np.asarray(d["margins"], dtype=float))


def estimate_margins(ds: MultiLabelDataset, tol: float = 1e-6, max_iter: int = 10_000) -> MarginEstimate:
    fit = fit_expertise(ds.annotator_labels, X=ds.features, tol=tol, max_iter=max_iter)
    z = fit.z
    if not np.any(z > 0):
        # every annotator anti-aligned with the kernel: fall back to a plain vote
        z = np.ones_like(z)
    y_hat = consensus_sign(ds.annotator_labels, z)
    radii = estimate_radii(ds.features, y_hat, ds.annotator_labels)
    gamma = margin_lower_bounds(ds.annotator_labels, y_hat, radii)
    return MarginEstimate(fit.z, y_hat, radii, gamma, fit.converged)
