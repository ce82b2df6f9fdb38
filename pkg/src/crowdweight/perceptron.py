"""Single-pass perceptron, optionally fed farthest-first, with mistake-bound certificates.

Bounds evaluated for a finished run (``R`` = max example norm, ``g`` = the
smallest margin estimate, ``K = ceil(R/g) - 1``):

* classical: ``eps <= (R/g)^2 ||u||^2``
* region-based: ``sqrt(eps) <= (R||u|| + sqrt(R^2||u||^2 + eps_s K (K+1)^2 sqrt(K-1) g^2)) / (g (K+1))``
  where ``eps_s`` is the population std-dev of per-region mistake counts
* noisy, equal-mistakes case: ``eps <= 4 (Delta + R||u||)^2 / (eps_gu^2 g^2 (K+1)^2)``
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import AssumptionViolatedError


@dataclass(frozen=True)
class OnlineSequence:
    examples: np.ndarray
    labels: np.ndarray
    margin_estimates: Optional[np.ndarray] = None
    disagreements: Optional[np.ndarray] = None

    def __post_init__(self):
        X = np.asarray(self.examples, dtype=float)
        y = np.asarray(self.labels)
        if X.ndim != 2 or y.shape != (X.shape[0],):
            raise ValueError("need a T x n example matrix and T labels")
        if not np.all((y == 1) | (y == -1)):
            raise ValueError("labels must be -1 or +1")
        object.__setattr__(self, "examples", X)
        object.__setattr__(self, "labels", y.astype(int))
        for name in ("margin_estimates", "disagreements"):
            v = getattr(self, name)
            if v is not None:
                v = np.asarray(v, dtype=float)
                if v.shape != y.shape:
                    raise ValueError(f"{name} must have one entry per example")
                if np.any(v < 0):
                    raise ValueError(f"{name} must be nonnegative")
                object.__setattr__(self, name, v)

    def __len__(self):
        return self.labels.shape[0]

    @property
    def radius(self) -> float:
        return float(np.max(np.linalg.norm(self.examples, axis=1)))

    def order(self) -> np.ndarray:
        """Farthest-first order: descending margin estimate, else ascending disagreement.

        Stable, so equal keys keep their given order.
        """
        if self.margin_estimates is not None:
            return np.argsort(-self.margin_estimates, kind="stable")
        if self.disagreements is not None:
            return np.argsort(self.disagreements, kind="stable")
        raise ValueError("sorted order needs margin estimates or disagreements")

    def reordered(self, idx) -> "OnlineSequence":
        idx = np.asarray(idx)
        pick = lambda v: None if v is None else v[idx]  # noqa: E731
        return OnlineSequence(self.examples[idx], self.labels[idx],
                              pick(self.margin_estimates), pick(self.disagreements))


def run_perceptron(seq: OnlineSequence, order: str = "given") -> tuple[np.ndarray, np.ndarray]:
    """One pass; update whenever ``y <w, x> <= 0``.

    Returns the final weights and a mistake flag per example *in the
    sequence's own indexing*, whatever order the examples were fed in.
    """
    if order == "sorted":
        idx = seq.order()
    elif order == "given":
        idx = np.arange(len(seq))
    else:
        raise ValueError(f"unknown order {order!r}")
    X, y = seq.examples, seq.labels
    w = np.zeros(X.shape[1])
    mistakes = np.zeros(len(seq), dtype=bool)
    for t in idx:
        if y[t] * (w @ X[t]) <= 0:
            w = w + y[t] * X[t]
            mistakes[t] = True
    return w, mistakes


def num_regions(R: float, gamma_hat: float) -> int:
    """``ceil(R/gamma_hat) - 1``, never below 1."""
    if not gamma_hat > 0:
        raise ValueError("gamma_hat must be positive")
    return max(1, math.ceil(R / gamma_hat - 1e-12) - 1)


def partition_regions(seq: OnlineSequence, u, gamma_hat: float, K: Optional[int] = None) -> np.ndarray:
    """Region ``min(K, floor(y <u, x> / gamma_hat))`` for every example, 1-based."""
    u = np.asarray(u, dtype=float)
    if K is None:
        K = num_regions(seq.radius, gamma_hat)
    margins = seq.labels * (seq.examples @ u)
    ratio = margins / gamma_hat
    # tolerate rounding when a margin equals k * gamma_hat exactly
    ratio = np.where(np.isclose(ratio, np.round(ratio), rtol=1e-12, atol=1e-12), np.round(ratio), ratio)
    bad = np.nonzero(ratio < 1)[0]
    if bad.size:
        i = int(bad[0])
        raise AssumptionViolatedError(
            f"example {i} has margin {margins[i]:.6g} < gamma_hat={gamma_hat:.6g}", index=i
        )
    return np.minimum(K, np.floor(ratio)).astype(int)


def samuelson_bounds(r) -> tuple[float, float]:
    """``mean -+ s sqrt(n-1)`` with ``s`` the population standard deviation."""
    r = np.asarray(r, dtype=float).ravel()
    if r.size == 0:
        raise ValueError("need at least one value")
    mean = float(r.mean())
    s = float(r.std())
    half = s * math.sqrt(r.size - 1)
    return mean - half, mean + half


def novikoff_bound(R, u_norm, gamma) -> float:
    return (R / gamma) ** 2 * u_norm**2


def interactive_bound(R, u_norm, gamma_hat, K, eps_s) -> float:
    """Region-based bound on the mistake count (the square of the bound on sqrt(eps))."""
    Ru = R * u_norm
    root = (Ru + math.sqrt(Ru**2 + eps_s * K * (K + 1) ** 2 * math.sqrt(K - 1) * gamma_hat**2)) / (
        gamma_hat * (K + 1)
    )
    return root**2


def noisy_bound(R, u_norm, gamma_hat, K, eps_gamma_u, Delta) -> float:
    return 4.0 * (Delta + R * u_norm) ** 2 / (eps_gamma_u**2 * gamma_hat**2 * (K + 1) ** 2)


def noise_factors(true_margins, estimates, labels=None, examples=None, u=None):
    """Margin noise factors and label-noise deviations.

    Returns ``(eps_gamma_u, eps_gamma_l, delta, Delta)``.  ``eps_gamma_u`` is
    the smallest true/estimate ratio and ``eps_gamma_l`` the smallest
    estimate/true ratio, each clipped to (0, 1].  ``delta`` and ``Delta``
    need ``labels``, ``examples`` and ``u``; otherwise they are ``None``.
    """
    g = np.asarray(true_margins, dtype=float)
    gh = np.asarray(estimates, dtype=float)
    if np.any(gh <= 0):
        raise ValueError("margin estimates must be positive")
    if np.any(g <= 0):
        raise ValueError("true margins must be positive")
    eps_u = float(min(1.0, np.min(g / gh)))
    eps_l = float(min(1.0, np.min(gh / g)))
    if labels is None or examples is None or u is None:
        return eps_u, eps_l, None, None
    signed = np.asarray(labels) * (np.asarray(examples, dtype=float) @ np.asarray(u, dtype=float))
    delta = np.maximum(0.0, gh.min() / eps_l - signed)
    return eps_u, eps_l, delta, float(np.sqrt(np.sum(delta**2)))


@dataclass
class BoundCertificate:
    R: float
    gamma_hat: float
    K: int
    u: np.ndarray
    epsilon: int
    region_mistakes: Optional[np.ndarray] = None
    epsilon_s: Optional[float] = None
    novikoff_bound: Optional[float] = None
    interactive_bound: Optional[float] = None
    noisy_bound: Optional[float] = None
    eps_gamma_u: Optional[float] = None
    eps_gamma_l: Optional[float] = None
    Delta: Optional[float] = None
    satisfied: dict = field(default_factory=dict)

    @property
    def holds(self) -> bool:
        return all(self.satisfied.values())

    def to_dict(self) -> dict:
        def clean(v):
            if isinstance(v, np.ndarray):
                return v.tolist()
            if isinstance(v, np.generic):
                return v.item()
            return v

        return {
            "R": self.R, "gamma_hat": self.gamma_hat, "K": self.K, "u": clean(self.u),
            "epsilon": self.epsilon, "region_mistakes": clean(self.region_mistakes),
            "epsilon_s": self.epsilon_s, "novikoff_bound": self.novikoff_bound,
            "interactive_bound": self.interactive_bound, "noisy_bound": self.noisy_bound,
            "eps_gamma_u": self.eps_gamma_u, "eps_gamma_l": self.eps_gamma_l, "Delta": self.Delta,
            "satisfied": dict(self.satisfied),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


CSV_COLUMNS = ("instance", "epsilon", "epsilon_s", "K", "novikoff_bound", "interactive_bound", "noisy_bound")


def certify_bounds(seq: OnlineSequence, u, mistakes, true_margins=None) -> BoundCertificate:
    """Evaluate every applicable bound for one finished run.

    ``gamma_hat`` is the smallest margin estimate (or, without estimates, the
    smallest realized margin ``y <u, x>``).  The classical and region-based
    bounds need ``y <u, x> >= gamma_hat`` everywhere and are left ``None``
    otherwise.  The noisy bound needs ``true_margins`` and margin estimates.
    """
    u = np.asarray(u, dtype=float)
    mistakes = np.asarray(mistakes, dtype=bool)
    R = seq.radius
    u_norm = float(np.linalg.norm(u))
    realized = seq.labels * (seq.examples @ u)
    if seq.margin_estimates is not None:
        gamma_hat = float(np.min(seq.margin_estimates))
    else:
        gamma_hat = float(np.min(realized))
    eps = int(mistakes.sum())
    cert = BoundCertificate(R=R, gamma_hat=gamma_hat, K=1, u=u, epsilon=eps)
    if not gamma_hat > 0:
        return cert
    K = num_regions(R, gamma_hat)
    cert.K = K
    try:
        regions = partition_regions(seq, u, gamma_hat, K)
    except AssumptionViolatedError:
        regions = None
    if regions is not None:
        eps_k = np.bincount(regions - 1, weights=mistakes.astype(float), minlength=K)[:K].astype(int)
        eps_s = float(np.std(eps_k))
        cert.region_mistakes = eps_k
        cert.epsilon_s = eps_s
        cert.novikoff_bound = novikoff_bound(R, u_norm, gamma_hat)
        cert.interactive_bound = interactive_bound(R, u_norm, gamma_hat, K, eps_s)
        # relative slack: the bounds are compared in floating point
        cert.satisfied["novikoff"] = eps <= cert.novikoff_bound * (1 + 1e-9)
        cert.satisfied["interactive"] = eps <= cert.interactive_bound * (1 + 1e-9)
    if true_margins is not None and seq.margin_estimates is not None:
        eu, el, _, Delta = noise_factors(true_margins, seq.margin_estimates, seq.labels, seq.examples, u)
        cert.eps_gamma_u, cert.eps_gamma_l, cert.Delta = eu, el, Delta
        cert.noisy_bound = noisy_bound(R, u_norm, gamma_hat, K, eu, Delta)
        cert.satisfied["noisy"] = eps <= cert.noisy_bound * (1 + 1e-9)
    return cert


def certificate_row(instance, cert: BoundCertificate) -> list:
    return [instance, cert.epsilon, cert.epsilon_s, cert.K,
            cert.novikoff_bound, cert.interactive_bound, cert.noisy_bound]
