"""Simulated annotators whose noise grows near the decision boundary.

Each example's base score ``f`` (a linear model's output rescaled into
[-1, 1]) is mapped to ``ft = 2 (1 - 1/(1 + exp(-2.5 p |f|)))``.  Every noisy
annotator copies the true label and flips it with probability ``ft/2``; then,
when a strict majority of the noisy labels still equals the truth, all of
them are flipped together with probability ``ft``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import wls
from .dataset import MultiLabelDataset


@dataclass(frozen=True)
class SimulationSpec:
    p: float = 1.0
    num_noisy: int = 10
    include_perfect: bool = True
    include_adversarial: bool = True
    seed: int = 0

    def __post_init__(self):
        if not self.p > 0:
            raise ValueError("noise parameter p must be positive")
        if self.num_noisy < 0:
            raise ValueError("num_noisy must be nonnegative")
        if self.num_annotators < 1:
            raise ValueError("simulation needs at least one annotator")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @property
    def num_annotators(self) -> int:
        return self.num_noisy + int(self.include_perfect) + int(self.include_adversarial)

    def roles(self) -> list[str]:
        """Column roles in output order: noisy annotators, then perfect, then adversarial."""
        out = ["noisy"] * self.num_noisy
        if self.include_perfect:
            out.append("perfect")
        if self.include_adversarial:
            out.append("adversarial")
        return out


def normalize_scores(f) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.size == 0:
        raise ValueError("scores must be nonempty")
    top = np.max(np.abs(f))
    return f / top if top > 0 else f.copy()


def flip_probability_score(f, p: float):
    """Map a normalized score to the flip score ``ft`` in [0, 1]; ``ft(0) = 1``."""
    a = 2.5 * p * np.abs(np.asarray(f, dtype=float))
    # 2 * (1 - sigmoid(a)) written via logaddexp for stability
    out = 2.0 * np.exp(-np.logaddexp(0.0, a))
    return float(out) if out.ndim == 0 else out


def base_scores(X, y, lam: float = 1e-6) -> np.ndarray:
    """Normalized scores of a ridge model fit to the true labels."""
    X = np.asarray(X, dtype=float)
    w = wls.ridge(X, np.asarray(y, dtype=float), lam)
    return normalize_scores(X @ w)


def simulate_noisy_labels(true_labels, scores, p, num_noisy, rng) -> np.ndarray:
    """The ``m x num_noisy`` block of simulated annotator labels."""
    y = np.asarray(true_labels, dtype=np.int8)
    m = y.shape[0]
    ft = flip_probability_score(scores, p)
    labels = np.repeat(y[:, None], num_noisy, axis=1)
    if num_noisy == 0:
        return labels
    flips = rng.random((m, num_noisy)) < (ft / 2.0)[:, None]
    labels[flips] *= -1
    agree = (labels == y[:, None]).sum(axis=1)
    # 5-5 ties are not a majority for the truth, so no mass flip
    majority_true = 2 * agree > num_noisy
    mass = rng.random(m) < ft
    labels[majority_true & mass] *= -1
    return labels


def simulate_labels(ds_or_features, base, spec: SimulationSpec, true_labels=None) -> MultiLabelDataset:
    """Attach simulated annotator labels to a dataset with known ground truth.

    ``ds_or_features`` is a :class:`MultiLabelDataset` with true labels, or a
    feature matrix together with ``true_labels``.
    """
    if isinstance(ds_or_features, MultiLabelDataset):
        X = ds_or_features.features
        y = ds_or_features.true_labels if true_labels is None else true_labels
    else:
        X = ds_or_features
        y = true_labels
    if y is None:
        raise ValueError("simulation requires true labels")
    y = np.asarray(y, dtype=np.int8)
    base = np.asarray(base, dtype=float)
    if base.shape != y.shape:
        raise ValueError("need one base score per example")
    if np.any(np.abs(base) > 1 + 1e-12):
        raise ValueError("base scores must be normalized to [-1, 1]")
    rng = np.random.default_rng(int(spec.seed))
    cols = [simulate_noisy_labels(y, base, spec.p, spec.num_noisy, rng)]
    if spec.include_perfect:
        cols.append(y[:, None])
    if spec.include_adversarial:
        cols.append(-y[:, None])
    return MultiLabelDataset(X, np.hstack(cols), y)
