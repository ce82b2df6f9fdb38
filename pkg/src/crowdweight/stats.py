"""Ranking metrics and the paired significance test used to compare modes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import norm, rankdata

from .errors import InsufficientDataError


@dataclass(frozen=True)
class ScoredPredictions:
    scores: np.ndarray
    truth: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.scores, dtype=float).ravel()
        t = np.asarray(self.truth).ravel()
        if s.shape != t.shape:
            raise ValueError("scores and truth must have equal length")
        if not np.all((t == 1) | (t == -1)):
            raise ValueError("truth must be -1 or +1")
        object.__setattr__(self, "scores", s)
        object.__setattr__(self, "truth", t)


def _as_pred(scores, truth):
    if isinstance(scores, ScoredPredictions):
        return scores
    return ScoredPredictions(scores, truth)


def au_roc(scores, truth=None) -> float:
    """Mann-Whitney AUC with midranks: P(pos > neg) + P(tie)/2."""
    p = _as_pred(scores, truth)
    pos = p.truth == 1
    n_pos = int(pos.sum())
    n_neg = p.truth.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AU-ROC needs both classes")
    ranks = rankdata(p.scores)
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def au_prc(scores, truth=None) -> float:
    """Area under the step-wise precision-recall curve.

    Thresholds sweep the distinct scores from high to low; tied scores enter
    as one block.  Each recall increment is weighted by the precision at the
    end of its block.
    """
    p = _as_pred(scores, truth)
    pos = (p.truth == 1).astype(float)
    n_pos = pos.sum()
    if n_pos == 0:
        raise ValueError("AU-PRC needs at least one positive")
    order = np.argsort(-p.scores, kind="mergesort")
    s = p.scores[order]
    tp = np.cumsum(pos[order])
    last = np.r_[np.nonzero(np.diff(s))[0], s.size - 1]
    tp = tp[last]
    seen = last + 1.0
    precision = tp / seen
    recall_step = np.diff(np.r_[0.0, tp]) / n_pos
    return float(np.sum(recall_step * precision))


def wilcoxon_signed_rank(a, b, min_pairs: int = 5) -> tuple[float, float]:
    """Two-sided Wilcoxon signed-rank test, normal approximation.

    Zero differences are dropped, ties get midranks, the variance is
    tie-corrected and a 0.5 continuity correction is applied.  Returns
    ``(W+, p)``.
    """
    diff = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    diff = diff[diff != 0]
    n = diff.size
    if n < min_pairs:
        raise InsufficientDataError(f"only {n} nonzero differences (need {min_pairs})")
    ranks = rankdata(np.abs(diff))
    w_plus = float(ranks[diff > 0].sum())
    mean = n * (n + 1) / 4.0
    _, counts = np.unique(ranks, return_counts=True)
    var = n * (n + 1) * (2 * n + 1) / 24.0 - np.sum(counts**3 - counts) / 48.0
    if var <= 0:
        return w_plus, 1.0
    dev = abs(w_plus - mean)
    z = max(dev - 0.5, 0.0) / np.sqrt(var)
    p = float(min(1.0, 2.0 * norm.sf(z)))
    return w_plus, p


def win_count(a, b) -> int:
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError("inputs must have equal length")
    return int(np.sum(a > b))
