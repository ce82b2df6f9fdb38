"""Paired interactive-vs-baseline experiments on synthetic and LibSVM data."""

from __future__ import annotations

import csv
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import crowd, simulate, stats
from .dataset import (
    MultiLabelDataset,
    SplitSpec,
    densify,
    kfold_indices,
    load_libsvm,
    majority_vote,
    minmax_scale,
    split_indices,
)
from .errors import ReplicateError

log = logging.getLogger(__name__)

DEFAULT_LAMBDA_GRID = tuple(2.0**k for k in range(-14, 15, 2))
METRICS = ("au_roc", "au_prc")


@dataclass(frozen=True)
class ExperimentPlan:
    replicates: int = 100
    alpha_grid: tuple = (2.0,)
    p_grid: tuple = (1.0,)
    lambda_grid: tuple = DEFAULT_LAMBDA_GRID
    folds: int = 10
    seed: int = 0
    dataset_source: str = "gaussian_synthetic"
    libsvm_path: Optional[str] = None
    train_fraction: Optional[float] = None
    num_noisy: int = 10
    cv_target: str = "majority"
    scale_features: bool = False
    add_bias: Optional[bool] = None
    balance_classes: bool = False
    score_lambda: float = 1e-6
    max_iters: int = 100
    tol: float = 1e-6
    jobs: int = 1

    def __post_init__(self):
        if self.replicates < 1:
            raise ValueError("replicates must be at least 1")
        if not self.alpha_grid or not self.p_grid or not self.lambda_grid:
            raise ValueError("parameter grids must be nonempty")
        if self.folds < 2:
            raise ValueError("cross-validation needs at least 2 folds")
        if self.dataset_source not in ("gaussian_synthetic", "libsvm_path"):
            raise ValueError(f"unknown dataset_source {self.dataset_source!r}")
        if self.dataset_source == "libsvm_path" and not self.libsvm_path:
            raise ValueError("libsvm_path is required for LibSVM experiments")
        if self.cv_target not in ("majority", "true"):
            raise ValueError("cv_target must be 'majority' or 'true'")
        for name in ("alpha_grid", "p_grid", "lambda_grid"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))

    @property
    def effective_train_fraction(self) -> float:
        if self.train_fraction is not None:
            return self.train_fraction
        return 0.5 if self.dataset_source == "gaussian_synthetic" else 0.75

    @property
    def effective_add_bias(self) -> bool:
        if self.add_bias is not None:
            return self.add_bias
        return self.dataset_source == "libsvm_path"


def _replicate_rng(seed: int, replicate: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(replicate)])


def _child_seed(rng: np.random.Generator) -> int:
    return int(rng.integers(0, 2**63))


def gen_gaussian_dataset(seed, m: int = 1000, n: int = 10, center: float = 0.5):
    """Two unit-variance Gaussians at ``-center`` and ``+center``, ``m/2`` each.

    Returns ``(X, y)``; rows are class-sorted (callers shuffle via splits).
    """
    rng = np.random.default_rng(seed)
    half = m // 2
    X = np.vstack([
        rng.normal(-center, 1.0, size=(half, n)),
        rng.normal(center, 1.0, size=(m - half, n)),
    ])
    y = np.r_[-np.ones(half, dtype=np.int8), np.ones(m - half, dtype=np.int8)]
    return X, y


def _cv_labels(ds: MultiLabelDataset, target: str) -> np.ndarray:
    if target == "true":
        if ds.true_labels is None:
            raise ValueError("cv_target='true' needs ground-truth labels")
        return ds.true_labels
    return majority_vote(ds.annotator_labels)


def cv_scores(train: MultiLabelDataset, cfg: crowd.InteractiveConfig, lambda_grid,
              folds: int, seed: int, target: str = "majority") -> np.ndarray:
    """Mean validation AU-ROC per grid value; single-class folds are skipped."""
    fold_sets = kfold_indices(train.num_examples, folds, seed)
    target_labels = _cv_labels(train, target)
    all_idx = np.arange(train.num_examples)
    # weights depend only on the annotator labels, so compute them once per fold
    out = np.full(len(lambda_grid), np.nan)
    per_fold = [[] for _ in lambda_grid]
    for val in fold_sets:
        y_val = target_labels[val]
        if np.all(y_val == y_val[0]):
            continue
        tr = train.subset(np.setdiff1d(all_idx, val, assume_unique=True))
        X_val = train.features[val]
        for j, lam in enumerate(lambda_grid):
            model = crowd.fit(tr, replace(cfg, lam=float(lam)))
            per_fold[j].append(stats.au_roc(X_val @ model.w, y_val))
    for j, vals in enumerate(per_fold):
        if vals:
            out[j] = float(np.mean(vals))
    return out


def tune_lambda(train: MultiLabelDataset, cfg: crowd.InteractiveConfig, lambda_grid=DEFAULT_LAMBDA_GRID,
                folds: int = 10, seed: int = 0, target: str = "majority") -> tuple[float, crowd.CrowdModel]:
    """Pick the grid value with the best mean validation AU-ROC and refit.

    Ties resolve to the smaller lambda.  Returns ``(lam, model)`` where the
    model is trained on the whole of ``train``.
    """
    grid = sorted(set(float(v) for v in lambda_grid))
    if len(grid) == 1:
        best = grid[0]
    else:
        scores = cv_scores(train, cfg, grid, folds, seed, target)
        if np.all(np.isnan(scores)):
            best = grid[0]
        else:
            best = grid[int(np.nanargmax(scores))]
    return best, crowd.fit(train, replace(cfg, lam=best))


def _load_source(plan: ExperimentPlan, rng):
    if plan.dataset_source == "gaussian_synthetic":
        return gen_gaussian_dataset(_child_seed(rng))
    X, y = load_libsvm(plan.libsvm_path)
    return densify(X), y


def _balance(idx, y, rng):
    pos = idx[y[idx] == 1]
    neg = idx[y[idx] == -1]
    k = min(pos.size, neg.size)
    keep = np.r_[rng.choice(pos, k, replace=False), rng.choice(neg, k, replace=False)]
    return np.sort(keep)


def prepare_replicate(plan: ExperimentPlan, replicate: int, p: float):
    """Simulate annotators on the full dataset, then split.

    Returns ``(train, X_test, y_test, cv_seed)``; the test side keeps only
    true labels.
    """
    rng = _replicate_rng(plan.seed, replicate)
    X, y = _load_source(plan, rng)
    if plan.scale_features:
        X, _, _ = minmax_scale(X)
    if plan.effective_add_bias:
        X = np.hstack([X, np.ones((X.shape[0], 1))])
    base = simulate.base_scores(X, y, plan.score_lambda)
    spec = simulate.SimulationSpec(p=p, num_noisy=plan.num_noisy, seed=_child_seed(rng))
    full = simulate.simulate_labels(X, base, spec, true_labels=y)
    tr_idx, te_idx = split_indices(
        X.shape[0], SplitSpec(plan.effective_train_fraction, plan.folds, _child_seed(rng))
    )
    if plan.balance_classes:
        tr_idx = _balance(tr_idx, y, rng)
    return full.subset(tr_idx), X[te_idx], y[te_idx], _child_seed(rng)


def run_replicate(plan: ExperimentPlan, replicate: int, alpha: float, p: float) -> dict:
    train, X_te, y_te, cv_seed = prepare_replicate(plan, replicate, p)
    row = {"replicate": replicate, "alpha": alpha, "p": p}
    for mode in ("interactive", "baseline"):
        cfg = crowd.InteractiveConfig(alpha=alpha, lam=1.0, max_iters=plan.max_iters,
                                      tol=plan.tol, mode=mode)
        lam, model = tune_lambda(train, cfg, plan.lambda_grid, plan.folds, cv_seed, plan.cv_target)
        s = model.decision_function(X_te)
        row[f"{mode}_lambda"] = lam
        row[f"{mode}_au_roc"] = stats.au_roc(s, y_te)
        row[f"{mode}_au_prc"] = stats.au_prc(s, y_te)
    return row


def _run_one(args):
    plan, replicate, alpha, p = args
    try:
        return run_replicate(plan, replicate, alpha, p)
    except Exception as exc:  # noqa: BLE001 - rewrapped with the replicate index
        raise ReplicateError(replicate, exc) from exc


def summarize(rows: list[dict]) -> dict:
    out = {}
    for metric in METRICS:
        a = np.array([r[f"interactive_{metric}"] for r in rows])
        b = np.array([r[f"baseline_{metric}"] for r in rows])
        entry = {
            "wins": stats.win_count(a, b),
            "losses": stats.win_count(b, a),
            "n": len(rows),
            "mean_interactive": float(a.mean()),
            "mean_baseline": float(b.mean()),
            "p_value": None,
        }
        if len(rows) >= 5:
            try:
                entry["p_value"] = stats.wilcoxon_signed_rank(a, b)[1]
            except stats.InsufficientDataError:
                entry["p_value"] = 1.0
        out[metric] = entry
    return out


@dataclass
class ExperimentReport:
    config: dict
    settings: list = field(default_factory=list)
    wall_clock_seconds: float = 0.0

    def to_dict(self) -> dict:
        return {"config": self.config, "settings": self.settings,
                "wall_clock_seconds": self.wall_clock_seconds}

    def write(self, out_dir) -> tuple[Path, Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        jpath = out_dir / "report.json"
        cpath = out_dir / "replicates.csv"
        jpath.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        cols = ["alpha", "p", "replicate"] + [
            f"{mode}_{k}" for mode in ("interactive", "baseline") for k in ("lambda",) + METRICS
        ]
        with open(cpath, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for s in self.settings:
                for r in s["replicates"]:
                    w.writerow([repr(r[c]) if isinstance(r[c], float) else r[c] for c in cols])
        return jpath, cpath


REPORT_SCHEMA = {
    "type": "object",
    "required": ["config", "settings", "wall_clock_seconds"],
    "properties": {
        "config": {"type": "object"},
        "wall_clock_seconds": {"type": "number", "minimum": 0},
        "settings": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["alpha", "p", "replicates", "summary"],
                "properties": {
                    "alpha": {"type": "number"},
                    "p": {"type": "number"},
                    "replicates": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "required": ["replicate", "interactive_au_roc", "baseline_au_roc",
                                         "interactive_au_prc", "baseline_au_prc"],
                        },
                    },
                    "summary": {
                        "type": "object",
                        "required": list(METRICS),
                        "additionalProperties": {
                            "type": "object",
                            "required": ["wins", "n", "p_value"],
                            "properties": {
                                "wins": {"type": "integer", "minimum": 0},
                                "n": {"type": "integer", "minimum": 1},
                                "p_value": {"type": ["number", "null"], "minimum": 0, "maximum": 1},
                            },
                        },
                    },
                },
            },
        },
    },
}


def run_paired_experiment(plan: ExperimentPlan) -> ExperimentReport:
    """Every (alpha, p) setting over ``plan.replicates`` paired replicates.

    Both modes of a replicate share the same split and noisy labels; a
    replicate's data depend only on ``(seed, replicate, p)``.
    """
    start = time.perf_counter()
    config = asdict(plan)
    config["lambda_grid"] = list(plan.lambda_grid)
    config["alpha_grid"] = list(plan.alpha_grid)
    config["p_grid"] = list(plan.p_grid)
    report = ExperimentReport(config=config)
    for p in plan.p_grid:
        for alpha in plan.alpha_grid:
            tasks = [(plan, r, alpha, p) for r in range(plan.replicates)]
            if plan.jobs > 1 and len(tasks) > 1:
                with ProcessPoolExecutor(max_workers=plan.jobs) as pool:
                    rows = list(pool.map(_run_one, tasks))
            else:
                rows = [_run_one(t) for t in tasks]
            rows.sort(key=lambda r: r["replicate"])
            summary = summarize(rows)
            log.info("alpha=%g p=%g roc wins=%d/%d p=%s", alpha, p,
                     summary["au_roc"]["wins"], len(rows), summary["au_roc"]["p_value"])
            report.settings.append({"alpha": alpha, "p": p, "replicates": rows, "summary": summary})
    report.wall_clock_seconds = time.perf_counter() - start
    return report
