"""``crowdweight`` command line.

Every subcommand prints exactly one JSON line on stdout (including the fully
resolved configuration) and writes human-readable summaries to stderr.
Exit codes: 0 success, 1 I/O or data error, 2 bad flags.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import crowd, harness, margin, perceptron, simulate, stats, wls
from .dataset import (
    MultiLabelDataset,
    densify,
    load_libsvm,
    majority_vote,
    read_csv,
    write_csv,
)
from .errors import CrowdweightError

log = logging.getLogger("crowdweight")

SEED_ENV = "CROWDWEIGHT_SEED"


class UsageError(Exception):
    """Bad flag values detected after parsing (exit code 2)."""


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw == "":
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def _seed_type(text):
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return v


def _float_list(text):
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _emit(summary: dict) -> None:
    sys.stdout.write(json.dumps(summary, sort_keys=True, default=_json_default) + "\n")
    sys.stdout.flush()


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(type(o).__name__)


def _note(msg: str) -> None:
    print(msg, file=sys.stderr)


def _resolved(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "config")}


# ---------------------------------------------------------------------------
# subcommands

def cmd_simulate(args) -> dict:
    if args.gaussian:
        X, y = harness.gen_gaussian_dataset(args.seed)
    else:
        path = Path(args.input)
        if path.suffix.lower() == ".csv":
            src = read_csv(path)
            if src.true_labels is None:
                raise CrowdweightError("input CSV has no y_true column values")
            X, y = src.features, src.true_labels
        else:
            Xs, y = load_libsvm(path)
            X = densify(Xs)
    base = simulate.base_scores(X, y, args.score_lambda)
    spec = simulate.SimulationSpec(
        p=args.p, num_noisy=args.annotators, include_perfect=not args.no_perfect,
        include_adversarial=not args.no_adversarial, seed=args.seed,
    )
    ds = simulate.simulate_labels(X, base, spec, true_labels=y)
    write_csv(ds, args.out)
    d = crowd.disagreement(ds.annotator_labels)
    values, counts = np.unique(d, return_counts=True)
    _note(f"{ds.num_examples} examples, {ds.num_annotators} annotators -> {args.out}")
    _note("disagreement  count")
    for v, c in zip(values, counts):
        _note(f"{v:12g}  {c}")
    return {
        "command": "simulate", "out": str(args.out), "examples": ds.num_examples,
        "annotators": ds.num_annotators, "roles": spec.roles(),
        "disagreement": {"mean": float(d.mean()), "min": float(d.min()), "max": float(d.max()),
                         "histogram": {str(float(v)): int(c) for v, c in zip(values, counts)}},
    }


def cmd_train(args) -> dict:
    ds = read_csv(args.data)
    cfg = crowd.InteractiveConfig(alpha=args.alpha, lam=args.lam if args.lam is not None else 1.0,
                                  max_iters=args.max_iters, tol=args.tol, mode=args.mode)
    if args.tune:
        lam, model = harness.tune_lambda(ds, cfg, args.lambda_grid or harness.DEFAULT_LAMBDA_GRID,
                                         args.folds, args.seed, args.cv_target)
    else:
        model = crowd.fit(ds, cfg)
    out = {"command": "train", "mode": model.mode, "lambda": model.lam, "alpha": model.alpha,
           "iterations": model.iterations, "converged": model.converged}
    if args.out:
        Path(args.out).write_text(model.to_json() + "\n", encoding="utf-8")
        out["out"] = str(args.out)
    if ds.true_labels is not None and len(np.unique(ds.true_labels)) == 2:
        s = model.decision_function(ds.features)
        out["au_roc"] = stats.au_roc(s, ds.true_labels)
        out["au_prc"] = stats.au_prc(s, ds.true_labels)
        _note(f"AU-ROC {out['au_roc']:.4f}  AU-PRC {out['au_prc']:.4f}")
    _note(f"{model.mode}: lambda={model.lam:g} iterations={model.iterations}")
    return out


def _perceptron_inputs(ds: MultiLabelDataset, margins_path):
    est = None
    if margins_path:
        est = margin.MarginEstimate.from_dict(json.loads(Path(margins_path).read_text(encoding="utf-8")))
        if est.consensus.shape[0] != ds.num_examples:
            raise CrowdweightError("margin file does not match the dataset size")
        labels = est.consensus.astype(int)
    else:
        labels = majority_vote(ds.annotator_labels).astype(int)
    reference = ds.true_labels if ds.true_labels is not None else labels
    u = wls.ridge(ds.features, reference.astype(float), 1e-6)
    norm = np.linalg.norm(u)
    u = u / norm if norm > 0 else u
    return labels, u, est


def cmd_perceptron(args) -> dict:
    ds = read_csv(args.data)
    labels, u, est = _perceptron_inputs(ds, args.margins)
    X = ds.features
    realized = labels * (X @ u)
    separable = bool(np.all(realized > 0))
    true_margins = None
    if est is not None:
        gamma_est = est.margin_lb
        if np.any(gamma_est <= 0):
            _note("margin file has non-positive margins; falling back to disagreement order")
            gamma_est = None
        elif ds.true_labels is not None:
            tm = np.abs(X @ u)
            true_margins = tm if np.all(tm > 0) else None
    else:
        gamma_est = realized if separable else None
    base = perceptron.OnlineSequence(X, labels, gamma_est, crowd.disagreement(ds.annotator_labels))

    rows, certs, mistakes_per_run = [], [], []
    for r in range(args.runs):
        perm = np.arange(len(base)) if r == 0 else np.random.default_rng([args.seed, r]).permutation(len(base))
        seq = base.reordered(perm)
        _, mistakes = perceptron.run_perceptron(seq, args.order)
        mistakes_per_run.append(int(mistakes.sum()))
        if args.certify:
            tm = None if true_margins is None else true_margins[perm]
            cert = perceptron.certify_bounds(seq, u, mistakes, true_margins=tm)
            certs.append(cert)
            rows.append(perceptron.certificate_row(r, cert))
    summary = {"command": "perceptron", "order": args.order, "runs": args.runs, "separable": separable,
               "mistakes": mistakes_per_run}
    if args.certify:
        summary["all_bounds_hold"] = all(c.holds for c in certs)
        if args.out:
            out = Path(args.out)
            if out.suffix.lower() == ".csv":
                with open(out, "w", newline="", encoding="utf-8") as fh:
                    w = csv.writer(fh, lineterminator="\n")
                    w.writerow(perceptron.CSV_COLUMNS)
                    for row in rows:
                        w.writerow(["" if v is None else v for v in row])
            else:
                out.write_text(json.dumps([c.to_dict() for c in certs], default=_json_default) + "\n",
                               encoding="utf-8")
            summary["out"] = str(out)
        _note("instance  mistakes  eps_s  K  novikoff  interactive  noisy")
        for row in rows:
            _note("  ".join("-" if v is None else (f"{v:.4g}" if isinstance(v, float) else str(v)) for v in row))
        summary["certificates"] = [c.to_dict() for c in certs] if args.runs <= 10 else None
    _note(f"mistakes per run: {mistakes_per_run}")
    return summary


def cmd_margin(args) -> dict:
    ds = read_csv(args.data)
    est = margin.estimate_margins(ds, tol=args.tol, max_iter=args.max_iter)
    Path(args.out).write_text(est.to_json() + "\n", encoding="utf-8")
    order = np.argsort(-est.expertise, kind="stable")
    _note("annotator  z       radius")
    for l in order:
        _note(f"a{l + 1:<8d} {est.expertise[l]:.4f}  {est.radii[l]:.4f}")
    return {"command": "margin", "out": str(args.out), "z": est.expertise, "radii": est.radii,
            "expertise_converged": est.converged,
            "mean_margin": float(est.margin_lb.mean())}


def cmd_experiment(args) -> dict:
    if args.replicates < 1:
        raise UsageError("--replicates must be at least 1")
    plan = harness.ExperimentPlan(
        replicates=args.replicates, alpha_grid=tuple(args.alpha), p_grid=tuple(args.p),
        lambda_grid=tuple(args.lambda_grid or harness.DEFAULT_LAMBDA_GRID), folds=args.folds,
        seed=args.seed, dataset_source="libsvm_path" if args.libsvm else "gaussian_synthetic",
        libsvm_path=args.libsvm, train_fraction=args.train_fraction, cv_target=args.cv_target,
        scale_features=args.scale, balance_classes=args.balance, jobs=args.jobs,
    )
    report = harness.run_paired_experiment(plan)
    jpath, cpath = report.write(args.out_dir)
    _note("alpha     p  metric   wins/n   p-value")
    for s in report.settings:
        for metric, e in s["summary"].items():
            pv = "-" if e["p_value"] is None else f"{e['p_value']:.3g}"
            _note(f"{s['alpha']:5g} {s['p']:5g}  {metric:7s} {e['wins']:3d}/{e['n']:<3d}  {pv}")
    return {"command": "experiment", "report": str(jpath), "table": str(cpath),
            "settings": [{"alpha": s["alpha"], "p": s["p"], "summary": s["summary"]} for s in report.settings]}


# ---------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crowdweight", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON file of flag defaults; explicit flags win")
        p.add_argument("--seed", type=_seed_type, default=None,
                       help=f"RNG seed (default: ${SEED_ENV} or 0)")
        return p

    p = common(sub.add_parser("simulate", help="simulate noisy annotators"))
    src = p.add_mutually_exclusive_group(required=False)
    src.add_argument("--input", help="LibSVM file (or CSV with y_true)")
    src.add_argument("--gaussian", action="store_true", help="use the two-Gaussian synthetic set")
    p.add_argument("--p", type=float, default=1.0, help="noise parameter")
    p.add_argument("--annotators", type=int, default=10, help="number of noisy annotators")
    p.add_argument("--no-perfect", action="store_true")
    p.add_argument("--no-adversarial", action="store_true")
    p.add_argument("--score-lambda", type=float, default=1e-6)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = common(sub.add_parser("train", help="fit the baseline or interactive model"))
    p.add_argument("--data", required=True)
    p.add_argument("--mode", choices=("interactive", "baseline"), default="interactive")
    p.add_argument("--alpha", type=float, default=2.0)
    lam = p.add_mutually_exclusive_group()
    lam.add_argument("--lambda", dest="lam", type=float)
    lam.add_argument("--tune", action="store_true", help="pick lambda by cross-validation")
    p.add_argument("--lambda-grid", type=_float_list, default=None)
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--cv-target", choices=("majority", "true"), default="majority")
    p.add_argument("--max-iters", type=int, default=100)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--out")
    p.set_defaults(func=cmd_train)

    p = common(sub.add_parser("perceptron", help="run the perceptron and certify mistake bounds"))
    p.add_argument("--data", required=True)
    p.add_argument("--order", choices=("sorted", "given"), default="sorted")
    p.add_argument("--certify", action="store_true")
    p.add_argument("--runs", type=int, default=1)
    p.add_argument("--margins", help="MarginEstimate JSON from the margin command")
    p.add_argument("--out", help="certificate output (.json or .csv)")
    p.set_defaults(func=cmd_perceptron)

    p = common(sub.add_parser("margin", help="estimate expertise, radii and margins"))
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--max-iter", type=int, default=10_000)
    p.set_defaults(func=cmd_margin)

    p = common(sub.add_parser("experiment", help="paired interactive-vs-baseline experiment"))
    src = p.add_mutually_exclusive_group(required=False)
    src.add_argument("--synthetic", action="store_true")
    src.add_argument("--libsvm", metavar="PATH")
    p.add_argument("--alpha", type=_float_list, default=[2.0])
    p.add_argument("--p", type=_float_list, default=[1.0])
    p.add_argument("--replicates", type=int, default=100)
    p.add_argument("--lambda-grid", type=_float_list, default=None)
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--train-fraction", type=float, default=None)
    p.add_argument("--cv-target", choices=("majority", "true"), default="majority")
    p.add_argument("--scale", action="store_true", help="min-max scale features to [-1, 1]")
    p.add_argument("--balance", action="store_true", help="subsample training sets to class balance")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_experiment)
    return parser


def _apply_config(parser, argv):
    """Re-parse with the JSON overlay installed as subparser defaults."""
    args = parser.parse_args(argv)
    if not getattr(args, "config", None):
        return args
    try:
        overlay = json.loads(Path(args.config).read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        parser.error(f"cannot read config {args.config}: {exc}")
    if not isinstance(overlay, dict):
        parser.error("config must be a JSON object")
    subparser = parser._subparsers._group_actions[0].choices[args.command]
    valid = {a.dest for a in subparser._actions}
    norm = {k.replace("-", "_"): v for k, v in overlay.items()}
    if "lambda" in norm:
        norm["lam"] = norm.pop("lambda")
    unknown = sorted(set(norm) - valid - {"command"})
    if unknown:
        parser.error(f"unknown config keys: {', '.join(unknown)}")
    for a in subparser._actions:
        if a.dest in norm and a.required:
            a.required = False
    subparser.set_defaults(**{k: v for k, v in norm.items() if k != "command"})
    return parser.parse_args(argv)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        if args.seed is None:
            args.seed = _default_seed()
        if args.command == "simulate" and not args.gaussian and not args.input:
            raise UsageError("one of --input or --gaussian is required")
        if args.command == "experiment" and not args.synthetic and not args.libsvm:
            args.synthetic = True
        if getattr(args, "runs", 1) < 1:
            raise UsageError("--runs must be at least 1")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", wls.IllConditionedWarning)
            summary = args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        _note(f"crowdweight: error: {exc}")
        return 2
    except (OSError, ValueError, CrowdweightError) as exc:
        _note(f"crowdweight: error: {exc}")
        return 1
    summary["config"] = _resolved(args)
    _emit(summary)
    return 0


if __name__ == "__main__":
    sys.exit(main())
