"""Command-line interface: fit, test, predict, simulate and evaluate.

Every command writes a JSON report that embeds a run manifest (resolved
arguments, sha256 digests of all input files, seed, tool version and a
timestamp block).  All randomness flows from ``--seed``; when the flag is
omitted by a command that needs randomness, a seed is drawn once and
recorded in the manifest, so reports are always reproducible from their
own metadata.

Exit codes: 0 on success, 1 for numerical or model-level failures,
2 for usage and input errors.
"""

from __future__ import annotations

import argparse
import csv
import datetime
import hashlib
import json
import math
import sys
import time

import numpy as np

from . import __version__
from .cox import SurvivalData, fit_cox
from .design import build_design, center, forward_select, read_covariates
from .exceptions import ModelError
from .gaussian import (
    GaussianFit,
    fit_ols,
    order_test,
    predict as predict_gaussian,
    t_statistics,
)
from .graph import read_edge_list
from .logistic import auc, fit_logistic, predict_proba
from .schemas import validate_report
from .sim import ScenarioConfig, run_prediction_study, run_test_study

DEFAULT_TOL = 1e-8


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return "sha256:" + h.hexdigest()


class _Run:
    """Collects manifest data while a command executes."""

    def __init__(self, command: str, args: argparse.Namespace, tracked: list[str]):
        self.command = command
        self.started = time.time()
        self.seed = getattr(args, "seed", None)
        self.arguments = {
            k: v for k, v in vars(args).items() if k not in ("func",) and v is not None
        }
        self.input_digests = {}
        for name in tracked:
            path = getattr(args, name, None)
            if path is not None:
                self.input_digests[name] = _sha256(path)

    def manifest(self) -> dict:
        return {
            "command": self.command,
            "version": __version__,
            "seed": self.seed,
            "arguments": {k: v for k, v in self.arguments.items()},
            "input_digests": self.input_digests,
            "timestamp": {
                "started_utc": datetime.datetime.fromtimestamp(
                    self.started, tz=datetime.timezone.utc
                ).isoformat(),
                "wall_clock_sec": time.time() - self.started,
            },
        }


def _write_report(report: dict, path) -> None:
    validate_report(report)
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _read_single_column(path, column: str) -> np.ndarray:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != [column]:
            raise ValueError(f"{path}: expected single-column header '{column}'")
        values = []
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 1:
                raise ValueError(f"{path}:{lineno}: expected one column")
            try:
                values.append(float(row[0]))
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: non-numeric value") from exc
    if not values:
        raise ValueError(f"{path}: no data rows")
    return np.asarray(values)


def _load_design(args, n_expected: int | None = None, K: int | None = None):
    X = read_covariates(args.covariates)
    graph = read_edge_list(args.edges, n_nodes=X.shape[0])
    if n_expected is not None and X.shape[0] != n_expected:
        raise ValueError(
            f"covariates have {X.shape[0]} rows but {n_expected} were expected"
        )
    from .graph import row_normalize

    W = row_normalize(graph)
    return build_design(W, X, K if K is not None else args.K), X


def _coefficient_records(names, provenance, selected, estimates, std_errors):
    recs = []
    for i, col in enumerate(selected):
        k, j = provenance[col]
        recs.append(
            {
                "name": names[i],
                "order": int(k),
                "covariate": int(j),
                "estimate": float(estimates[i]),
                "std_error": float(std_errors[i]),
            }
        )
    return recs


def cmd_fit(args) -> None:
    run = _Run("fit", args, ["edges", "covariates", "response", "time", "event"])
    if args.family in ("gaussian", "logistic"):
        if args.response is None:
            raise ValueError(f"--response is required for family {args.family}")
    else:
        if args.time is None or args.event is None:
            raise ValueError("--time and --event are required for family cox")

    design, _ = _load_design(args)
    report = {
        "schema_version": 1,
        "kind": "fit",
        "family": args.family,
        "n": design.n_rows,
        "K": args.K,
        "d": design.d,
        "tol": args.tol,
        "gaussian": None,
        "logistic": None,
        "cox": None,
    }

    if args.family == "gaussian":
        y = _read_single_column(args.response, "y")
        selected = forward_select(center(design), tol=args.tol)
        fit = fit_ols(selected, y)
        stats = t_statistics(fit)
        report["selected_columns"] = [int(c) for c in fit.selected]
        report["coefficients"] = _coefficient_records(
            fit.column_names, fit.provenance, fit.selected, fit.theta_hat, fit.std_errors
        )
        report["gaussian"] = {
            "rss": fit.rss,
            "sigma2_hat": fit.sigma2_hat,
            "y_mean": fit.y_mean,
            "column_means": fit.column_means.tolist(),
            "gram": fit.gram.tolist(),
            "gram_inverse": fit.gram_inverse.tolist(),
            "gram_condition_number": float(np.linalg.cond(fit.gram)),
        }
        report["t_statistics"] = [
            {k: (v if not isinstance(v, float) or math.isfinite(v) else None) for k, v in rec.items()}
            for rec in stats
        ]
    elif args.family == "logistic":
        y = _read_single_column(args.response, "y")
        selected = forward_select(design, tol=args.tol)
        fit = fit_logistic(selected, y, tol=args.tol)
        report["selected_columns"] = [int(c) for c in fit.selected]
        report["coefficients"] = _coefficient_records(
            fit.column_names, fit.provenance, fit.selected, fit.theta_hat[1:], fit.std_errors[1:]
        )
        report["logistic"] = {
            "intercept": float(fit.theta_hat[0]),
            "intercept_std_error": float(fit.std_errors[0]),
            "log_likelihood": fit.log_likelihood,
            "iterations": fit.iterations,
            "converged": fit.converged,
        }
    else:
        t = _read_single_column(args.time, "time")
        d = _read_single_column(args.event, "event")
        surv = SurvivalData(time=t, event=d)
        if surv.n != design.n_rows:
            raise ValueError("survival data length must match the covariate rows")
        selected = forward_select(design, tol=args.tol)
        fit = fit_cox(selected, surv, tol=args.tol)
        report["selected_columns"] = [int(c) for c in fit.selected]
        report["coefficients"] = _coefficient_records(
            fit.column_names, fit.provenance, fit.selected, fit.lambda_hat, fit.std_errors
        )
        report["cox"] = {
            "partial_loglik": fit.partial_loglik,
            "iterations": fit.iterations,
            "converged": fit.converged,
            "n_events": surv.n_events,
        }

    report["manifest"] = run.manifest()
    _write_report(report, args.out)


def _fit_from_json(path) -> dict:
    with open(path) as fh:
        payload = json.load(fh)
    if payload.get("kind") != "fit":
        raise ValueError(f"{path}: not a fit report")
    return payload


def _rebuild_gaussian_fit(payload: dict) -> GaussianFit:
    if payload["family"] != "gaussian":
        raise ValueError("order tests require a gaussian-family fit")
    g = payload["gaussian"]
    K, d = payload["K"], payload["d"]
    provenance = [(k, j) for k in range(K + 1) for j in range(d)]
    selected = [int(c) for c in payload["selected_columns"]]
    coefs = payload["coefficients"]
    theta = np.asarray([c["estimate"] for c in coefs])
    ses = np.asarray([c["std_error"] for c in coefs])
    return GaussianFit(
        theta_hat=theta,
        selected=selected,
        provenance=provenance,
        column_names=[c["name"] for c in coefs],
        rss=g["rss"],
        sigma2_hat=g["sigma2_hat"],
        gram=np.asarray(g["gram"]),
        gram_inverse=np.asarray(g["gram_inverse"]),
        std_errors=ses,
        n=payload["n"],
        d_sel=len(selected),
        column_means=np.asarray(g["column_means"]),
        y_mean=g["y_mean"],
    )


def cmd_test(args) -> None:
    run = _Run("test", args, ["fit"])
    if not 0.0 < args.alpha < 1.0:
        raise ValueError("--alpha must lie strictly between 0 and 1")
    payload = _fit_from_json(args.fit)
    fit = _rebuild_gaussian_fit(payload)
    if args.kmax > payload["K"]:
        raise ValueError(f"--kmax {args.kmax} exceeds the fit's K={payload['K']}")
    result = order_test(fit, None, k_max=args.kmax, xi=args.alpha)
    report = {
        "schema_version": 1,
        "kind": "test",
        "kmax": args.kmax,
        **result.to_dict(),
        "manifest": run.manifest(),
    }
    _write_report(report, args.out)


def cmd_predict(args) -> None:
    _Run("predict", args, ["fit", "edges", "covariates"])
    payload = _fit_from_json(args.fit)
    X = read_covariates(args.covariates, allow_empty=True)
    if X.shape[1] != payload["d"]:
        raise ValueError(
            f"covariates have {X.shape[1]} columns but the fit used {payload['d']}"
        )
    if X.shape[0] == 0:
        with open(args.out, "w", newline="") as fh:
            csv.writer(fh).writerow(["node", "prediction"])
        return
    graph = read_edge_list(args.edges, n_nodes=X.shape[0])
    from .graph import row_normalize

    design = build_design(row_normalize(graph), X, payload["K"])
    family = payload["family"]
    if family == "gaussian":
        fit = _rebuild_gaussian_fit(payload)
        values = predict_gaussian(fit, design)
    else:
        selected = [int(c) for c in payload["selected_columns"]]
        estimates = np.asarray([c["estimate"] for c in payload["coefficients"]])
        M = design.full_matrix()[:, selected]
        if family == "logistic":
            from scipy.special import expit

            values = expit(payload["logistic"]["intercept"] + M @ estimates)
        else:
            values = np.exp(M @ estimates)
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["node", "prediction"])
        for i, v in enumerate(values):
            writer.writerow([i, repr(float(v))])


def _replicate_csv(path, report) -> None:
    """Plot-ready long format: one (rep, metric, value) row per scalar."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["rep", "metric", "value"])
        for i, row in enumerate(report.replicates):
            for key, val in row.items():
                if isinstance(val, (int, float)):
                    writer.writerow([i, key, repr(float(val))])
                elif isinstance(val, list):
                    for j, item in enumerate(val):
                        writer.writerow([i, f"{key}_j{j}", repr(float(item))])


def _resolve_seed(args) -> int:
    if args.seed is None:
        args.seed = int(np.random.SeedSequence().entropy % (2 ** 63))
    return args.seed


def cmd_simulate(args) -> None:
    run = _Run("simulate", args, [])
    run.seed = _resolve_seed(args)
    cfg = ScenarioConfig(
        case=args.case,
        setting=args.setting,
        n=args.n,
        reps=args.reps,
        seed=args.seed,
        train_frac=args.train_frac,
    )
    report_obj = run_prediction_study(cfg)
    report = {
        "schema_version": 1,
        "kind": "simulation",
        "study": "prediction",
        "config": report_obj.config,
        "reps": report_obj.reps,
        "metrics": report_obj.metrics,
        "manifest": run.manifest(),
    }
    _write_report(report, args.out)
    if args.csv:
        _replicate_csv(args.csv, report_obj)


def cmd_simulate_test(args) -> None:
    run = _Run("simulate-test", args, [])
    run.seed = _resolve_seed(args)
    cfg = ScenarioConfig(
        case=args.case,
        setting=3,
        n=args.n,
        reps=args.reps,
        seed=args.seed,
        train_frac=args.train_frac,
    )
    report_obj = run_test_study(cfg, n_nulls=args.nulls)
    report = {
        "schema_version": 1,
        "kind": "simulation",
        "study": "testing",
        "config": report_obj.config,
        "reps": report_obj.reps,
        "metrics": report_obj.metrics,
        "manifest": run.manifest(),
    }
    _write_report(report, args.out)
    if args.csv:
        _replicate_csv(args.csv, report_obj)


def cmd_eval_auc(args) -> None:
    run = _Run("eval-auc", args, ["fit", "edges", "covariates", "response"])
    run.seed = _resolve_seed(args)
    payload = _fit_from_json(args.fit)
    if payload["family"] != "logistic":
        raise ValueError("eval-auc requires a logistic-family fit configuration")
    y = _read_single_column(args.response, "y")
    design, _ = _load_design(args, n_expected=y.shape[0], K=payload["K"])
    tol = payload["tol"]
    rng = np.random.default_rng(args.seed)
    n = design.n_rows
    n_train = int(round(args.train_frac * n))
    if n_train < 1 or n_train >= n:
        raise ValueError("degenerate split sizes")
    scores = []
    for _ in range(args.splits):
        perm = rng.permutation(n)
        train, test = np.sort(perm[:n_train]), np.sort(perm[n_train:])
        sub = forward_select(design.subset_rows(train), tol=tol)
        fit = fit_logistic(sub, y[train], tol=tol)
        proba = predict_proba(fit, design.subset_rows(test))
        scores.append(auc(proba, y[test]))
    scores = np.asarray(scores)
    sd = float(scores.std(ddof=1)) if scores.size > 1 else 0.0
    half = 1.959964 * sd / math.sqrt(scores.size)
    report = {
        "schema_version": 1,
        "kind": "auc-eval",
        "splits": args.splits,
        "train_frac": args.train_frac,
        "K": payload["K"],
        "mean_auc": float(scores.mean()),
        "sd": sd,
        "ci95_low": float(scores.mean() - half),
        "ci95_high": float(scores.mean() + half),
        "per_split": [float(s) for s in scores],
        "manifest": run.manifest(),
    }
    _write_report(report, args.out)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="npr",
        description="Regression on network-linked data via propagated covariates",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="fit a model from CSV inputs")
    p_fit.add_argument("--family", required=True, choices=["gaussian", "logistic", "cox"])
    p_fit.add_argument("--edges", required=True)
    p_fit.add_argument("--covariates", required=True)
    p_fit.add_argument("--response")
    p_fit.add_argument("--time")
    p_fit.add_argument("--event")
    p_fit.add_argument("--K", type=int, default=8)
    p_fit.add_argument("--tol", type=float, default=DEFAULT_TOL)
    p_fit.add_argument("--seed", type=int)
    p_fit.add_argument("--out", required=True)
    p_fit.set_defaults(func=cmd_fit)

    p_test = sub.add_parser("test", help="sequential order tests from a gaussian fit")
    p_test.add_argument("--fit", required=True)
    p_test.add_argument("--kmax", type=int, required=True)
    p_test.add_argument("--alpha", type=float, default=0.05)
    p_test.add_argument("--seed", type=int)
    p_test.add_argument("--out", required=True)
    p_test.set_defaults(func=cmd_test)

    p_pred = sub.add_parser("predict", help="per-node predictions from a fit")
    p_pred.add_argument("--fit", required=True)
    p_pred.add_argument("--edges", required=True)
    p_pred.add_argument("--covariates", required=True)
    p_pred.add_argument("--out", required=True)
    p_pred.set_defaults(func=cmd_predict)

    p_sim = sub.add_parser("simulate", help="run a prediction-comparison study")
    p_sim.add_argument("--case", type=int, required=True)
    p_sim.add_argument("--setting", type=int, required=True)
    p_sim.add_argument("--n", type=int, required=True)
    p_sim.add_argument("--reps", type=int, default=100)
    p_sim.add_argument("--seed", type=int)
    p_sim.add_argument("--train-frac", type=float, default=0.8)
    p_sim.add_argument("--out", required=True)
    p_sim.add_argument("--csv")
    p_sim.set_defaults(func=cmd_simulate)

    p_st = sub.add_parser("simulate-test", help="run a sequential-testing study")
    p_st.add_argument("--case", type=int, required=True)
    p_st.add_argument("--nulls", type=int, required=True, choices=[2, 3])
    p_st.add_argument("--n", type=int, required=True)
    p_st.add_argument("--reps", type=int, default=1000)
    p_st.add_argument("--seed", type=int)
    p_st.add_argument("--train-frac", type=float, default=0.8)
    p_st.add_argument("--out", required=True)
    p_st.add_argument("--csv")
    p_st.set_defaults(func=cmd_simulate_test)

    p_auc = sub.add_parser("eval-auc", help="repeated-split AUC for a logistic configuration")
    p_auc.add_argument("--fit", required=True)
    p_auc.add_argument("--edges", required=True)
    p_auc.add_argument("--covariates", required=True)
    p_auc.add_argument("--response", required=True)
    p_auc.add_argument("--splits", type=int, default=100)
    p_auc.add_argument("--train-frac", type=float, default=0.8)
    p_auc.add_argument("--seed", type=int)
    p_auc.add_argument("--out", required=True)
    p_auc.set_defaults(func=cmd_eval_auc)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except ModelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except np.linalg.LinAlgError as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
