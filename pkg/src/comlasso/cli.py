"""Command-line front end.

Exit codes: 0 success, 1 bad input, 2 verification failure, 3 path cut short
(singular system or kink budget exhausted; the path is still written).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time

import numpy as np

from .data import (DataError, generate_synthetic, read_path_csv, read_problem_csv,
                   write_compositional_csv, write_group_map, write_path_csv, write_plot_data,
                   write_report, write_vector_csv, _fmt, _read_rows)
from .kkt import verify_kkt
from .losses import BUILTIN_LOSSES, make_builtin_loss
from .oracle import solve_fixed_lambda
from .path import PathOptions, run_path
from .selection import (adaptive_reparametrize, adaptive_weights, bic_along_path,
                        cross_validate, stability_selection)

EXIT_OK, EXIT_INPUT, EXIT_VERIFY, EXIT_TRUNCATED = 0, 1, 2, 3

logger = logging.getLogger("comlasso")


def _seed(args):
    if args.seed is not None:
        return args.seed
    env = os.environ.get("COMLASSO_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise DataError(f"COMLASSO_SEED={env!r} is not an integer") from None


def _folds(value):
    if value.lower() == "loo":
        return "loo"
    try:
        k = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"folds must be an integer or 'loo', got {value!r}")
    if k < 2:
        raise argparse.ArgumentTypeError("folds must be at least 2")
    return k


def _add_data_args(p):
    p.add_argument("--data", required=True, help="CSV: response column, then components")
    p.add_argument("--groups", help="CSV side file column_name,group_label,d_weight")
    p.add_argument("--loss", default="quadratic", choices=BUILTIN_LOSSES)
    p.add_argument("--loss-param", type=float, help="h for asymmetric and Huberized losses")
    p.add_argument("--hinge-shift", type=float, help="shift of the squared-hinge knot")
    p.add_argument("--task", choices=("regression", "classification"))
    p.add_argument("--normalize", action="store_true", help="rescale rows to sum to one")
    p.add_argument("--pseudocount", type=float, help="added to every component before log")


def _load(args):
    loss = make_builtin_loss(args.loss, h=args.loss_param, gamma=args.hinge_shift)
    task = args.task or ("classification" if loss.is_classification else "regression")
    if task == "classification" and not loss.is_classification:
        raise DataError(f"loss {args.loss} is a regression loss")
    return read_problem_csv(args.data, args.groups, args.loss, args.loss_param,
                            normalize=args.normalize, pseudocount=args.pseudocount,
                            gamma=args.hinge_shift, task=task)


def _path_options(args):
    return PathOptions(max_kinks=args.max_kinks, lambda_min=args.lambda_min)


def _read_weights(file, columns):
    path, rows = _read_rows(file)
    values = {}
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != 2:
            raise DataError(f"{path}:{lineno}: expected name,weight")
        try:
            values[row[0].strip()] = float(row[1])
        except ValueError:
            raise DataError(f"{path}:{lineno}:2: {row[1]!r} is not a number") from None
    missing = [c for c in columns if c not in values]
    if missing:
        raise DataError(f"{path}: no weight for column {missing[0]!r}")
    return np.array([values[c] for c in columns])


def cmd_fit(args):
    problem, data = _load(args)
    weights = None
    if args.adaptive_weights == "auto":
        weights, fallback = adaptive_weights(problem)
        if fallback:
            print("adaptive weights: pilot fit from near-zero lambda (least squares unavailable)")
    elif args.adaptive_weights:
        weights = _read_weights(args.adaptive_weights, data.columns)
    t0 = time.perf_counter()
    if weights is None:
        path = run_path(problem, _path_options(args))
    else:
        try:
            fit_problem, back_map = adaptive_reparametrize(problem, weights)
        except ValueError as exc:
            raise DataError(f"adaptive weights: {exc}") from None
        path = back_map(run_path(fit_problem, _path_options(args)))
    elapsed = time.perf_counter() - t0
    if args.out_path:
        write_path_csv(path, args.out_path, data.columns)
    if args.out_plot:
        write_plot_data(path, problem.groups, args.out_plot, data.columns)
    if args.out_figure:
        from .plotting import plot_path
        plot_path(path, problem.groups, args.out_figure, data.columns,
                  by_group=problem.groups.K > 1)
    if args.out_weights and weights is not None:
        write_vector_csv(args.out_weights, data.columns, weights, ("column", "weight"))
    print(f"lambda_max = {_fmt(path.lambda_max)}")
    print(f"kinks = {len(path)}")
    print(f"status = {path.status}")
    if path.message:
        print(f"message = {path.message}")
    if args.bic:
        if problem.task != "regression":
            raise DataError("BIC is only defined for regression losses")
        report = bic_along_path(problem, path)
        print(f"bic lambda = {_fmt(report.chosen_lambda)} (kink {report.chosen}, "
              f"df {int(report.df[report.chosen])})")
        write_report(report, args.bic)
    logger.info("path traced in %.3fs", elapsed)
    return EXIT_OK if path.status == "completed" else EXIT_TRUNCATED


def cmd_verify(args):
    problem, data = _load(args)
    path, columns = read_path_csv(args.path_file)
    if len(columns) != problem.p:
        raise DataError(f"{args.path_file}: {len(columns)} coefficients, data has {problem.p}")
    worst, worst_at, failed = 0.0, None, None
    for t, kink in enumerate(path.kinks):
        report = verify_kkt(problem, kink.beta, kink.lam, args.tol)
        if report.worst_violation > worst:
            worst, worst_at = report.worst_violation, t
        if not report.ok and failed is None:
            failed = t
    print(f"kinks checked = {len(path)}")
    print(f"worst violation = {worst:.3e}" + (f" (kink {worst_at})" if worst_at is not None else ""))
    status = EXIT_OK
    if failed is not None:
        print(f"KKT violated at kink {failed}")
        status = EXIT_VERIFY
    if args.oracle:
        rng = np.random.default_rng(_seed(args))
        lams = path.lambdas
        hi, lo = float(lams[0]), float(lams[-1])
        gap = 0.0
        for lam in rng.uniform(lo, hi, size=args.oracle):
            res = solve_fixed_lambda(problem, lam, tol=1e-10)
            gap = max(gap, float(np.max(np.abs(res.beta - path.beta_at(lam)))))
        print(f"oracle max gap = {gap:.3e} over {args.oracle} lambda values")
        if gap > args.oracle_tol:
            print(f"oracle gap exceeds {args.oracle_tol:g}")
            status = EXIT_VERIFY
    return status


def cmd_cv(args):
    problem, data = _load(args)
    seed = _seed(args)
    cv = cross_validate(problem, args.folds, seed, args.jobs, _path_options(args))
    print(f"lambda = {_fmt(cv.lambda_best)}")
    print(f"cv error = {_fmt(cv.min_error)}")
    print(f"grid points = {len(cv.lambdas)}")
    if args.out:
        write_vector_csv(args.out, [_fmt(v) for v in cv.lambdas], cv.error, ("lambda", "error"))
    if args.out_figure:
        from .plotting import plot_cv
        plot_cv(cv, args.out_figure)
    return EXIT_OK


def cmd_stability(args):
    problem, data = _load(args)
    seed = _seed(args)
    report = stability_selection(problem, args.subsamples, args.weakness, seed, args.jobs,
                                 folds=args.folds, options=_path_options(args),
                                 feature_names=data.columns)
    print(f"lambda = {_fmt(report.lambda_selected)}")
    print(f"subsamples skipped = {report.n_skipped}")
    order = np.argsort(-report.probabilities, kind="stable")
    for j in order[: args.top]:
        print(f"{data.columns[j]}\t{report.probabilities[j]:.3f}")
    if args.out:
        write_report(report, args.out)
    if args.out_figure:
        from .plotting import plot_stability
        plot_stability(report, args.out_figure)
    return EXIT_OK


def cmd_simulate(args):
    seed = _seed(args)
    syn = generate_synthetic(args.n, args.group_sizes, seed, noise_sd=args.noise_sd)
    problem = syn.problem
    y = problem.y
    if args.task == "classification":
        y = np.where(y > 0, 1.0, -1.0)
    columns = [f"x{j + 1}" for j in range(problem.p)]
    write_compositional_csv(args.out_data, syn.U, y, columns)
    if args.out_groups:
        write_group_map(args.out_groups, columns, problem.groups)
    if args.out_beta:
        write_vector_csv(args.out_beta, columns, syn.beta_true, ("column", "beta"))
    print(f"wrote {problem.n} x {problem.p} to {args.out_data}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="comlasso",
                                     description="Exact solution paths for zero-sum constrained lasso")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", help="trace the full coefficient path")
    _add_data_args(fit)
    fit.add_argument("--max-kinks", type=int)
    fit.add_argument("--lambda-min", type=float, default=0.0)
    fit.add_argument("--adaptive-weights",
                     help="'auto' for inverse pilot estimates, or a CSV name,weight")
    fit.add_argument("--out-path", help="path CSV (one row per kink)")
    fit.add_argument("--out-plot", help="plot-data CSV")
    fit.add_argument("--out-figure", help="image file for the coefficient path")
    fit.add_argument("--out-weights", help="write the adaptive weights used")
    fit.add_argument("--bic", metavar="FILE", help="write the BIC report here")
    fit.set_defaults(func=cmd_fit)

    ver = sub.add_parser("verify", help="re-check a path file")
    _add_data_args(ver)
    ver.add_argument("--path-file", required=True)
    ver.add_argument("--tol", type=float, default=1e-7)
    ver.add_argument("--oracle", type=int, default=0, metavar="N",
                     help="re-solve N random lambda values with the fixed-lambda solver")
    ver.add_argument("--oracle-tol", type=float, default=1e-4)
    ver.add_argument("--seed", type=int)
    ver.set_defaults(func=cmd_verify)

    cv = sub.add_parser("cv", help="cross-validate over path kinks")
    _add_data_args(cv)
    cv.add_argument("--folds", type=_folds, default=5, help="integer or 'loo'")
    cv.add_argument("--max-kinks", type=int)
    cv.add_argument("--lambda-min", type=float, default=0.0)
    cv.add_argument("--seed", type=int)
    cv.add_argument("--jobs", type=int, default=1)
    cv.add_argument("--out", help="CSV lambda,error")
    cv.add_argument("--out-figure")
    cv.set_defaults(func=cmd_cv)

    st = sub.add_parser("stability", help="randomized-lasso stability selection")
    _add_data_args(st)
    st.add_argument("--subsamples", type=int, default=100)
    st.add_argument("--weakness", type=float, default=0.5)
    st.add_argument("--folds", type=_folds, default=5)
    st.add_argument("--max-kinks", type=int)
    st.add_argument("--lambda-min", type=float, default=0.0)
    st.add_argument("--seed", type=int)
    st.add_argument("--jobs", type=int, default=1)
    st.add_argument("--top", type=int, default=10, help="features printed")
    st.add_argument("--out", help="CSV feature,selection_probability")
    st.add_argument("--out-figure")
    st.set_defaults(func=cmd_stability)

    sim = sub.add_parser("simulate", help="write a synthetic compositional data set")
    sim.add_argument("--n", type=int, required=True)
    sim.add_argument("--groups", dest="group_sizes", type=int, nargs="+", required=True,
                     help="group sizes; the first must be at least 8")
    sim.add_argument("--seed", type=int)
    sim.add_argument("--noise-sd", type=float, default=0.5)
    sim.add_argument("--task", choices=("regression", "classification"), default="regression")
    sim.add_argument("--out-data", default="simulated.csv")
    sim.add_argument("--out-groups", help="group-map side file")
    sim.add_argument("--out-beta", help="true coefficient file")
    sim.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except (DataError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
