"""Model selection along the path: BIC, cross-validation, adaptive weights
and stability selection.

Losses are sums over observations, so a penalty level fitted on ``m`` rows
corresponds to ``lam * n / m`` on the full ``n`` rows. Cross-validation
reports its grid on the full-data scale and stability selection rescales
it to the subsample size.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Optional

import numpy as np
from joblib import Parallel, delayed

from .kkt import lambda_max
from .losses import MARGIN, RESIDUAL
from .model import GroupStructure, Kink, ProblemSpec, SolutionPath
from .oracle import solve_fixed_lambda
from .path import PathOptions, run_path

logger = logging.getLogger(__name__)

ACTIVE_RTOL = 1e-12
RSS_FLOOR_RTOL = 1e-12


@dataclass
class SelectionReport:
    """Per-kink criterion values or per-feature selection probabilities.

    For a criterion report ``lambdas``, ``df`` and ``criterion`` are aligned
    and ``chosen`` indexes the selected kink. A stability report fills
    ``probabilities`` instead and leaves the criterion arrays empty.
    """

    lambdas: np.ndarray = field(default_factory=lambda: np.empty(0))
    df: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=int))
    criterion: np.ndarray = field(default_factory=lambda: np.empty(0))
    criterion_name: str = "bic"
    chosen: Optional[int] = None
    probabilities: Optional[np.ndarray] = None
    feature_names: Optional[list] = None
    lambda_selected: Optional[float] = None
    n_skipped: int = 0
    flags: list = field(default_factory=list)

    @property
    def chosen_lambda(self):
        if self.chosen is None:
            return self.lambda_selected
        return float(self.lambdas[self.chosen])


class CVResult(NamedTuple):
    lambdas: np.ndarray
    error: np.ndarray
    chosen: int
    lambda_best: float
    folds: list
    path: SolutionPath

    @property
    def min_error(self):
        return float(self.error[self.chosen])


def active_mask(beta, rtol=ACTIVE_RTOL):
    beta = np.asarray(beta, dtype=float)
    scale = max(1.0, float(np.max(np.abs(beta), initial=0.0)))
    return np.abs(beta) > rtol * scale


def _argmin_larger_lambda(values, lambdas):
    """Index of the minimum; among ties the larger lambda wins."""
    values = np.asarray(values, dtype=float)
    best = np.min(values)
    tied = np.flatnonzero(values <= best + 1e-12 * max(1.0, abs(best)))
    return int(tied[np.argmax(np.asarray(lambdas)[tied])])


def bic_along_path(problem, path):
    """Gaussian BIC ``n log(RSS/n) + log(n) df`` at every kink.

    ``df`` is the active-set size minus one, clipped at zero. A zero RSS is
    floored at ``1e-12 * max(||y||^2, 1)`` with a warning.
    """
    if problem.loss.residual_kind != RESIDUAL:
        raise ValueError("BIC needs a regression loss")
    n = problem.n
    betas = path.betas
    resid = problem.y[None, :] - betas @ problem.X.T
    rss = np.sum(resid ** 2, axis=1)
    floor = RSS_FLOOR_RTOL * max(float(problem.y @ problem.y), 1.0)
    if np.any(rss < floor):
        logger.warning("RSS below %.3g at %d kink(s); floored", floor, int(np.sum(rss < floor)))
        rss = np.maximum(rss, floor)
    df = np.array([max(int(active_mask(b).sum()) - 1, 0) for b in betas])
    crit = n * np.log(rss / n) + np.log(n) * df
    lams = path.lambdas
    chosen = _argmin_larger_lambda(crit, lams)
    return SelectionReport(lams, df, crit, "bic", chosen, lambda_selected=float(lams[chosen]))


def adaptive_reparametrize(problem, weights):
    """Rescale columns and constraint weights by ``1 / weights``.

    The standard path of the returned problem in ``gamma`` solves the
    weighted penalty ``lam * sum(w_j |beta_j|)`` with ``beta = gamma / w``.
    ``back_map`` accepts a coefficient array (last axis ``p``) or a
    :class:`SolutionPath`; multipliers are unchanged by the transform.
    """
    w = np.asarray(weights, dtype=float)
    if w.shape != (problem.p,):
        raise ValueError(f"weights have shape {w.shape}, expected ({problem.p},)")
    if not np.all(np.isfinite(w)) or np.any(w <= 0):
        raise ValueError("weights must be positive and finite")
    groups = GroupStructure(problem.groups.group_sizes, problem.groups.d / w)
    transformed = ProblemSpec(problem.X / w, problem.y, problem.loss, groups)

    def back_map(gamma):
        if isinstance(gamma, SolutionPath):
            kinks = [Kink(k.lam, k.beta / w, dict(k.mu), k.event) for k in gamma.kinks]
            return SolutionPath(kinks, gamma.status, gamma.lambda_max, gamma.message,
                                gamma.n_groups)
        return np.asarray(gamma, dtype=float) / w

    return transformed, back_map


def unpenalized_estimate(problem, rank_rtol=1e-10):
    """Constraint-respecting least-squares fit, or a near-zero-lambda oracle
    fit when that is not identifiable.

    Returns ``(beta, used_fallback)``. The fallback is taken for
    classification losses and whenever the bordered normal equations are
    rank deficient (typically ``n < p``).
    """
    if problem.loss.residual_kind == RESIDUAL:
        X, D = problem.X, problem.groups.matrix()
        K = D.shape[1]
        A = np.block([[X.T @ X, D], [D.T, np.zeros((K, K))]])
        s = np.linalg.svd(A, compute_uv=False)
        if s[-1] > rank_rtol * s[0]:
            rhs = np.concatenate((X.T @ problem.y, np.zeros(K)))
            return np.linalg.solve(A, rhs)[: problem.p], False
    lam = 1e-6 * lambda_max(problem).value
    res = solve_fixed_lambda(problem, lam)
    return res.beta, True


def adaptive_weights(problem, floor_rtol=1e-8):
    """``1 / |beta_hat|`` from :func:`unpenalized_estimate`.

    Exact zeros in the pilot fit are floored at ``floor_rtol * max|beta_hat|``
    so the weights stay finite. Returns ``(weights, used_fallback)``.
    """
    beta, fallback = unpenalized_estimate(problem)
    mag = np.abs(beta)
    top = float(mag.max()) if mag.size else 0.0
    if top == 0:
        return np.ones(problem.p), fallback
    return 1.0 / np.maximum(mag, floor_rtol * top), fallback


def fold_indices(n, folds, seed=0):
    """Test-index arrays of a ``folds``-way split; ``"loo"`` or ``folds == n``
    gives leave-one-out."""
    if folds == "loo" or folds == n:
        return [np.array([i]) for i in range(n)]
    folds = int(folds)
    if not 2 <= folds <= n:
        raise ValueError(f"need 2 <= folds <= n, got {folds} for n={n}")
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(f) for f in np.array_split(perm, folds)]


def prediction_error(problem, y, eta):
    """Summed held-out error: squared error or misclassification count."""
    if problem.loss.residual_kind == MARGIN:
        return np.sum(y * eta <= 0, axis=-1).astype(float)
    return np.sum((y - eta) ** 2, axis=-1)


def _fit_fold(problem, test, options):
    train = np.setdiff1d(np.arange(problem.n), test)
    return run_path(problem.subset(train), options)


def cross_validate(problem, folds=5, seed=0, jobs=1, options=None):
    """K-fold or leave-one-out cross-validation over path kinks.

    The grid is the union of the full-data kinks and every fold's kinks,
    all expressed on the full-data scale. Fold paths are evaluated at
    ``lam * n_train / n`` by linear interpolation between their kinks;
    above a fold's ``lambda_max`` that fold predicts with ``beta = 0``.
    The curve is the held-out error summed over folds divided by ``n``;
    ties go to the larger lambda.
    """
    options = options or PathOptions()
    n = problem.n
    test_sets = fold_indices(n, folds, seed)
    full = run_path(problem, options)
    fold_paths = Parallel(n_jobs=jobs)(delayed(_fit_fold)(problem, t, options)
                                       for t in test_sets)
    scales = [n / (n - t.size) for t in test_sets]
    grid = [full.lambdas] + [fp.lambdas * s for fp, s in zip(fold_paths, scales)]
    grid = np.unique(np.concatenate(grid))[::-1]
    total = np.zeros(grid.size)
    for t, fp, s in zip(test_sets, fold_paths, scales):
        coef = fp.coef_grid(grid / s)
        eta = coef @ problem.X[t].T
        total += prediction_error(problem, problem.y[t][None, :], eta)
    error = total / n
    chosen = _argmin_larger_lambda(error, grid)
    return CVResult(grid, error, chosen, float(grid[chosen]), test_sets, full)


def canonical_order(problem):
    """Row order that depends only on the rows' contents."""
    keys = np.column_stack((problem.X, problem.y))
    return np.lexsort(keys.T[::-1])


def _stability_draw(problem, rows, multipliers, lam_full, options):
    """Selection indicator of one randomized fit, or ``None`` if skipped."""
    sub = problem.subset(rows)
    if np.any(np.ptp(sub.X, axis=0) == 0):
        return None
    transformed, _ = adaptive_reparametrize(sub, 1.0 / multipliers)
    lam = lam_full * rows.size / problem.n
    opts = replace(options, lambda_min=lam)
    path = run_path(transformed, opts)
    return active_mask(path.beta_at(lam))


def stability_selection(problem, n_subsamples=100, weakness=0.5, seed=0, jobs=1,
                        folds=5, lambda_full=None, subsample_size=None, options=None,
                        feature_names=None):
    """Selection frequencies of randomized, subsampled fits.

    Each draw takes ``subsample_size`` rows (default ``n // 2``) without
    replacement and per-feature penalty weights ``1 / U[weakness, 1]``, and
    records the active set at the penalty chosen once by cross-validation on
    the full data (rescaled to the subsample). Rows are put in a canonical
    order first so the result does not depend on the input order. All random
    numbers are drawn up front, so ``jobs`` does not change the output.
    Subsamples with a constant column are skipped and counted.
    """
    if not 0 < weakness <= 1:
        raise ValueError("weakness must lie in (0, 1]")
    if n_subsamples < 1:
        raise ValueError("n_subsamples must be at least 1")
    options = options or PathOptions()
    canon = problem.subset(canonical_order(problem))
    n, p = canon.n, canon.p
    m = n // 2 if subsample_size is None else int(subsample_size)
    if not 1 <= m <= n:
        raise ValueError(f"subsample size {m} out of range for n={n}")
    if lambda_full is None:
        lambda_full = cross_validate(canon, folds, seed, jobs, options).lambda_best
    rng = np.random.default_rng(seed)
    draws = []
    for _ in range(n_subsamples):
        rows = np.sort(rng.choice(n, size=m, replace=False))
        draws.append((rows, rng.uniform(weakness, 1.0, size=p)))
    masks = Parallel(n_jobs=jobs)(delayed(_stability_draw)(canon, rows, mult, lambda_full, options)
                                  for rows, mult in draws)
    kept = [mk for mk in masks if mk is not None]
    skipped = n_subsamples - len(kept)
    if skipped:
        logger.warning("skipped %d degenerate subsample(s)", skipped)
    probs = np.mean(kept, axis=0) if kept else np.zeros(p)
    return SelectionReport(probabilities=probs, feature_names=feature_names,
                           lambda_selected=float(lambda_full), n_skipped=skipped,
                           criterion_name="stability")
