import logging

import numpy as np
import pytest

from comlasso.data import generate_synthetic
from comlasso.losses import make_builtin_loss
from comlasso.model import GroupStructure, Kink, ProblemSpec, SolutionPath
from comlasso.oracle import solve_fixed_lambda
from comlasso.path import run_path
from comlasso.selection import (active_mask, adaptive_reparametrize, adaptive_weights,
                                bic_along_path, canonical_order, cross_validate, fold_indices,
                                stability_selection, unpenalized_estimate)

from conftest import random_classification, random_regression


def test_bic_empty_model():
    pr = random_regression(0)
    path = run_path(pr)
    rep = bic_along_path(pr, path)
    assert rep.df[0] == 0
    assert rep.criterion[0] == pytest.approx(pr.n * np.log(pr.y @ pr.y / pr.n))
    assert np.all(rep.df >= 0)
    assert rep.chosen_lambda == path.lambdas[rep.chosen]


def test_bic_saturated_floor(caplog):
    pr = random_regression(1, n=8, p=12)
    path = run_path(pr)
    with caplog.at_level(logging.WARNING):
        rep = bic_along_path(pr, path)
    assert np.all(np.isfinite(rep.criterion))
    assert "floored" in caplog.text


def test_bic_rejects_classification():
    pr = random_classification(0)
    with pytest.raises(ValueError):
        bic_along_path(pr, run_path(pr))


def test_bic_recovers_true_support():
    hits = 0
    for seed in range(50):
        syn = generate_synthetic(100, (10, 10, 10), seed=seed)
        path = run_path(syn.problem)
        rep = bic_along_path(syn.problem, path)
        hits += np.all(active_mask(path.betas[rep.chosen])[syn.beta_true != 0])
    assert hits >= 40


def test_adaptive_identity():
    pr = random_regression(2, sizes=(5, 5))
    tp, back = adaptive_reparametrize(pr, np.ones(pr.p))
    assert np.array_equal(tp.X, pr.X) and np.array_equal(tp.groups.d, pr.groups.d)
    a, b = run_path(pr), back(run_path(tp))
    np.testing.assert_allclose(a.betas, b.betas)


def test_adaptive_constant_weights_rescale_lambda():
    pr = random_regression(3)
    c = 2.5
    tp, back = adaptive_reparametrize(pr, np.full(pr.p, c))
    weighted = back(run_path(tp))
    plain = run_path(pr)
    np.testing.assert_allclose(weighted.lambdas * c, plain.lambdas, rtol=1e-10)
    np.testing.assert_allclose(weighted.betas, plain.betas, atol=1e-10)
    lam = 0.5 * weighted.lambdas[2]
    res = solve_fixed_lambda(pr, c * lam, tol=1e-11)
    np.testing.assert_allclose(weighted.beta_at(lam), res.beta, atol=1e-6)


def test_adaptive_round_trip_constraint():
    rng = np.random.default_rng(4)
    pr = random_regression(4, sizes=(4, 6))
    w = rng.uniform(0.2, 5, pr.p)
    tp, back = adaptive_reparametrize(pr, w)
    path = back(run_path(tp))
    res = np.abs(np.array([pr.groups.constraint_residuals(b) for b in path.betas]))
    assert res.max() <= 1e-10


@pytest.mark.parametrize("w", [np.zeros(10), np.full(10, np.inf), -np.ones(10), np.ones(3)])
def test_adaptive_bad_weights(w):
    with pytest.raises(ValueError):
        adaptive_reparametrize(random_regression(0), w)


def test_pilot_estimate_fallback_when_wide():
    pr = random_regression(5, n=8, p=15)
    beta, fallback = unpenalized_estimate(pr)
    assert fallback and np.all(np.isfinite(beta))
    w, _ = adaptive_weights(pr)
    assert np.all(np.isfinite(w)) and np.all(w > 0)
    beta, fallback = unpenalized_estimate(random_regression(5, n=40, p=5))
    assert not fallback


def test_folds_partition():
    folds = fold_indices(23, 5, seed=1)
    allidx = np.concatenate(folds)
    assert sorted(allidx) == list(range(23))
    assert len(fold_indices(7, "loo")) == 7
    with pytest.raises(ValueError):
        fold_indices(4, 5)


def test_cv_separable_loo_zero_error():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((16, 4))
    y = np.where(X[:, 0] - X[:, 1] > 0, 1.0, -1.0)
    X[:, 0] += 0.8 * y
    X[:, 1] -= 0.8 * y
    pr = ProblemSpec(X, y, make_builtin_loss("squared-hinge"), GroupStructure.single(4))
    cv = cross_validate(pr, "loo")
    assert cv.min_error == 0.0


def test_cv_classification_smoke():
    pr = random_classification(1)
    cv = cross_validate(pr, 5, seed=0)
    assert np.all(np.isfinite(cv.error)) and np.all((cv.error >= 0) & (cv.error <= 1))
    assert np.all(np.diff(cv.lambdas) < 0)


def test_cv_noise_prefers_empty_end():
    near = 0
    for seed in range(20):
        pr = random_regression(seed, n=40, p=10)
        pr = pr.with_data(pr.X, np.random.default_rng(seed).standard_normal(40))
        cv = cross_validate(pr, 5, seed=seed)
        near += cv.lambda_best >= 0.5 * cv.path.lambda_max
    assert near >= 14


def test_cv_jobs_do_not_change_result():
    pr = random_regression(6, n=30)
    a = cross_validate(pr, 5, seed=2, jobs=1)
    b = cross_validate(pr, 5, seed=2, jobs=2)
    assert np.array_equal(a.error, b.error) and a.lambda_best == b.lambda_best


@pytest.fixture(scope="module")
def synth():
    return generate_synthetic(60, (10, 10), seed=5)


def test_stability_reproducible_and_bounded(synth):
    a = stability_selection(synth.problem, 20, 0.5, seed=3)
    b = stability_selection(synth.problem, 20, 0.5, seed=3, jobs=2)
    assert np.array_equal(a.probabilities, b.probabilities)
    assert np.all((a.probabilities >= 0) & (a.probabilities <= 1))


def test_stability_permutation_invariant(synth):
    pr = synth.problem
    perm = np.random.default_rng(0).permutation(pr.n)
    a = stability_selection(pr, 15, 0.5, seed=9)
    b = stability_selection(pr.subset(perm), 15, 0.5, seed=9)
    assert np.array_equal(a.probabilities, b.probabilities)
    assert np.array_equal(canonical_order(pr.subset(perm)).size, pr.n)


def test_stability_single_full_draw_matches_cv(synth):
    pr = synth.problem
    canon = pr.subset(canonical_order(pr))
    cv = cross_validate(canon, 5, seed=0)
    rep = stability_selection(pr, 1, 1.0, seed=0, subsample_size=pr.n)
    expected = active_mask(cv.path.beta_at(cv.lambda_best))
    assert np.array_equal(rep.probabilities.astype(bool), expected)


def test_stability_skips_constant_columns():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((20, 4))
    X[1:, 3] = 0.0  # constant on almost every subsample
    y = X[:, 0] - X[:, 1] + 0.1 * rng.standard_normal(20)
    pr = ProblemSpec(X, y, make_builtin_loss("quadratic"), GroupStructure.single(4))
    rep = stability_selection(pr, 10, 0.5, seed=1)
    assert rep.n_skipped > 0


def test_stability_argument_checks(synth):
    with pytest.raises(ValueError):
        stability_selection(synth.problem, 5, 0.0)
    with pytest.raises(ValueError):
        stability_selection(synth.problem, 0, 0.5)
