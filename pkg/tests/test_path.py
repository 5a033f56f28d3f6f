import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from comlasso.kkt import lambda_max, verify_kkt
from comlasso.losses import make_builtin_loss
from comlasso.model import GroupStructure, ProblemSpec
from comlasso.oracle import solve_fixed_lambda
from comlasso.path import PathOptions, run_path

from conftest import path_invariant_failures, random_classification, random_regression


def test_toy_path(toy3):
    path = run_path(toy3)
    assert path.status == "completed"
    assert path.lambdas[0] == pytest.approx(1.5)
    # indices 0 and 1 tie at lambda_max, so the second joins at a zero-length step
    assert path.events[0] == "init+coeff-activate"
    assert path.lambda_end == 0.0
    # at lambda = 0 the fit is the constrained least-squares solution
    np.testing.assert_allclose(path.betas[-1], [1.0, 1.0, -2.0], atol=1e-12)
    assert not path_invariant_failures(toy3, path)


def test_trivial_path_has_one_kink():
    pr = ProblemSpec(np.eye(3), np.zeros(3), make_builtin_loss("quadratic"), GroupStructure.single(3))
    path = run_path(pr)
    assert len(path) == 1 and np.all(path.betas == 0)


@pytest.mark.parametrize("seed", range(5))
def test_regression_path_matches_oracle(seed):
    pr = random_regression(seed)
    path = run_path(pr)
    assert path.status == "completed"
    for lam, beta in zip(path.lambdas, path.betas):
        res = solve_fixed_lambda(pr, lam, tol=1e-10)
        assert np.max(np.abs(res.beta - beta)) < 1e-6
    assert not path_invariant_failures(pr, path)


@pytest.mark.parametrize("seed", range(3))
def test_grouped_path_with_general_weights(seed):
    rng = np.random.default_rng(seed)
    d = rng.uniform(0.5, 2, 9) * rng.choice([-1, 1], 9)
    pr = random_regression(seed, n=25, sizes=(3, 3, 3), d=d)
    path = run_path(pr)
    assert path.status == "completed"
    assert not path_invariant_failures(pr, path)


def test_unconstrained_member():
    d = np.array([1.0, 1.0, 1.0, 0.0, 0.0])
    pr = random_regression(7, n=30, sizes=(5,), d=d)
    path = run_path(pr)
    assert path.status == "completed"
    assert not path_invariant_failures(pr, path)


@pytest.mark.parametrize("seed", range(3))
def test_classification_path_kkt(seed):
    pr = random_classification(seed)
    path = run_path(pr)
    assert path.status in ("completed", "degenerate-kkt")
    assert not path_invariant_failures(pr, path)
    assert any("group-activate" in e for e in path.events[1:])


def test_huber_path_has_knot_hits():
    pr = random_regression(2, n=30, p=8, loss="huber-regression", h=0.5)
    path = run_path(pr)
    assert any("knot-hit" in e for e in path.events)
    assert not path_invariant_failures(pr, path)


def test_lambda_min_stops_early(toy3):
    path = run_path(toy3, lambda_min=1.0)
    assert path.lambda_end == pytest.approx(1.0)
    assert verify_kkt(toy3, path.betas[-1], 1.0).ok


def test_lambda_min_above_lambda_max(toy3):
    path = run_path(toy3, lambda_min=3.0)
    assert len(path) == 1 and np.all(path.betas == 0)


def test_max_kinks_truncates():
    pr = random_regression(0)
    path = run_path(pr, max_kinks=3)
    assert path.status == "max-kinks-reached" and len(path) == 3


def test_collinear_design_reports_degenerate():
    rng = np.random.default_rng(0)
    x = rng.standard_normal(10)
    X = np.column_stack([x, x, -x, rng.standard_normal(10)])
    pr = ProblemSpec(X, x + 0.01 * rng.standard_normal(10), make_builtin_loss("quadratic"),
                     GroupStructure.single(4))
    path = run_path(pr)
    assert path.status in ("completed", "degenerate-kkt")
    # every recorded kink is still optimal
    for lam, beta in zip(path.lambdas, path.betas):
        assert verify_kkt(pr, beta, lam, 1e-7).ok


def test_wide_design_saturates():
    pr = random_regression(1, n=10, p=30)
    path = run_path(pr)
    assert path.status == "completed"
    assert np.count_nonzero(path.betas[-1]) <= 11
    assert not path_invariant_failures(pr, path)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_random_paths_satisfy_invariants(seed):
    rng = np.random.default_rng(seed)
    sizes = tuple(int(s) for s in rng.integers(2, 5, int(rng.integers(1, 4))))
    pr = random_regression(seed, n=int(rng.integers(8, 25)), sizes=sizes)
    path = run_path(pr)
    assert path.status == "completed"
    assert path.lambdas[0] == pytest.approx(lambda_max(pr).value)
    assert not path_invariant_failures(pr, path)
