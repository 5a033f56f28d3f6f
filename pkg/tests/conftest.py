import numpy as np
import pytest

from comlasso.losses import make_builtin_loss
from comlasso.model import GroupStructure, ProblemSpec


def random_regression(seed, n=20, p=10, sizes=None, d=None, loss="quadratic", h=None):
    rng = np.random.default_rng(seed)
    sizes = sizes or (p,)
    X = rng.standard_normal((n, sum(sizes)))
    y = rng.standard_normal(n) + X[:, 0] - X[:, 1]
    d = np.ones(sum(sizes)) if d is None else d
    return ProblemSpec(X, y, make_builtin_loss(loss, h=h), GroupStructure(tuple(sizes), d))


def random_classification(seed, n=28, sizes=(4, 4, 4, 3), loss="squared-hinge", h=None):
    rng = np.random.default_rng(seed)
    p = sum(sizes)
    X = rng.standard_normal((n, p))
    score = X[:, 0] - X[:, 1] + 0.5 * rng.standard_normal(n)
    y = np.where(score > 0, 1.0, -1.0)
    return ProblemSpec(X, y, make_builtin_loss(loss, h=h), GroupStructure.zero_sum(sizes))


@pytest.fixture
def toy3():
    """Identity design with X'y = (1, 1, -2): lambda_max = 1.5."""
    return ProblemSpec(np.eye(3), np.array([1.0, 1.0, -2.0]), make_builtin_loss("quadratic"),
                       GroupStructure.single(3))


def path_invariant_failures(problem, path, kkt_tol=1e-7, resid_tol=1e-10):
    """List of violated path invariants (empty when the path is sound)."""
    from comlasso.kkt import verify_kkt

    out = []
    lams = path.lambdas
    if np.any(np.diff(lams) >= 0):
        out.append("lambda not strictly decreasing")
    if np.any(path.kinks[0].beta != 0):
        out.append("first kink not zero")
    groups = problem.groups
    for t, kink in enumerate(path.kinks):
        b = kink.beta
        res = np.abs(groups.constraint_residuals(b))
        norms = np.bincount(groups.membership, weights=np.abs(b), minlength=groups.K)
        if np.any(res > resid_tol * np.maximum(1.0, norms)):
            out.append(f"constraint residual at kink {t}")
        for k in range(groups.K):
            idx = groups.constrained(k)
            n_on = np.count_nonzero(b[idx])
            if n_on == 1:
                out.append(f"group {k} has one active constrained member at kink {t}")
    for t in range(len(path) - 1):
        lam = 0.5 * (lams[t] + lams[t + 1])
        rep = verify_kkt(problem, path.beta_at(lam), lam, kkt_tol)
        if not rep.ok:
            out.append(f"midpoint KKT after kink {t}: {rep.worst_violation:.2e}")
    return out


ACCEPTANCE_LINES = []


def report_criterion(number, ok, detail):
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
