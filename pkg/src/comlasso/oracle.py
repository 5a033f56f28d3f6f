"""Fixed-lambda reference solvers used to check the path.

``solve_fixed_lambda`` runs accelerated proximal gradient with an exact
proximal map of ``lam * ||w * beta||_1`` restricted to the constraint
subspace. The map separates over groups and, inside a group, reduces to
finding the root of a monotone piecewise-linear function of one scalar
multiplier. ``brute_force_tiny`` enumerates a grid on the constraint
subspace and is only meant for a handful of coefficients.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np
from scipy.linalg import null_space

from .kkt import gradient_scale
from .losses import loss_gradient_weights, loss_value
from .model import group_table

# groups up to this many constrained members use the batched prox
BATCH_WIDTH = 64


class OracleResult(NamedTuple):
    beta: np.ndarray
    objective: float
    converged: bool
    iterations: int


class GridResult(NamedTuple):
    beta: np.ndarray
    objective: float
    on_boundary: bool


def _soft(v, t):
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def prox_group(v, d, thresh):
    """``argmin_x sum(thresh * |x|) + 0.5 ||x - v||^2`` s.t. ``d' x = 0``.

    ``x(nu) = soft(v - nu * d, thresh)`` and ``phi(nu) = d' x(nu)`` is
    nonincreasing and piecewise linear; its root is found exactly from the
    sorted breakpoints.
    """
    v = np.asarray(v, dtype=float)
    thresh = np.broadcast_to(np.asarray(thresh, dtype=float), v.shape)
    on = d != 0
    x = _soft(v, thresh)
    if not np.any(on):
        return x
    vc, dc, tc = v[on], d[on], thresh[on]

    def phi(nu):
        return float(dc @ _soft(vc - nu * dc, tc))

    knots = np.unique(np.concatenate(((vc - tc) / dc, (vc + tc) / dc)))
    total = float(dc @ dc)
    # outside the breakpoints phi is linear with slope -sum(d^2)
    first, last = phi(knots[0]), phi(knots[-1])
    if first < 0:
        nu = knots[0] + first / total
    elif last > 0:
        nu = knots[-1] + last / total
    else:
        # bisect for the first breakpoint with phi <= 0
        lo, hi = 0, knots.size - 1
        f_lo, f_hi = first, last
        if f_lo <= 0:
            hi, f_hi = 0, f_lo
        while hi - lo > 1:
            mid = (lo + hi) // 2
            f_mid = phi(knots[mid])
            if f_mid <= 0:
                hi, f_hi = mid, f_mid
            else:
                lo, f_lo = mid, f_mid
        if hi == 0 or f_hi == 0:
            nu = knots[hi]
        else:
            a, b = knots[lo], knots[hi]
            nu = a + (b - a) * f_lo / (f_lo - f_hi)
    x[on] = _soft(vc - nu * dc, tc)
    return x


def _prox_batched(v, thresh, d, table):
    """:func:`prox_group` for every row of a padded index table at once.

    ``phi`` is evaluated at all sorted breakpoints of each group and the
    root is read off by linear interpolation between the bracketing pair.
    """
    valid = table >= 0
    safe = np.where(valid, table, 0)
    V, T = v[safe], thresh[safe]
    D = np.where(valid, d[safe], 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        knots = np.concatenate(((V - T) / D, (V + T) / D), axis=1)
    pad = np.concatenate((valid, valid), axis=1)
    knots = np.where(pad, knots, knots[:, :1])
    knots.sort(axis=1)
    X = _soft(V[:, None, :] - knots[:, :, None] * D[:, None, :], T[:, None, :])
    phi = np.einsum("kmj,kj->km", X, D)
    total = np.sum(D * D, axis=1)
    rows = np.arange(table.shape[0])
    # first breakpoint with phi <= 0 (phi is nonincreasing)
    hi = np.argmax(phi <= 0, axis=1)
    none = ~np.any(phi <= 0, axis=1)
    lo = np.maximum(hi - 1, 0)
    f_lo, f_hi = phi[rows, lo], phi[rows, hi]
    a, b = knots[rows, lo], knots[rows, hi]
    with np.errstate(divide="ignore", invalid="ignore"):
        nu = np.where(f_lo > f_hi, a + (b - a) * f_lo / (f_lo - f_hi), b)
    first = phi[:, 0] < 0
    nu = np.where(first, knots[:, 0] + phi[:, 0] / total, nu)
    nu = np.where(none, knots[:, -1] + phi[:, -1] / total, nu)
    return _soft(V - nu[:, None] * D, T), valid


def prox_constrained_l1(v, groups, thresh, table=None):
    """Exact prox of the weighted l1 norm on ``{beta : D' beta = 0}``."""
    v = np.asarray(v, dtype=float)
    thresh = np.broadcast_to(np.asarray(thresh, dtype=float), v.shape)
    if table is None:
        table = group_table(groups)
    if table.shape[1] > BATCH_WIDTH:
        out = np.empty_like(v)
        for k in range(groups.K):
            s = groups.slice(k)
            out[s] = prox_group(v[s], groups.d[s], thresh[s])
        return out
    out = _soft(v, thresh)
    X, valid = _prox_batched(v, thresh, groups.d, table)
    out[table[valid]] = X[valid]
    return out


def _lipschitz(problem, iters=50, seed=0):
    """``2 * max(a) * ||X||_op^2`` via power iteration."""
    X = problem.X
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(X.shape[1])
    sigma2 = 0.0
    for _ in range(iters):
        w = X.T @ (X @ v)
        norm = np.linalg.norm(w)
        if norm == 0:
            break
        sigma2 = norm / max(np.linalg.norm(v), 1e-300)
        v = w / norm
    return max(2.0 * problem.loss.max_curvature * sigma2 * 1.01, 1e-12)


def solve_fixed_lambda(problem, lam, penalty_weights=None, tol=1e-9, max_iter=200_000,
                       beta0=None):
    """Minimise ``L(beta) + lam * sum(w_j |beta_j|)`` subject to the group
    constraints.

    Convergence is declared when the gradient-mapping residual falls below
    ``tol`` relative to ``max(1, ||grad L(0)||_inf)``. Hitting ``max_iter``
    returns ``converged=False``.
    """
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    p = problem.p
    w = np.ones(p) if penalty_weights is None else np.asarray(penalty_weights, dtype=float)
    groups = problem.groups
    scale = gradient_scale(problem)
    step = 1.0 / _lipschitz(problem)
    table = group_table(groups)
    x = np.zeros(p) if beta0 is None else prox_constrained_l1(np.asarray(beta0, float), groups, 0.0,
                                                              table)
    X, resp, loss = problem.X, problem.y, problem.loss

    def total_loss(eta):
        return float(np.sum(loss_value(loss, resp, eta)))

    # linear predictors are carried along with the iterates to save products
    y, eta_x = x.copy(), X @ x
    eta_y = eta_x.copy()
    t = 1.0
    f_x = total_loss(eta_x) + lam * float(w @ np.abs(x))
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        _, slope = loss_gradient_weights(loss, resp, eta_y)
        g = X.T @ slope
        Ly = float(np.sum(loss_value(loss, resp, eta_y)))
        while True:
            x_new = prox_constrained_l1(y - step * g, groups, step * lam * w, table)
            diff = x_new - y
            eta_new = X @ x_new
            L_new = total_loss(eta_new)
            if L_new <= Ly + g @ diff + diff @ diff / (2 * step) + 1e-12 * max(1.0, abs(Ly)):
                break
            step *= 0.5
        f_new = L_new + lam * float(w @ np.abs(x_new))
        resid = np.max(np.abs(diff)) / step if diff.size else 0.0
        if resid <= tol * scale:
            if f_new <= f_x:
                x, f_x = x_new, f_new
            converged = True
            break
        if f_new > f_x + 1e-15 * max(1.0, abs(f_x)):
            # adaptive restart
            t = 1.0
            y, eta_y = x.copy(), eta_x.copy()
            continue
        t_new = 0.5 * (1 + np.sqrt(1 + 4 * t * t))
        c = (t - 1) / t_new
        y = x_new + c * (x_new - x)
        eta_y = eta_new + c * (eta_new - eta_x)
        x, eta_x, f_x, t = x_new, eta_new, f_new, t_new
    return OracleResult(x, problem.objective(x, lam, w), converged, it)


def brute_force_tiny(problem, lam, grid_radius=2.0, grid_step=0.01, penalty_weights=None):
    """Grid search over the constraint subspace of a single-group problem.

    The null space of ``d'`` is parameterised by an orthonormal basis and
    each coordinate is gridded on ``[-grid_radius, grid_radius]``.
    ``on_boundary`` flags a minimiser on the edge of the grid, which means
    the box was too small to certify it.
    """
    if problem.p > 4 or problem.groups.K != 1:
        raise ValueError("brute force is limited to one group of at most 4 coefficients")
    basis = null_space(problem.groups.d[None, :])
    w = np.ones(problem.p) if penalty_weights is None else np.asarray(penalty_weights, float)
    axis = np.arange(-grid_radius, grid_radius + grid_step / 2, grid_step)
    mesh = np.stack(np.meshgrid(*([axis] * basis.shape[1]), indexing="ij"), axis=-1)
    coords = mesh.reshape(-1, basis.shape[1])
    betas = coords @ basis.T
    eta = betas @ problem.X.T
    losses = np.sum(loss_value(problem.loss, problem.y[None, :], eta), axis=1)
    obj = losses + lam * np.abs(betas) @ w
    best = int(np.argmin(obj))
    edge = np.any(np.abs(np.abs(coords[best]) - grid_radius) < grid_step / 2)
    return GridResult(betas[best], float(obj[best]), bool(edge))
