"""Optimality conditions for the group zero-sum constrained lasso.

Stationarity reads ``grad_j L(beta) + d_j mu_k(j) + lam * s_j = 0`` with
``s_j = sign(beta_j)`` on the active set and ``|s_j| <= 1`` elsewhere. For a
group whose coefficients are all zero the multiplier ``mu_k`` is not pinned
down; the admissible values form an interval.
"""

from __future__ import annotations

from typing import NamedTuple, Optional

import numpy as np

# relative width under which two candidate values of the same max are a tie
TIE_RTOL = 1e-12


class DualInterval(NamedTuple):
    """Admissible ``mu_k`` for an inactive group, ``lo <= mu_k <= hi``.

    ``lo`` and ``hi`` are affine in the step ``delta`` and stored as
    ``(intercept, slope)``; the witnesses are the indices attaining them.
    """

    group: int
    lo: tuple
    hi: tuple
    lo_argmax: int
    hi_argmin: int

    def at(self, delta=0.0):
        return self.lo[0] + self.lo[1] * delta, self.hi[0] + self.hi[1] * delta

    @property
    def empty(self):
        lo, hi = self.at(0.0)
        return lo > hi


class LambdaMax(NamedTuple):
    value: float
    triplet: Optional[tuple]
    mu: Optional[float]
    status: str


class KKTReport(NamedTuple):
    ok: bool
    mu: dict
    worst_violation: float


def gradient_scale(problem):
    """``max(1, ||grad L(0)||_inf)``; KKT tolerances are relative to this."""
    g0 = problem.gradient(np.zeros(problem.p))
    return max(1.0, float(np.max(np.abs(g0))) if g0.size else 1.0)


def dual_feasible_interval(gradient, lam, groups, k, gradient_slope=None):
    """Interval of ``mu_k`` keeping every index of group ``k`` inside the
    subgradient tube of half-width ``lam``, assuming all of them are zero.

    With ``gradient_slope`` the bounds are returned as functions of a step
    ``delta`` along which the gradient moves by ``delta * gradient_slope``
    and the tube shrinks to ``lam - delta``.
    """
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    idx = groups.constrained(k)
    if idx.size == 0:
        raise ValueError(f"group {k} has no index with nonzero constraint weight")
    d = groups.d[idx]
    g = np.asarray(gradient, dtype=float)[idx]
    v = np.zeros_like(g) if gradient_slope is None else np.asarray(gradient_slope, float)[idx]
    inv = 1.0 / np.abs(d)
    lo0, lo1 = -lam * inv - g / d, inv - v / d
    hi0, hi1 = lam * inv - g / d, -inv - v / d
    a = int(np.argmax(lo0))
    b = int(np.argmin(hi0))
    return DualInterval(k, (float(lo0[a]), float(lo1[a])), (float(hi0[b]), float(hi1[b])),
                        int(idx[a]), int(idx[b]))


def _pair_table(g, d):
    """``lam`` at which the hi-bound of ``j`` meets the lo-bound of ``j'``,
    for every ordered pair (rows ``j``, columns ``j'``)."""
    ratio = g / d
    inv = 1.0 / np.abs(d)
    table = (ratio[:, None] - ratio[None, :]) / (inv[:, None] + inv[None, :])
    np.fill_diagonal(table, -np.inf)
    return table


def lambda_max(problem, gradient=None):
    """Smallest ``lam`` for which ``beta = 0`` solves the problem.

    Returns the value, the activating triplet ``(k, j, j_prime)`` and the
    multiplier of group ``k`` at that point. ``j`` is the index whose
    ``+lam`` tube boundary binds (it enters with sign ``-sign(d_j)``),
    ``j_prime`` the one at ``-lam`` (sign ``+sign(d_j')``). Exact ties go to
    the lexicographically smallest triplet.

    If an index with ``d_j = 0`` dominates, the triplet is ``(k, j, None)``
    and ``mu`` is ``None``: that coefficient enters on its own.
    """
    groups = problem.groups
    g = problem.gradient(np.zeros(problem.p)) if gradient is None else np.asarray(gradient, float)
    best, best_trip = -np.inf, None
    for k in range(groups.K):
        idx = groups.constrained(k)
        table = _pair_table(g[idx], groups.d[idx])
        top = table.max()
        if best_trip is None or top > best + TIE_RTOL * max(1.0, abs(best)):
            rows, cols = np.nonzero(table >= top - TIE_RTOL * max(1.0, abs(top)))
            first = np.lexsort((cols, rows))[0]
            best, best_trip = float(top), (k, int(idx[rows[first]]), int(idx[cols[first]]))
    free = np.flatnonzero(groups.d == 0)
    if free.size:
        j = int(free[np.argmax(np.abs(g[free]))])
        if best_trip is None or abs(g[j]) > best + TIE_RTOL * max(1.0, best):
            best, best_trip = float(abs(g[j])), (int(groups.membership[j]), j, None)
    if best <= 0:
        return LambdaMax(0.0, None, None, "trivial path")
    k, j, jp = best_trip
    if jp is None:
        return LambdaMax(best, best_trip, None, "ok")
    mu = best / abs(groups.d[j]) - g[j] / groups.d[j]
    return LambdaMax(best, best_trip, float(mu), "ok")


def initial_signs(triplet, d, gradient=None, lam=None, mu=None, tol=1e-8):
    """Signs of the two coefficients entering at ``lambda_max``.

    The index sitting on the ``+lam`` boundary enters negative and the one on
    ``-lam`` enters positive. When ``gradient``, ``lam`` and ``mu`` are given
    the binding side is read off the data; otherwise the triplet convention of
    :func:`lambda_max` is used.
    """
    _, j, jp = triplet
    if gradient is None:
        if jp is None:
            raise ValueError("a lone entering index needs the gradient to fix its sign")
        return {j: -float(np.sign(d[j])), jp: float(np.sign(d[jp]))}
    scale = max(1.0, abs(lam))
    out = {}
    for idx in (j, jp):
        if idx is None:
            continue
        c = gradient[idx] + (0.0 if mu is None else d[idx] * mu)
        if abs(c - lam) <= tol * scale:
            out[idx] = -1.0
        elif abs(c + lam) <= tol * scale:
            out[idx] = 1.0
        else:
            raise RuntimeError(f"index {idx} is not on the tube boundary ({c} vs +/-{lam})")
    if jp is not None and out[j] * np.sign(d[j]) == out[jp] * np.sign(d[jp]):
        raise RuntimeError("entering pair would violate the group constraint")
    return out


def _group_minimax(centers, slack, scale):
    """Minimise ``max_j scale_j * max(0, |mu - center_j| - slack_j)`` over mu.

    Returns ``(mu, value)``.
    """
    inv = 1.0 / scale
    lo = centers - slack
    hi = centers + slack
    need = (lo[:, None] - hi[None, :]) / (inv[:, None] + inv[None, :])
    t = max(0.0, float(need.max()))
    left = np.max(lo - t * inv)
    right = np.min(hi + t * inv)
    return 0.5 * (left + right), t


def verify_kkt(problem, beta, lam, tol=1e-8, zero_tol=1e-12):
    """Check stationarity, dual feasibility and the group constraints.

    Stationarity violations are measured relative to
    :func:`gradient_scale`; constraint residuals relative to
    ``max(1, ||beta_k||_1)``. ``worst_violation`` is the larger of the two
    and ``ok`` means it is within ``tol``. ``mu`` holds, for every group, the
    multiplier that minimises the worst stationarity violation.
    """
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    groups = problem.groups
    beta = np.asarray(beta, dtype=float)
    g = problem.gradient(beta)
    scale = gradient_scale(problem)
    cut = zero_tol * max(1.0, float(np.max(np.abs(beta))) if beta.size else 1.0)
    active = np.abs(beta) > cut
    s = np.where(active, np.sign(beta), 0.0)
    worst = 0.0
    mus = {}
    for k in range(groups.K):
        idx = groups.indices(k)
        d = groups.d[idx]
        on = d != 0
        ci = idx[on]
        centers = np.where(active[ci], (-g[ci] - lam * s[ci]) / d[on], -g[ci] / d[on])
        slack = np.where(active[ci], 0.0, lam / np.abs(d[on]))
        mu, t = _group_minimax(centers, slack, np.abs(d[on]))
        mus[k] = float(mu)
        worst = max(worst, t / scale)
        free = idx[~on]
        if free.size:
            viol = np.where(active[free], np.abs(g[free] + lam * s[free]),
                            np.maximum(0.0, np.abs(g[free]) - lam))
            worst = max(worst, float(viol.max()) / scale)
        resid = abs(float(d @ beta[idx])) / max(1.0, float(np.abs(beta[idx]).sum()))
        worst = max(worst, resid)
    return KKTReport(worst <= tol, mus, worst)
