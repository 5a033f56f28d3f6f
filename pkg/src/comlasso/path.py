"""Exact solution path of the group zero-sum constrained lasso.

Starting from ``lambda_max`` with ``beta = 0``, the path is followed downward
in ``lambda``. On each linear piece the active coefficients move with
velocity ``b`` and the active group multipliers with velocity ``m`` (both per
unit decrease of ``lambda``), obtained from the equality-constrained system

    [ H      D_A ] [b]   [sign(beta_A)]
    [ D_A'   0   ] [m] = [     0      ]

with ``H = X_A' diag(2 a(r)) X_A``. A piece ends at the first of five
events: lambda reaches its floor, an active coefficient hits zero, an
observation crosses a loss knot, an inactive group can no longer keep all of
its coefficients at zero, or an inactive coefficient of an active group
reaches the subgradient boundary.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .kkt import initial_signs, lambda_max, verify_kkt
from .losses import MARGIN, loss_gradient_weights, locate_segments, residuals
from .model import Kink, PathState, SolutionPath, group_table

logger = logging.getLogger(__name__)

# event classes in tie-break order
DROP, KNOT, GROUP, COEF = "sign-drop", "knot-hit", "group-activate", "coeff-activate"


@dataclass
class PathOptions:
    """Tuning knobs of :func:`run_path`.

    ``max_kinks`` defaults to ``10 * min(n, p) + 100``. ``rank_tol`` is the
    reciprocal condition number below which the direction system counts as
    singular. ``tie_rtol`` (relative to ``lambda_max``) groups step
    candidates into simultaneous events. ``codrop_rtol`` decides when a
    coefficient left alone in its group by a drop is numerically zero.
    Events closer than ``floor_rtol * lambda_max`` to ``lambda_min`` are
    rounding noise of a saturated fit and end the path instead.
    """

    max_kinks: Optional[int] = None
    lambda_min: float = 0.0
    rank_tol: float = 1e-12
    tie_rtol: float = 1e-12
    codrop_rtol: float = 1e-8
    floor_rtol: float = 1e-9
    check_kkt: bool = False
    kkt_tol: float = 1e-8
    diagnostics: bool = False


class Direction(NamedTuple):
    b: np.ndarray
    m: np.ndarray
    solve_ok: bool
    rcond: float = np.nan


class Step(NamedTuple):
    delta: float
    hits: tuple


def _active_groups(state):
    return sorted(state.mu)


def compute_direction(problem, state, rank_tol=1e-12, ridge=None):
    """Solve the direction system for the current signed active set.

    Returns ``b`` aligned with ``state.active`` and ``m`` aligned with the
    sorted active groups. ``solve_ok`` is false when the system matrix is
    singular to ``rank_tol``; ``ridge`` adds a small diagonal to ``H`` and is
    meant for conditioning diagnostics only.
    """
    A = list(state.active)
    groups = _active_groups(state)
    X_A = problem.X[:, A]
    curvature, _ = loss_gradient_weights(problem.loss, problem.y, problem.X @ state.beta,
                                         state.segment_index)
    H = X_A.T @ (curvature[:, None] * X_A)
    if ridge:
        H = H + ridge * np.eye(len(A))
    member = problem.groups.membership
    d = problem.groups.d
    D_A = np.zeros((len(A), len(groups)))
    pos = {k: i for i, k in enumerate(groups)}
    for row, j in enumerate(A):
        k = member[j]
        if k in pos:
            D_A[row, pos[k]] = d[j]
    n_a, n_k = len(A), len(groups)
    M = np.zeros((n_a + n_k, n_a + n_k))
    M[:n_a, :n_a] = H
    M[:n_a, n_a:] = D_A
    M[n_a:, :n_a] = D_A.T
    rhs = np.concatenate([[state.signs[j] for j in A], np.zeros(n_k)])
    sv = np.linalg.svd(M, compute_uv=False)
    rcond = float(sv[-1] / sv[0]) if sv.size and sv[0] > 0 else 0.0
    if rcond < rank_tol:
        return Direction(np.zeros(n_a), np.zeros(n_k), False, rcond)
    sol = np.linalg.solve(M, rhs)
    return Direction(sol[:n_a], sol[n_a:], True, rcond)


def step_termination(state, lambda_min=0.0):
    return Step(max(state.lam - lambda_min, 0.0), ())


def step_sign_drop(state, direction, tie=0.0):
    """First zero crossing of an active coefficient; all indices within
    ``tie`` of it drop together."""
    A = np.asarray(state.active)
    if A.size == 0:
        return Step(np.inf, ())
    beta = state.beta[A]
    b = direction.b
    s = np.array([state.signs[j] for j in A])
    moving = b * s < 0
    if not np.any(moving):
        return Step(np.inf, ())
    cand = np.full(A.size, np.inf)
    cand[moving] = np.maximum(-beta[moving] / b[moving], 0.0)
    delta = float(cand.min())
    return Step(delta, tuple(int(j) for j in A[cand <= delta + tie]))


def _residual_slope(problem, eta_dot):
    if problem.loss.residual_kind == MARGIN:
        return problem.y * eta_dot
    return -eta_dot


def step_knot_hit(problem, state, eta_dot, tie=0.0):
    """First time an observation's residual or margin reaches the edge of its
    loss segment. Hits are ``(i, +1 | -1)`` for the direction of travel."""
    knots = np.asarray(problem.loss.knots, dtype=float)
    if knots.size == 0:
        return Step(np.inf, ())
    r = residuals(problem.loss, problem.y, problem.X @ state.beta)
    slope = _residual_slope(problem, eta_dot)
    seg = state.segment_index
    upper = np.append(knots, np.inf)[seg]
    lower = np.concatenate(([-np.inf], knots))[seg]
    cand = np.full(r.size, np.inf)
    up = slope > 0
    dn = slope < 0
    cand[up] = np.maximum((upper[up] - r[up]) / slope[up], 0.0)
    cand[dn] = np.maximum((lower[dn] - r[dn]) / slope[dn], 0.0)
    delta = float(cand.min())
    if not np.isfinite(delta):
        return Step(np.inf, ())
    hit = np.flatnonzero(cand <= delta + tie)
    return Step(delta, tuple((int(i), 1 if slope[i] > 0 else -1) for i in hit))


def step_dual_feasibility(problem, state, grad, grad_dot, tie=0.0, table=None):
    """First ``delta`` at which an inactive group's multiplier interval
    closes. Returns hit ``(k, j, j_prime, mu_k)`` where ``j`` binds at the
    ``+lam`` boundary and ``j_prime`` at ``-lam``; the interval is evaluated
    over all ordered pairs of the group's constrained indices.

    A group outside the active set has no active constrained coefficient, so
    every constrained index of it is a candidate.
    """
    if table is None:
        table = group_table(problem.groups)
    off = np.ones(problem.groups.K, dtype=bool)
    off[list(state.mu)] = False
    ks = np.flatnonzero(off)
    if ks.size == 0:
        return Step(np.inf, ())
    idx = table[ks]
    valid = idx >= 0
    safe = np.where(valid, idx, 0)
    d = problem.groups.d[safe]
    d = np.where(valid, d, 1.0)
    ratio0 = grad[safe] / d
    ratio1 = grad_dot[safe] / d
    inv = 1.0 / np.abs(d)
    lam = state.lam
    # gap(delta) = hi_j(delta) - lo_j'(delta) = f0 + f1 * delta
    sum_inv = inv[:, :, None] + inv[:, None, :]
    f0 = lam * sum_inv - ratio0[:, :, None] + ratio0[:, None, :]
    f1 = -sum_inv - ratio1[:, :, None] + ratio1[:, None, :]
    ok = valid[:, :, None] & valid[:, None, :]
    ok &= ~np.eye(idx.shape[1], dtype=bool)[None, :, :]
    ok &= f1 < 0
    if not np.any(ok):
        return Step(np.inf, ())
    cand = np.full(f0.shape, np.inf)
    cand[ok] = np.maximum(f0[ok] / -f1[ok], 0.0)
    flat = int(np.argmin(cand))
    delta = float(cand.flat[flat])
    if not np.isfinite(delta):
        return Step(np.inf, ())
    gi, a, b = np.unravel_index(flat, cand.shape)
    j, jp = int(idx[gi, a]), int(idx[gi, b])
    mu = (lam - delta) * inv[gi, a] - (ratio0[gi, a] + delta * ratio1[gi, a])
    return Step(delta, ((int(ks[gi]), j, jp, float(mu)),))


def step_stationarity(problem, state, grad, grad_dot, mu_dot, tie=0.0):
    """First ``delta`` at which an inactive coefficient that can move on its
    own reaches the boundary of the subgradient tube.

    Candidates are inactive indices of active groups and inactive indices
    with zero constraint weight. Hits are ``(j, sign)``: ``-1`` when the
    ``+lam`` boundary binds and ``+1`` at ``-lam``.
    """
    groups = problem.groups
    member = groups.membership
    d = groups.d
    K = groups.K
    mu_k = np.zeros(K)
    mdot_k = np.zeros(K)
    dual_on = np.zeros(K, dtype=bool)
    for k, v in state.mu.items():
        mu_k[k], mdot_k[k], dual_on[k] = v, mu_dot.get(k, 0.0), True
    inactive = np.ones(problem.p, dtype=bool)
    inactive[list(state.signs)] = False
    J = np.flatnonzero(inactive & ((d == 0) | dual_on[member]))
    if J.size == 0:
        return Step(np.inf, ())
    mu = np.where(d[J] != 0, mu_k[member[J]], 0.0)
    mdot = np.where(d[J] != 0, mdot_k[member[J]], 0.0)
    c0 = grad[J] + d[J] * mu
    c1 = grad_dot[J] + d[J] * mdot
    lam = state.lam
    up = np.full(J.size, np.inf)
    dn = np.full(J.size, np.inf)
    rising = c1 + 1 > 0
    falling = 1 - c1 > 0
    up[rising] = np.maximum((lam - c0[rising]) / (c1[rising] + 1), 0.0)
    dn[falling] = np.maximum((lam + c0[falling]) / (1 - c1[falling]), 0.0)
    best = np.minimum(up, dn)
    delta = float(best.min())
    if not np.isfinite(delta):
        return Step(np.inf, ())
    hits = []
    for i in np.flatnonzero(best <= delta + tie):
        hits.append((int(J[i]), -1.0 if up[i] <= dn[i] else 1.0))
    return Step(delta, tuple(hits))


def _refresh_mu(problem, state, grad):
    """Re-derive active-group multipliers from the active stationarity rows."""
    if not state.mu:
        return
    d = problem.groups.d
    A = np.asarray(state.active)
    A = A[d[A] != 0]
    s = np.array([state.signs[j] for j in A])
    vals = -(grad[A] + state.lam * s) / d[A]
    k = problem.groups.membership[A]
    K = problem.groups.K
    sums = np.bincount(k, weights=vals, minlength=K)
    counts = np.bincount(k, minlength=K)
    for g in state.mu:
        if counts[g]:
            state.mu[g] = float(sums[g] / counts[g])


def _constrained_active(problem, state, k):
    d = problem.groups.d
    member = problem.groups.membership
    return [j for j in state.active if member[j] == k and d[j] != 0]


def advance(problem, state, direction, delta, events, opts, lam_max):
    """Move along the current piece by ``delta`` and apply ``events``.

    ``events`` maps event class to its hits. Returns the list of event labels
    applied, or raises ``RuntimeError`` for an inconsistent drop.
    """
    A = list(state.active)
    groups = _active_groups(state)
    state.beta[A] += delta * direction.b
    for k, mk in zip(groups, direction.m):
        state.mu[k] += delta * mk
    state.lam = max(state.lam - delta, opts.lambda_min)
    labels = []
    if events.get(DROP):
        labels.append(DROP)
        for j in events[DROP]:
            _deactivate(state, j)
        scale = max(1.0, float(np.max(np.abs(state.beta))))
        for k in list(state.mu):
            rest = _constrained_active(problem, state, k)
            if len(rest) == 1:
                j = rest[0]
                if abs(state.beta[j]) > opts.codrop_rtol * scale:
                    raise RuntimeError(f"group {k} left with a single nonzero coefficient {j}")
                _deactivate(state, j)
                rest = []
            if not rest:
                del state.mu[k]
    if events.get(KNOT):
        labels.append(KNOT)
        for i, direction_of_travel in events[KNOT]:
            state.segment_index[i] += direction_of_travel
    if events.get(GROUP):
        labels.append(GROUP)
        k, j, jp, mu = events[GROUP][0]
        d = problem.groups.d
        state.mu[k] = mu
        for idx, sgn in ((j, -np.sign(d[j])), (jp, np.sign(d[jp]))):
            state.active.append(idx)
            state.signs[idx] = float(sgn)
    if events.get(COEF):
        labels.append(COEF)
        for j, sgn in events[COEF]:
            state.active.append(j)
            state.signs[j] = float(sgn)
    state.active.sort()
    return labels


def _deactivate(state, j):
    state.beta[j] = 0.0
    if j in state.signs:
        del state.signs[j]
        state.active.remove(j)


def _initial_state(problem, lm):
    p = problem.p
    beta = np.zeros(p)
    r = residuals(problem.loss, problem.y, np.zeros(problem.n))
    seg = locate_segments(problem.loss, r)
    g = problem.gradient(beta, seg)
    k, j, jp = lm.triplet
    if jp is None:
        signs = {j: -float(np.sign(g[j]))}
        mu = {}
    else:
        signs = initial_signs(lm.triplet, problem.groups.d, g, lm.value, lm.mu)
        mu = {k: lm.mu}
    return PathState(lm.value, beta, mu, sorted(signs), signs, seg.astype(int))


def _snapshot(state, event):
    return Kink(float(state.lam), state.beta.copy(), dict(state.mu), event)


def run_path(problem, options=None, **kwargs):
    """Trace the full coefficient path from ``lambda_max`` down to
    ``options.lambda_min``.

    Parameters
    ----------
    problem : ProblemSpec
    options : PathOptions, optional
        Keyword arguments are forwarded to :class:`PathOptions` when
        ``options`` is omitted.

    Returns
    -------
    SolutionPath
        ``status`` is ``completed`` when the floor was reached,
        ``degenerate-kkt`` when the direction system became singular or the
        path stalled, and ``max-kinks-reached`` otherwise.
    """
    opts = options or PathOptions(**kwargs)
    max_kinks = opts.max_kinks or 10 * min(problem.n, problem.p) + 100
    lm = lambda_max(problem)
    path = SolutionPath(lambda_max=lm.value, n_groups=problem.groups.K)
    if lm.value <= opts.lambda_min:
        path.kinks.append(Kink(max(lm.value, opts.lambda_min) if lm.triplet else lm.value,
                               np.zeros(problem.p), {}, "init"))
        path.message = lm.status
        return path
    state = _initial_state(problem, lm)
    path.kinks.append(_snapshot(state, "init"))
    tie = opts.tie_rtol * max(1.0, lm.value)
    table = group_table(problem.groups)
    zero_steps = 0

    while True:
        if len(path.kinks) >= max_kinks:
            path.status = "max-kinks-reached"
            break
        direction = compute_direction(problem, state, opts.rank_tol)
        if not direction.solve_ok:
            path.status = "degenerate-kkt"
            path.message = f"singular direction system at lambda={state.lam:.6g}"
            if opts.diagnostics:
                ridged = compute_direction(problem, state, 0.0, ridge=1e-10)
                path.message += f" (ridged rcond {ridged.rcond:.3g})"
            break
        A = list(state.active)
        b_full = np.zeros(problem.p)
        b_full[A] = direction.b
        eta_dot = problem.X @ b_full
        curvature, _ = loss_gradient_weights(problem.loss, problem.y, problem.X @ state.beta,
                                             state.segment_index)
        grad = problem.gradient(state.beta, state.segment_index)
        grad_dot = problem.X.T @ (curvature * eta_dot)
        mu_dot = dict(zip(_active_groups(state), direction.m))

        steps = {
            "end": step_termination(state, opts.lambda_min),
            DROP: step_sign_drop(state, direction, tie),
            KNOT: step_knot_hit(problem, state, eta_dot, tie),
            GROUP: step_dual_feasibility(problem, state, grad, grad_dot, tie, table),
            COEF: step_stationarity(problem, state, grad, grad_dot, mu_dot, tie),
        }
        delta = min(s.delta for s in steps.values())
        events = {name: s.hits for name, s in steps.items()
                  if name != "end" and s.delta <= delta + tie}
        finished = steps["end"].delta <= delta + max(tie, opts.floor_rtol * lm.value)
        if finished:
            delta = steps["end"].delta
            events = {name: hits for name, hits in events.items() if name == DROP}

        try:
            labels = advance(problem, state, direction, delta, events, opts, lm.value)
        except RuntimeError as exc:
            path.status = "degenerate-kkt"
            path.message = str(exc)
            break
        keep = np.zeros(problem.p, dtype=bool)
        keep[list(state.signs)] = True
        state.beta[~keep] = 0.0
        grad = problem.gradient(state.beta, state.segment_index)
        _refresh_mu(problem, state, grad)

        if finished:
            state.lam = opts.lambda_min
            labels.append("terminate")
        label = "+".join(labels) if labels else "terminate"
        if delta <= tie and not finished:
            zero_steps += 1
            if zero_steps >= 2:
                path.status = "degenerate-kkt"
                path.message = f"path stalled at lambda={state.lam:.6g}"
                break
            # a zero-length step changes the active set but not the kink
            path.kinks[-1] = Kink(path.kinks[-1].lam, state.beta.copy(), dict(state.mu),
                                  path.kinks[-1].event + "+" + label)
        else:
            zero_steps = 0
            path.kinks.append(_snapshot(state, label))
        if opts.check_kkt:
            report = verify_kkt(problem, state.beta, state.lam, opts.kkt_tol)
            if not report.ok:
                logger.warning("kink %d fails KKT check (%.3g)", len(path.kinks) - 1,
                               report.worst_violation)
        if finished:
            break
    return path
