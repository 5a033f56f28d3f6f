"""Piecewise-quadratic losses.

A loss is ``l(r) = a(r) r**2 + b(r) r + c(r)`` where ``a, b, c`` are constant
on the intervals cut out by a sorted list of knots. ``r`` is either the
residual ``y - eta`` (regression) or the margin ``y * eta`` (classification),
with ``eta = x' beta``.

A value of ``r`` lying exactly on a knot belongs to the segment on its left.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

RESIDUAL = "residual"
MARGIN = "margin"

BUILTIN_LOSSES = (
    "quadratic",
    "asymmetric-l2",
    "huber-regression",
    "squared-hinge",
    "huber-hinge",
)


@dataclass(frozen=True)
class LossSpec:
    """Segment table of a piecewise-quadratic loss.

    Parameters
    ----------
    knots : tuple of float
        Strictly increasing breakpoints ``t_1 < ... < t_m``.
    segments : tuple of (a, b, c)
        ``m + 1`` coefficient triples, one per interval.
    residual_kind : {"residual", "margin"}
        How ``r`` is formed from ``y`` and ``eta``.
    name : str
        Label used in reports.
    """

    knots: tuple
    segments: tuple
    residual_kind: str = RESIDUAL
    name: str = "custom"

    def __post_init__(self):
        knots = tuple(float(t) for t in self.knots)
        segments = tuple(tuple(float(v) for v in seg) for seg in self.segments)
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "segments", segments)
        if self.residual_kind not in (RESIDUAL, MARGIN):
            raise ValueError(f"unknown residual_kind {self.residual_kind!r}")
        if len(segments) != len(knots) + 1:
            raise ValueError("need exactly one more segment than knots")
        if any(len(seg) != 3 for seg in segments):
            raise ValueError("each segment must be an (a, b, c) triple")
        if not all(np.isfinite(v) for seg in segments for v in seg):
            raise ValueError("segment coefficients must be finite")
        if any(t2 <= t1 for t1, t2 in zip(knots, knots[1:])):
            raise ValueError("knots must be strictly increasing")
        if any(seg[0] < 0 for seg in segments):
            raise ValueError("quadratic coefficient a must be nonnegative")
        for s, t in enumerate(knots):
            left, right = segments[s], segments[s + 1]
            lv = left[0] * t * t + left[1] * t + left[2]
            rv = right[0] * t * t + right[1] * t + right[2]
            if abs(lv - rv) > 1e-9 * max(1.0, abs(lv)):
                raise ValueError(f"loss is discontinuous at knot {t}")
            ld = 2 * left[0] * t + left[1]
            rd = 2 * right[0] * t + right[1]
            if ld > rd + 1e-9 * max(1.0, abs(ld)):
                raise ValueError(f"loss is not convex at knot {t}")

    @property
    def coefficients(self):
        """Arrays ``(a, b, c)`` indexed by segment."""
        table = np.asarray(self.segments, dtype=float)
        return table[:, 0], table[:, 1], table[:, 2]

    @property
    def max_curvature(self):
        return max(seg[0] for seg in self.segments)

    @property
    def is_classification(self):
        return self.residual_kind == MARGIN

    def segment_bounds(self, s):
        """Closed interval ``[lo, hi]`` of segment ``s`` (infinite at the ends)."""
        lo = self.knots[s - 1] if s > 0 else -np.inf
        hi = self.knots[s] if s < len(self.knots) else np.inf
        return lo, hi


def make_builtin_loss(name, h=None, gamma=None):
    """Build one of the standard piecewise-quadratic losses.

    ``h`` is the asymmetry level for ``asymmetric-l2`` and the knot for both
    Huberized losses. ``gamma`` shifts the hinge of ``squared-hinge`` from
    ``r = 1`` to ``r = 1 + gamma``.
    """
    if name == "quadratic":
        return LossSpec((), ((0.5, 0.0, 0.0),), RESIDUAL, name)
    if name == "asymmetric-l2":
        if h is None or not 0 < h < 1:
            raise ValueError("asymmetric-l2 needs h in (0, 1)")
        return LossSpec((0.0,), (((1 - h) / 2, 0.0, 0.0), (h / 2, 0.0, 0.0)), RESIDUAL, name)
    if name == "huber-regression":
        if h is None or not h > 0:
            raise ValueError("huber-regression needs h > 0")
        segments = ((0.0, -h, -h * h / 2), (0.5, 0.0, 0.0), (0.0, h, -h * h / 2))
        return LossSpec((-h, h), segments, RESIDUAL, name)
    if name == "squared-hinge":
        hinge = 1.0 + (0.0 if gamma is None else float(gamma))
        segments = ((0.5, -hinge, hinge * hinge / 2), (0.0, 0.0, 0.0))
        return LossSpec((hinge,), segments, MARGIN, name)
    if name == "huber-hinge":
        if h is None or not h <= 1:
            raise ValueError("huber-hinge needs h <= 1")
        linear = (0.0, h - 1, (1 - h * h) / 2)
        if h == 1:
            return LossSpec((1.0,), (linear, (0.0, 0.0, 0.0)), MARGIN, name)
        return LossSpec((h, 1.0), (linear, (0.5, -1.0, 0.5), (0.0, 0.0, 0.0)), MARGIN, name)
    raise ValueError(f"unknown loss {name!r}; expected one of {', '.join(BUILTIN_LOSSES)}")


def residuals(loss, y, eta):
    """Residual or margin ``r`` for each observation."""
    y = np.asarray(y, dtype=float)
    eta = np.asarray(eta, dtype=float)
    return y * eta if loss.residual_kind == MARGIN else y - eta


def locate_segments(loss, r):
    """Segment index of each ``r``; points on a knot go to the left segment."""
    return np.searchsorted(np.asarray(loss.knots, dtype=float), r, side="left")


def loss_value(loss, y, eta):
    """Evaluate ``l(y, eta)``; vectorised over ``y`` and ``eta``."""
    r = residuals(loss, y, eta)
    a, b, c = loss.coefficients
    s = locate_segments(loss, r)
    out = a[s] * r * r + b[s] * r + c[s]
    return out.item() if np.ndim(out) == 0 else out


def loss_gradient_weights(loss, y, eta, segments=None):
    """Per-observation curvature and slope of the loss in ``eta``.

    Returns
    -------
    curvature : ndarray
        ``2 a(r_i)``; the Hessian of ``L`` restricted to columns ``A`` is
        ``X_A' diag(curvature) X_A`` for both residual kinds.
    slope : ndarray
        ``d l / d eta`` at each observation, so ``grad L = X' slope``.
    """
    y = np.asarray(y, dtype=float)
    r = residuals(loss, y, eta)
    if segments is None:
        segments = locate_segments(loss, r)
    a, b, _ = loss.coefficients
    curvature = 2.0 * a[segments]
    dl_dr = curvature * r + b[segments]
    slope = y * dl_dr if loss.residual_kind == MARGIN else -dl_dr
    return curvature, slope
