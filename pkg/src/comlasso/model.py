"""Problem, state and path containers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .losses import MARGIN, LossSpec, loss_gradient_weights, loss_value

EVENTS = ("init", "sign-drop", "knot-hit", "group-activate", "coeff-activate", "terminate")
STATUSES = ("completed", "degenerate-kkt", "max-kinks-reached")


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class GroupStructure:
    """Consecutive partition of the coefficients with one zero-sum
    constraint ``d_k' beta_k = 0`` per group.

    Indices whose constraint weight ``d_j`` is zero are penalised but do not
    enter their group's constraint.
    """

    group_sizes: tuple
    d: np.ndarray

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.group_sizes)
        d = _frozen(self.d)
        if not sizes or any(s <= 0 for s in sizes):
            raise ValueError("group sizes must be positive")
        if d.ndim != 1 or d.size != sum(sizes):
            raise ValueError(f"d has length {d.size}, groups cover {sum(sizes)} indices")
        if not np.all(np.isfinite(d)):
            raise ValueError("constraint weights must be finite")
        object.__setattr__(self, "group_sizes", sizes)
        object.__setattr__(self, "d", d)
        for k in range(len(sizes)):
            if np.count_nonzero(d[self.slice(k)]) < 2:
                raise ValueError(f"group {k} needs at least two nonzero constraint weights")

    @classmethod
    def single(cls, p):
        return cls((p,), np.ones(p))

    @classmethod
    def zero_sum(cls, group_sizes):
        return cls(tuple(group_sizes), np.ones(sum(group_sizes)))

    @property
    def p(self):
        return int(sum(self.group_sizes))

    @property
    def K(self):
        return len(self.group_sizes)

    @property
    def offsets(self):
        return np.concatenate(([0], np.cumsum(self.group_sizes)))

    @property
    def membership(self):
        """``k(j)`` for every coefficient index."""
        return np.repeat(np.arange(self.K), self.group_sizes)

    def slice(self, k):
        start = sum(self.group_sizes[:k])
        return slice(start, start + self.group_sizes[k])

    def indices(self, k):
        s = self.slice(k)
        return np.arange(s.start, s.stop)

    def constrained(self, k):
        """Indices of group ``k`` with nonzero constraint weight."""
        idx = self.indices(k)
        return idx[self.d[idx] != 0]

    def matrix(self):
        """Block-diagonal ``p x K`` matrix ``D`` with ``d_k`` in column ``k``."""
        D = np.zeros((self.p, self.K))
        D[np.arange(self.p), self.membership] = self.d
        return D

    def constraint_residuals(self, beta):
        """``d_k' beta_k`` for every group."""
        return np.bincount(self.membership, weights=self.d * beta, minlength=self.K)


def group_table(groups):
    """``(K, width)`` table of each group's constrained indices, padded with -1."""
    rows = [groups.constrained(k) for k in range(groups.K)]
    width = max(r.size for r in rows)
    table = np.full((groups.K, width), -1, dtype=int)
    for k, r in enumerate(rows):
        table[k, :r.size] = r
    return table


@dataclass(frozen=True)
class ProblemSpec:
    """Design, response, loss and constraint structure of one fit."""

    X: np.ndarray
    y: np.ndarray
    loss: LossSpec
    groups: GroupStructure

    def __post_init__(self):
        X = _frozen(self.X)
        y = _frozen(self.y)
        if X.ndim != 2:
            raise ValueError("X must be two-dimensional")
        if y.shape != (X.shape[0],):
            raise ValueError(f"y has shape {y.shape}, expected ({X.shape[0]},)")
        if X.shape[1] != self.groups.p:
            raise ValueError(f"X has {X.shape[1]} columns but groups cover {self.groups.p}")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ValueError("X and y must be finite")
        if self.loss.residual_kind == MARGIN and not np.all(np.isin(y, (-1.0, 1.0))):
            raise ValueError("classification responses must be -1 or +1")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def p(self):
        return self.X.shape[1]

    @property
    def task(self):
        return "classification" if self.loss.is_classification else "regression"

    def gradient(self, beta, segments=None):
        _, slope = loss_gradient_weights(self.loss, self.y, self.X @ beta, segments)
        return self.X.T @ slope

    def loss_total(self, beta):
        return float(np.sum(loss_value(self.loss, self.y, self.X @ beta)))

    def objective(self, beta, lam, penalty_weights=None):
        w = 1.0 if penalty_weights is None else penalty_weights
        return self.loss_total(beta) + lam * float(np.sum(w * np.abs(beta)))

    def with_data(self, X, y):
        return ProblemSpec(X, y, self.loss, self.groups)

    def subset(self, rows):
        return self.with_data(self.X[rows], self.y[rows])


@dataclass
class PathState:
    """Working state of the path solver at one value of lambda."""

    lam: float
    beta: np.ndarray
    mu: dict
    active: list
    signs: dict
    segment_index: np.ndarray

    @property
    def active_groups(self):
        return sorted(self.mu)


@dataclass(frozen=True)
class Kink:
    lam: float
    beta: np.ndarray
    mu: dict
    event: str


@dataclass
class SolutionPath:
    """Ordered kinks of a piecewise-linear coefficient path."""

    kinks: list = field(default_factory=list)
    status: str = "completed"
    lambda_max: float = 0.0
    message: str = ""
    n_groups: int = 0

    def __len__(self):
        return len(self.kinks)

    @property
    def lambdas(self):
        return np.array([k.lam for k in self.kinks])

    @property
    def betas(self):
        """``(n_kinks, p)`` coefficient matrix."""
        return np.array([k.beta for k in self.kinks])

    @property
    def events(self):
        return [k.event for k in self.kinks]

    @property
    def lambda_end(self):
        return self.kinks[-1].lam

    def beta_at(self, lam):
        """Coefficients at ``lam`` by linear interpolation between kinks.

        Above the first kink the path is zero; below the last kink the
        terminal coefficients are returned.
        """
        lams = self.lambdas
        betas = self.betas
        if lam >= lams[0]:
            return np.zeros_like(betas[0]) if lam > lams[0] else betas[0].copy()
        if lam <= lams[-1]:
            return betas[-1].copy()
        t = int(np.searchsorted(-lams, -lam, side="right"))
        hi, lo = lams[t - 1], lams[t]
        w = (hi - lam) / (hi - lo)
        return (1 - w) * betas[t - 1] + w * betas[t]

    def coef_grid(self, lams):
        """``(len(lams), p)`` coefficients, vectorised :meth:`beta_at`."""
        lams = np.asarray(lams, dtype=float)
        knots, betas = self.lambdas, self.betas
        out = np.empty((lams.size, betas.shape[1]))
        above = lams > knots[0]
        below = lams <= knots[-1]
        out[above] = 0.0
        out[below & ~above] = betas[-1]
        mid = ~above & ~below
        if np.any(mid):
            t = np.searchsorted(-knots, -lams[mid], side="right")
            t = np.clip(t, 1, knots.size - 1)
            hi, lo = knots[t - 1], knots[t]
            w = ((hi - lams[mid]) / (hi - lo))[:, None]
            out[mid] = (1 - w) * betas[t - 1] + w * betas[t]
        return out
