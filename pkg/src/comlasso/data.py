"""Compositional data ingestion, synthetic designs and CSV serialisation."""

from __future__ import annotations

import csv
import io
from pathlib import Path
from typing import NamedTuple, Optional

import numpy as np
from scipy.special import logsumexp, softmax

from .losses import make_builtin_loss
from .model import GroupStructure, Kink, ProblemSpec, SolutionPath

SIMPLEX_ATOL = 1e-6
TRUE_BETA_HEAD = (1.0, -0.8, 0.6, 0.0, 0.0, -1.5, -0.5, 1.2)


class DataError(ValueError):
    """Malformed or invalid input file; the message names file, line and column."""


class CompositionalData(NamedTuple):
    U: np.ndarray
    y: np.ndarray
    groups: GroupStructure
    columns: list
    response: str


class SyntheticData(NamedTuple):
    problem: ProblemSpec
    beta_true: np.ndarray
    U: np.ndarray


def _fmt(x):
    return repr(float(x)) if np.isfinite(x) else str(float(x))


def _read_rows(path):
    path = Path(path)
    if not path.is_file():
        raise DataError(f"{path}: no such file")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if r and any(cell.strip() for cell in r)]
    if not rows:
        raise DataError(f"{path}: file is empty")
    return path, rows


def load_group_map(path, columns):
    """Read a ``column_name,group_label,d_weight`` side file.

    Columns missing from the file fall in an unnamed trailing group with
    weight one. Groups must occupy consecutive columns of the data file.
    """
    path, rows = _read_rows(path)
    header = [h.strip() for h in rows[0]]
    if header[:3] != ["column_name", "group_label", "d_weight"]:
        raise DataError(f"{path}:1: expected header column_name,group_label,d_weight")
    mapping = {}
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) < 3:
            raise DataError(f"{path}:{lineno}: expected 3 fields, found {len(row)}")
        name, label, weight = (cell.strip() for cell in row[:3])
        try:
            mapping[name] = (label, float(weight))
        except ValueError:
            raise DataError(f"{path}:{lineno}:3: d_weight {weight!r} is not a number") from None
    unknown = set(mapping) - set(columns)
    if unknown:
        raise DataError(f"{path}: columns not in data file: {', '.join(sorted(unknown))}")
    labels = [mapping.get(c, ("", 1.0))[0] for c in columns]
    d = np.array([mapping.get(c, ("", 1.0))[1] for c in columns])
    sizes = []
    seen = set()
    for i, label in enumerate(labels):
        if i > 0 and label == labels[i - 1]:
            sizes[-1] += 1
            continue
        if label in seen:
            raise DataError(f"{path}: group {label!r} is not a consecutive block of columns")
        seen.add(label)
        sizes.append(1)
    try:
        return GroupStructure(tuple(sizes), d)
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None


def load_compositional_csv(path, groups_path=None, normalize=False, task="regression"):
    """Read a response column followed by ``p`` nonnegative component columns.

    Rows must sum to one within ``1e-6`` unless ``normalize`` is set, in
    which case each row is rescaled. For ``task="classification"`` the
    response must be -1/+1.
    """
    path, rows = _read_rows(path)
    header = [h.strip() for h in rows[0]]
    if len(header) < 3:
        raise DataError(f"{path}:1: need a response column and at least two components")
    p = len(header) - 1
    U = np.empty((len(rows) - 1, p))
    y = np.empty(len(rows) - 1)
    for i, row in enumerate(rows[1:]):
        lineno = i + 2
        if len(row) != p + 1:
            raise DataError(f"{path}:{lineno}: expected {p + 1} fields, found {len(row)}")
        for col, cell in enumerate(row):
            try:
                value = float(cell)
            except ValueError:
                raise DataError(f"{path}:{lineno}:{col + 1}: {cell!r} is not a number") from None
            if not np.isfinite(value):
                raise DataError(f"{path}:{lineno}:{col + 1}: value is not finite")
            if col == 0:
                y[i] = value
            else:
                U[i, col - 1] = value
        comp = U[i]
        if np.any(comp < 0):
            col = int(np.argmax(comp < 0)) + 2
            raise DataError(f"{path}:{lineno}:{col}: negative component")
        total = comp.sum()
        if total == 0:
            raise DataError(f"{path}:{lineno}: zero row")
        if normalize:
            U[i] = comp / total
        elif abs(total - 1) > SIMPLEX_ATOL:
            raise DataError(f"{path}:{lineno}: row sums to {total:.9g}, not 1 (use normalize)")
    if U.shape[0] == 0:
        raise DataError(f"{path}: no data rows")
    if task == "classification" and not np.all(np.isin(y, (-1.0, 1.0))):
        bad = int(np.argmax(~np.isin(y, (-1.0, 1.0)))) + 2
        raise DataError(f"{path}:{bad}:1: classification labels must be -1 or +1")
    columns = header[1:]
    groups = GroupStructure.single(p) if groups_path is None else load_group_map(groups_path, columns)
    return CompositionalData(U, y, groups, columns, header[0])


def log_transform(U, pseudocount=None):
    """Elementwise log of simplex rows.

    With ``pseudocount`` ``c`` each row becomes ``(u + c) / (1 + p c)``
    before the log, which keeps it on the simplex.
    """
    U = np.asarray(U, dtype=float)
    if pseudocount is not None:
        if not pseudocount > 0:
            raise ValueError("pseudocount must be positive")
        p = U.shape[1]
        U = (U + pseudocount) / (1 + p * pseudocount)
    if np.any(U <= 0):
        i, j = np.argwhere(U <= 0)[0]
        raise ValueError(f"zero component at row {i}, column {j}; log is undefined "
                         "(pass a pseudocount)")
    return np.log(U)


def closure(X):
    """Inverse of :func:`log_transform` for strictly positive rows."""
    return softmax(np.asarray(X, dtype=float), axis=1)


def ar1_block(size, rho=0.5):
    idx = np.arange(size)
    return rho ** np.abs(idx[:, None] - idx[None, :])


def synthetic_mean(group_sizes):
    """Log-ratio mean: ``log(p_k / 2)`` on the first five groups, zero after."""
    return np.concatenate([np.full(pk, np.log(pk / 2) if k < 5 else 0.0)
                           for k, pk in enumerate(group_sizes)])


def synthetic_beta(group_sizes):
    beta = np.zeros(sum(group_sizes))
    beta[:len(TRUE_BETA_HEAD)] = TRUE_BETA_HEAD
    return beta


def generate_synthetic(n, group_sizes, seed, noise_sd=0.5, loss=None):
    """Logistic-normal compositional design with a sparse zero-sum truth.

    ``z ~ N(eta, Sigma)`` with block-diagonal AR(0.5) ``Sigma``;
    ``u = softmax(z)`` over all components, ``x = log u`` and
    ``y = X beta + N(0, noise_sd^2)``.
    """
    group_sizes = tuple(int(g) for g in group_sizes)
    if group_sizes[0] < len(TRUE_BETA_HEAD):
        raise ValueError(f"first group needs at least {len(TRUE_BETA_HEAD)} components")
    rng = np.random.default_rng(seed)
    mean = synthetic_mean(group_sizes)
    blocks = [rng.standard_normal((n, pk)) @ np.linalg.cholesky(ar1_block(pk)).T
              for pk in group_sizes]
    Z = mean + np.hstack(blocks)
    X = Z - logsumexp(Z, axis=1, keepdims=True)
    beta = synthetic_beta(group_sizes)
    y = X @ beta + noise_sd * rng.standard_normal(n)
    loss = loss or make_builtin_loss("quadratic")
    problem = ProblemSpec(X, y, loss, GroupStructure.zero_sum(group_sizes))
    return SyntheticData(problem, beta, np.exp(X))


def write_compositional_csv(file, U, y, columns=None, response="y"):
    columns = columns or [f"x{j + 1}" for j in range(U.shape[1])]
    with _open_out(file) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([response, *columns])
        for yi, row in zip(y, U):
            w.writerow([_fmt(yi), *(_fmt(v) for v in row)])


def write_group_map(file, columns, groups):
    labels = [f"g{k + 1}" for k in groups.membership]
    with _open_out(file) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["column_name", "group_label", "d_weight"])
        for name, label, dj in zip(columns, labels, groups.d):
            w.writerow([name, label, _fmt(dj)])


def write_vector_csv(file, names, values, header=("name", "value")):
    with _open_out(file) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for name, v in zip(names, values):
            w.writerow([name, _fmt(v)])


class _open_out:
    """Open ``file`` for writing, or pass an open text handle through."""

    def __init__(self, file):
        self.file = file
        self.fh = None

    def __enter__(self):
        if isinstance(self.file, io.TextIOBase) or hasattr(self.file, "write"):
            return self.file
        try:
            self.fh = open(self.file, "w", newline="", encoding="utf-8")
        except OSError as exc:
            raise DataError(f"{self.file}: cannot write ({exc.strerror})") from None
        return self.fh

    def __exit__(self, *exc):
        if self.fh is not None:
            self.fh.close()


def write_path_csv(path, file, columns=None):
    """One row per kink: index, lambda, event, coefficients, group multipliers.

    Multipliers of inactive groups are left empty. Floats are written with
    ``repr`` (shortest string that round-trips exactly).
    """
    p = path.kinks[0].beta.size
    K = max([max(k.mu) + 1 for k in path.kinks if k.mu] + [path.n_groups])
    columns = columns or [f"beta_{j + 1}" for j in range(p)]
    with _open_out(file) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["kink_index", "lambda", "event", *columns,
                    *(f"mu_{k + 1}" for k in range(K))])
        for t, kink in enumerate(path.kinks):
            mus = [_fmt(kink.mu[k]) if k in kink.mu else "" for k in range(K)]
            w.writerow([t, _fmt(kink.lam), kink.event, *(_fmt(b) for b in kink.beta), *mus])


def read_path_csv(file):
    """Inverse of :func:`write_path_csv`; returns ``(path, column_names)``."""
    path, rows = _read_rows(file)
    header = rows[0]
    if header[:3] != ["kink_index", "lambda", "event"]:
        raise DataError(f"{path}:1: not a path file")
    beta_cols = [h for h in header[3:] if not h.startswith("mu_")]
    p = len(beta_cols)
    K = len(header) - 3 - p
    kinks = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise DataError(f"{path}:{lineno}: expected {len(header)} fields, found {len(row)}")
        try:
            beta = np.array([float(v) for v in row[3:3 + p]])
            mu = {k: float(v) for k, v in enumerate(row[3 + p:]) if v != ""}
            kinks.append(Kink(float(row[1]), beta, mu, row[2]))
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from None
    out = SolutionPath(kinks=kinks, lambda_max=kinks[0].lam if kinks else 0.0, n_groups=K)
    return out, beta_cols


def path_plot_data(path, groups):
    """Coordinates for coefficient-path figures.

    For every kink and coefficient: the whole-vector ratio
    ``||beta(lam)||_1 / ||beta(lam_end)||_1``, the same ratio within the
    coefficient's group, and the coefficient value. The normaliser is the
    terminal kink because the norm at ``lambda_max`` is zero.
    """
    betas = path.betas
    end = np.abs(betas[-1])
    total_end = end.sum()
    member = groups.membership
    group_end = np.bincount(member, weights=end, minlength=groups.K)
    rows = []
    for t, kink in enumerate(path.kinks):
        a = np.abs(kink.beta)
        ratio = a.sum() / total_end if total_end > 0 else 0.0
        group_norm = np.bincount(member, weights=a, minlength=groups.K)
        for j, b in enumerate(kink.beta):
            k = member[j]
            gratio = group_norm[k] / group_end[k] if group_end[k] > 0 else 0.0
            rows.append((t, kink.lam, j, int(k), ratio, gratio, b))
    return rows


def write_plot_data(path, groups, file, columns=None):
    columns = columns or [f"beta_{j + 1}" for j in range(groups.p)]
    with _open_out(file) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["kink_index", "lambda", "coefficient", "group", "norm_ratio",
                    "group_norm_ratio", "value"])
        for t, lam, j, k, ratio, gratio, b in path_plot_data(path, groups):
            w.writerow([t, _fmt(lam), columns[j], k + 1, _fmt(ratio), _fmt(gratio), _fmt(b)])


def write_report(report, file):
    """Serialise a :class:`~comlasso.selection.SelectionReport`."""
    with _open_out(file) as fh:
        w = csv.writer(fh, lineterminator="\n")
        if report.probabilities is not None:
            names = report.feature_names or [f"beta_{j + 1}" for j in range(len(report.probabilities))]
            w.writerow(["feature", "selection_probability"])
            for name, prob in zip(names, report.probabilities):
                w.writerow([name, _fmt(prob)])
            return
        w.writerow(["kink_index", "lambda", "df", report.criterion_name, "chosen"])
        for t, (lam, df, crit) in enumerate(zip(report.lambdas, report.df, report.criterion)):
            w.writerow([t, _fmt(lam), int(df), _fmt(crit), int(t == report.chosen)])


def problem_from_data(data, loss_name="quadratic", loss_param=None, pseudocount=None,
                      gamma=None):
    loss = make_builtin_loss(loss_name, h=loss_param, gamma=gamma)
    X = log_transform(data.U, pseudocount)
    return ProblemSpec(X, data.y, loss, data.groups)


def read_problem_csv(file, groups_file=None, loss_name="quadratic", loss_param=None,
                     normalize=False, pseudocount=None, gamma=None,
                     task: Optional[str] = None):
    loss = make_builtin_loss(loss_name, h=loss_param, gamma=gamma)
    task = task or ("classification" if loss.is_classification else "regression")
    data = load_compositional_csv(file, groups_file, normalize=normalize, task=task)
    if task == "regression" and loss.is_classification:
        raise DataError(f"loss {loss_name} is a classification loss")
    X = log_transform(data.U, pseudocount)
    return ProblemSpec(X, data.y, loss, data.groups), data
