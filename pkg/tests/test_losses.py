import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from comlasso.losses import (BUILTIN_LOSSES, MARGIN, LossSpec, locate_segments,
                             loss_gradient_weights, loss_value, make_builtin_loss)


def reference(name, r, h=None, gamma=0.0):
    """Closed-form losses as functions of the residual or margin."""
    r = np.asarray(r, dtype=float)
    if name == "quadratic":
        return 0.5 * r ** 2
    if name == "asymmetric-l2":
        return np.where(r <= 0, (1 - h) / 2, h / 2) * r ** 2
    if name == "huber-regression":
        return np.where(np.abs(r) <= h, 0.5 * r ** 2, h * np.abs(r) - h * h / 2)
    if name == "squared-hinge":
        return 0.5 * np.maximum(1 + gamma - r, 0.0) ** 2
    if name == "huber-hinge":
        return np.where(r <= h, (h - 1) * r + (1 - h * h) / 2,
                        0.5 * np.maximum(1 - r, 0.0) ** 2)
    raise KeyError(name)


CASES = [("quadratic", None, None), ("asymmetric-l2", 0.3, None), ("asymmetric-l2", 0.8, None),
         ("huber-regression", 0.5, None), ("huber-regression", 1.0, None),
         ("squared-hinge", None, None), ("squared-hinge", None, 0.5),
         ("huber-hinge", 0.5, None), ("huber-hinge", -1.0, None)]


@pytest.mark.parametrize("name,h,gamma", CASES)
def test_builtin_matches_closed_form(name, h, gamma):
    loss = make_builtin_loss(name, h=h, gamma=gamma)
    rng = np.random.default_rng(0)
    r = rng.uniform(-4, 4, 1000)
    # pick y, eta so that r comes out as drawn
    if loss.residual_kind == MARGIN:
        y = rng.choice([-1.0, 1.0], r.size)
        eta = r * y
    else:
        y = rng.standard_normal(r.size)
        eta = y - r
    np.testing.assert_allclose(loss_value(loss, y, eta), reference(name, r, h, gamma or 0.0),
                               rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("name,h,gamma", CASES)
def test_gradient_matches_finite_difference(name, h, gamma):
    loss = make_builtin_loss(name, h=h, gamma=gamma)
    rng = np.random.default_rng(1)
    y = rng.choice([-1.0, 1.0], 500) if loss.residual_kind == MARGIN else rng.standard_normal(500)
    eta = rng.uniform(-3, 3, 500)
    # stay away from knots where the derivative of the segment changes
    eps = 1e-6
    _, slope = loss_gradient_weights(loss, y, eta)
    fd = (loss_value(loss, y, eta + eps) - loss_value(loss, y, eta - eps)) / (2 * eps)
    np.testing.assert_allclose(slope, fd, atol=1e-6)


def test_knot_belongs_to_left_segment():
    loss = make_builtin_loss("huber-regression", h=1.0)
    assert list(locate_segments(loss, np.array([-1.0, 1.0, 1.0 + 1e-12]))) == [0, 1, 2]


def test_huber_hinge_at_one_is_zero_loss():
    loss = make_builtin_loss("huber-hinge", h=1.0)
    assert np.all(loss_value(loss, np.ones(5), np.linspace(-3, 3, 5)) == 0)


def test_hinge_shift_moves_knot():
    assert make_builtin_loss("squared-hinge", gamma=0.25).knots == (1.25,)


@pytest.mark.parametrize("bad", [
    dict(knots=(0.0,), segments=((0.5, 0, 0), (0.5, 0, 1))),          # jump
    dict(knots=(0.0,), segments=((0.5, 1, 0), (0.5, -1, 0))),          # concave kink
    dict(knots=(), segments=((-1.0, 0, 0),)),                          # negative curvature
    dict(knots=(1.0, 0.0), segments=((0, 0, 0),) * 3),                 # unsorted knots
    dict(knots=(0.0,), segments=((0.5, 0, 0),)),                       # segment count
])
def test_invalid_loss_rejected(bad):
    with pytest.raises(ValueError):
        LossSpec(**bad)


@pytest.mark.parametrize("name,h", [("asymmetric-l2", 1.5), ("huber-regression", -1.0),
                                    ("huber-hinge", 2.0), ("nope", None)])
def test_bad_parameters(name, h):
    with pytest.raises(ValueError):
        make_builtin_loss(name, h=h)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=1, max_size=3, unique=True),
       st.lists(st.floats(0, 2), min_size=4, max_size=4), st.floats(-2, 2), st.floats(-2, 2))
def test_constructed_convex_losses_validate(knots, curv, b0, c0):
    # build a continuous convex loss by integrating nondecreasing slopes
    knots = sorted(knots)
    segs = [(curv[0], b0, c0)]
    for s, t in enumerate(knots):
        a, b, c = segs[-1]
        a2 = curv[s + 1]
        slope = 2 * a * t + b + 0.1
        b2 = slope - 2 * a2 * t
        c2 = a * t * t + b * t + c - a2 * t * t - b2 * t
        segs.append((a2, b2, c2))
    loss = LossSpec(tuple(knots), tuple(segs))
    r = np.linspace(-4, 4, 41)
    v = loss_value(loss, np.zeros_like(r), -r)
    assert np.all(np.isfinite(v))
    # midpoint convexity on the grid
    assert np.all(v[1:-1] <= 0.5 * (v[:-2] + v[2:]) + 1e-9 * (1 + np.abs(v[1:-1])))


def test_builtin_names_all_constructible():
    params = {"asymmetric-l2": 0.5, "huber-regression": 1.0, "huber-hinge": 0.5}
    for name in BUILTIN_LOSSES:
        assert make_builtin_loss(name, h=params.get(name)).name == name
