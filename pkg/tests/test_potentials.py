import numpy as np
import pytest
from hypothesis import given, strategies as st

from polybubble.bubbles import CouplingData
from polybubble.potentials import builtin_potential, check_hypotheses

C5 = CouplingData.from_beta(0.0, 5)


def test_well_critical_point():
    pp = builtin_potential("well", {"p0": 1, "p2": 1, "r0": 1}, 5)
    assert pp.P(1.0, np.zeros(3)) == 1.0
    gr, gy = pp.grad_P(1.0, np.zeros(3))
    assert gr == 0 and np.all(gy == 0)


@given(st.floats(0.1, 3), st.lists(st.floats(-2, 2), min_size=3, max_size=3))
def test_constant_gradient_zero(r, y2):
    pp = builtin_potential("constant", {"p0": 1.0}, 5)
    gr, gy = pp.grad_P(r, np.array(y2))
    assert gr == 0 and np.all(gy == 0)


def test_well_hand_expansion():
    pp = builtin_potential("well", {"p0": 1, "p2": 1, "r0": 1}, 5)
    assert pp.P(1.3, np.zeros(3)) == pytest.approx(1 + 0.09 / 1.09, rel=1e-14)


def test_gradient_finite_difference():
    pp = builtin_potential("saddle", {"p0": 2, "p2": 0.5, "q0": 2, "q2": 0.3, "r0": 1.2, "y0_2": [0.1, 0, 0]}, 5)
    r, y2, h = 1.37, np.array([0.2, -0.1, 0.05]), 1e-6
    gr, gy = pp.grad_G(r, y2, 1.0)
    assert gr == pytest.approx((pp.G(r + h, y2, 1.0) - pp.G(r - h, y2, 1.0)) / (2 * h), rel=1e-7)
    for i in range(3):
        e = np.zeros(3)
        e[i] = h
        fd = (pp.G(r, y2 + e, 1.0) - pp.G(r, y2 - e, 1.0)) / (2 * h)
        assert gy[i] == pytest.approx(fd, rel=1e-6, abs=1e-10)


def test_negative_potential_rejected():
    with pytest.raises(ValueError):
        builtin_potential("well", {"p0": 0.1, "p2": -1.0}, 5)
    with pytest.raises(ValueError):
        builtin_potential("well", {"bogus": 1.0}, 5)


def test_hypotheses_well_degree_plus_one():
    rep = check_hypotheses(builtin_potential("well", {}, 5), C5, box=[(0.9, 1.1), (-0.1, 0.1)], weighted=False)
    assert rep.degree == 1
    assert rep.critical_point == pytest.approx((1.0, 0.0), abs=1e-10)


def test_hypotheses_weighted_well_has_no_interior_point():
    # r^2 G grows in r for the built-in well: no critical point near r0
    rep = check_hypotheses(builtin_potential("well", {}, 5), C5, box=[(0.9, 1.1), (-0.1, 0.1)])
    assert rep.degree == 0


def test_hypotheses_constant_no_critical_point():
    rep = check_hypotheses(builtin_potential("constant", {}, 5), C5)
    assert rep.critical_point is None
    assert rep.degree == 0


def test_hypotheses_saddle_degree_minus_one():
    rep = check_hypotheses(builtin_potential("saddle", {}, 5), C5, weighted=False,
                           box=[(0.8, 1.2), (-0.2, 0.2)], resolution=2500)
    assert rep.degree == -1
