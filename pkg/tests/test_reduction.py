import math
import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from polybubble.bubbles import CouplingData
from polybubble.geometry import CutoffSpec, PolygonConfig
from polybubble.potentials import builtin_potential
from polybubble.quadrature import QuadratureBudget, constants_B_C
from polybubble.reduction import (ReducedState, energy_dlambda, interaction_brute, interaction_sum,
                                  newton_solve_reduced, reduced_degree, reduced_F, t_star)

C5 = CouplingData.from_beta(0.0, 5)
WELL5 = builtin_potential("well", {}, 5)


def test_interaction_two_bubbles():
    val, norm = interaction_sum(2, 1.3, 7.0, 5)
    assert val == pytest.approx((2 * 1.3) ** -3 * 7.0**-4, rel=1e-14)
    assert norm == pytest.approx((2 * 1.3) ** -3, rel=1e-14)


def test_interaction_square():
    _, norm = interaction_sum(4, 1.0, 3.0, 5)
    assert norm == pytest.approx(2 * math.sqrt(2) ** -3 + 2.0**-3, rel=1e-14)


@pytest.mark.parametrize("k", [2, 3, 17, 64, 128])
def test_interaction_brute_force(k):
    cfg = PolygonConfig(k, 1.1, (0.0, 0.0, 0.0), 5.0, C5)
    assert abs(interaction_sum(k, 1.1, 5.0, 5)[1] / interaction_brute(cfg) - 1) < 1e-13


def test_interaction_rejects_k1():
    with pytest.raises(ValueError):
        interaction_sum(1, 1.0, 1.0, 5)


def test_t_star_n5_closed_form():
    k = constants_B_C(C5)
    assert t_star(WELL5, C5) == pytest.approx(k.C_w / (2 * k.B_w), rel=1e-14)
    assert t_star(WELL5, C5) == pytest.approx(15 / 32, rel=1e-12)


def test_t_star_n6_closed_form():
    c = CouplingData.from_beta(0.0, 6)
    k = constants_B_C(c)
    assert t_star(builtin_potential("well", {}, 6), c) == pytest.approx(math.sqrt(k.C_w / (2 * k.B_w)), rel=1e-14)


def test_reduced_F_vanishes_at_t_star():
    ts = t_star(WELL5, C5)
    assert np.max(np.abs(reduced_F(ReducedState(ts, 1.0, (0, 0, 0)), WELL5, C5))) < 1e-10


@given(st.floats(0.1, 50.0))
def test_reduced_F_large_t_negative(scale):
    ts = t_star(WELL5, C5)
    t = ts * (1.0 + scale)
    assert reduced_F(ReducedState(t, 1.0, (0, 0, 0)), WELL5, C5)[0] < 0


def test_t_component_matches_lambda_balance_for_every_k():
    # F_t in the t variable is the same function whatever k sets lambda = t k^3
    k = constants_B_C(C5)
    for kk in (6, 8, 12):
        lam = 0.7 * kk**3
        t = lam / kk**3
        ft = reduced_F(ReducedState(t, 1.0, (0, 0, 0)), WELL5, C5)[0]
        assert ft == pytest.approx(-k.B_U * 2.0 / t**3 + k.C1_coupled / t**4, rel=1e-14)


@pytest.mark.parametrize("N,beta", [(5, 0.0), (5, 0.5), (6, 0.0), (6, 0.5)])
def test_newton_converges(N, beta):
    c = CouplingData.from_beta(beta, N)
    pp = builtin_potential("well", {}, N)
    ts = t_star(pp, c)
    st_ = newton_solve_reduced(ReducedState(1.2 * ts, 1.05, (0.03,) + (0.0,) * (N - 3)), pp, c)
    assert st_.converged
    assert np.linalg.norm(st_.F) < 1e-10
    assert st_.t == pytest.approx(ts, rel=1e-8)
    assert st_.rbar == pytest.approx(1.0, abs=1e-8)


def test_newton_seed_at_solution():
    ts = t_star(WELL5, C5)
    st_ = newton_solve_reduced(ReducedState(ts, 1.0, (0, 0, 0)), WELL5, C5)
    assert st_.converged and st_.iterations == 0


@settings(max_examples=10, deadline=None)
@given(st.floats(-0.1, 0.1), st.floats(-0.1, 0.1))
def test_newton_stable_under_seed_perturbation(a, b):
    ts = t_star(WELL5, C5)
    st_ = newton_solve_reduced(ReducedState(ts * (1 + a), 1.0 + b, (0.0, 0.0, 0.0)), WELL5, C5)
    assert st_.converged and st_.t == pytest.approx(ts, rel=1e-8)


def test_newton_constant_potential_fails():
    pp = builtin_potential("constant", {}, 5)
    st_ = newton_solve_reduced(ReducedState(1.0, 1.0, (0, 0, 0)), pp, C5)
    assert not st_.converged
    assert "no isolated critical point" in st_.message


def test_newton_seed_outside_box():
    st_ = newton_solve_reduced(ReducedState(5.0, 1.0, (0, 0, 0)), WELL5, C5, box=[(0.1, 1)] + [(0.5, 1.5)] +
                               [(-1, 1)] * 3)
    assert not st_.converged and "outside" in st_.message


def test_degree_well_nonzero_and_stable():
    ts = t_star(WELL5, C5)
    center = ReducedState(ts, 1.0, (0, 0, 0))
    start = time.perf_counter()
    d1 = reduced_degree(WELL5, C5, center, 0.2, (0.5 * ts, 2 * ts), resolution=16)
    d2 = reduced_degree(WELL5, C5, center, 0.2, (0.5 * ts, 2 * ts), resolution=32)
    assert time.perf_counter() - start < 30
    assert d1["degree"] in (1, -1)
    assert d1["degree"] == d2["degree"]
    assert d1["agree"]


# ---------------------------------------------------------------- energy expansion


def test_energy_pure_interaction_two_bubbles():
    cfg = PolygonConfig(2, 1.0, (0.0, 0.0, 0.0), 40.0, C5)
    rep = energy_dlambda(cfg, None, QuadratureBudget(n_samples=1 << 16))
    assert abs(rep.lhs / rep.rhs - 1) < 0.01 + 3 * rep.lhs_stderr / abs(rep.rhs)


def test_energy_exact_single_bubble_zero():
    cfg = PolygonConfig(1, 1.0, (0.0, 0.0, 0.0), 20.0, C5)
    rep = energy_dlambda(cfg, None, QuadratureBudget(n_samples=1 << 12))
    assert rep.lhs == 0.0


def test_energy_constant_potential_gap_shrinks():
    pp = builtin_potential("constant", {"p0": 1.0, "q0": 1.0, "r0": 10.0}, 5)
    gaps = []
    for lam in (20.0, 40.0, 80.0):
        cfg = PolygonConfig(1, 10.0, (0.0, 0.0, 0.0), lam, C5, CutoffSpec.around(10.0, (0, 0, 0), 1.0))
        gaps.append(abs(energy_dlambda(cfg, pp, QuadratureBudget(n_samples=1 << 16)).rel_gap))
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[-1] < 0.1
