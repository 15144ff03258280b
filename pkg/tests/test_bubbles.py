import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from polybubble.bubbles import (
    BubbleParams,
    CouplingData,
    SynchronizationError,
    bubble_eval,
    bubble_gradients,
    kappa_consistency,
    kappa_printed,
    solve_kappa,
    solve_s,
    synchronized_pairs,
    verify_sync_solution,
)


def ball_sample(n, N, seed=0, radius=5.0):
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((n, N))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return g * radius * rng.random((n, 1)) ** (1.0 / N)


def test_kappa_beta_zero_unique():
    roots = solve_kappa(0.0, 5)
    assert len(roots) == 1
    assert roots[0].kappa == pytest.approx(1.0, abs=1e-13)


@pytest.mark.parametrize("beta,N", [(1.0, 6), (0.5, 5), (-0.25, 7), (3.0, 8)])
def test_kappa_one_always_root(beta, N):
    assert kappa_consistency(1.0, beta, N) == 0.0
    assert any(abs(r.kappa - 1.0) < 1e-12 for r in solve_kappa(beta, N))


def test_kappa_scan_matches_dense_grid():
    beta, N = -0.5, 5
    roots = solve_kappa(beta, N)
    # independent oracle: geometric grid of 1e6 points, sign changes
    g = np.geomspace(1e-3, 1e3, 1_000_000)
    f = kappa_consistency(g, beta, N)
    idx = np.flatnonzero(np.sign(f[:-1]) * np.sign(f[1:]) < 0)
    assert len(idx) == len(roots)
    for i, r in zip(idx, roots):
        assert g[i] <= r.kappa <= g[i + 1]
        assert abs(r.residual) < 1e-12


def test_kappa_roots_reciprocal_pairs():
    # swapping u and v maps kappa to 1/kappa
    ks = [r.kappa for r in solve_kappa(1.0, 5)]
    assert len(ks) == 3
    assert ks[0] * ks[2] == pytest.approx(1.0, rel=1e-9)


def test_printed_equation_reported():
    r = solve_kappa(0.5, 5)[0]
    assert r.printed_residual == pytest.approx(float(kappa_printed(r.kappa, 0.5, 5)))


def test_kappa_empty_interval_and_bad_beta():
    assert solve_kappa(0.0, 5, (2.0, 1.0)) == []
    with pytest.raises(ValueError):
        solve_kappa(float("nan"), 5)


def test_solve_s_values():
    assert solve_s(0.0, 1.0, 7) == 1.0
    assert solve_s(1.0, 1.0, 6) == pytest.approx(2 / 3, rel=1e-15)
    s = solve_s(1.0, 1.0, 5)
    assert s ** (4 / 3) * 1.5 == pytest.approx(1.0, rel=1e-14)
    with pytest.raises(SynchronizationError):
        solve_s(-3.0, 1.0, 5)


@given(beta=st.floats(-0.9, 5.0), N=st.integers(5, 9))
@settings(max_examples=40, deadline=None)
def test_amplitude_identity(beta, N):
    c = CouplingData.from_beta(beta, N)
    assert abs(c.amplitude_identity) < 1e-13


def test_bubble_values():
    assert bubble_eval(BubbleParams((0,) * 5, 1.0), np.zeros(5)) == pytest.approx(15 ** 0.75)
    assert bubble_eval(BubbleParams((0,) * 5, 2.0), np.zeros(5)) == pytest.approx(2 ** 1.5 * 15 ** 0.75)


def test_bubble_kelvin_decay():
    p = BubbleParams((0,) * 5, 1.0)
    R = np.array([1e2, 1e3, 1e4])
    y = np.zeros((3, 5))
    y[:, 2] = R
    vals = bubble_eval(p, y) * R**3
    err = np.abs(vals - 15 ** 0.75)
    assert np.all(np.diff(err) < 0) and err[-1] < 1e-6


def test_gradient_at_center():
    N, lam = 6, 3.0
    d = bubble_gradients(BubbleParams((0.5,) * N, lam), np.full(N, 0.5))
    assert np.all(d.grad_y == 0)
    expect = (N - 2) / 2 * lam ** ((N - 4) / 2) * (N * (N - 2)) ** ((N - 2) / 4)
    assert d.d_lambda == pytest.approx(expect, rel=1e-14)


@given(
    N=st.integers(5, 8),
    lam=st.floats(0.3, 20.0),
    seed=st.integers(0, 10_000),
)
@settings(max_examples=30, deadline=None)
def test_gradients_finite_difference(N, lam, seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(N)
    y = x + rng.standard_normal(N) * (0.3 + rng.random()) / lam
    p = BubbleParams(tuple(x), lam)
    d = bubble_gradients(p, y)
    h = 1e-5 * (1 + np.linalg.norm(y - x))
    scale = abs(d.value) * lam
    for i in range(N):
        e = np.zeros(N)
        e[i] = h
        fd = (bubble_eval(p, y + e) - bubble_eval(p, y - e)) / (2 * h)
        assert abs(fd - d.grad_y[i]) <= 1e-6 * scale
        px = BubbleParams(tuple(x + e), lam)
        mx = BubbleParams(tuple(x - e), lam)
        fdx = (bubble_eval(px, y) - bubble_eval(mx, y)) / (2 * h)
        assert abs(fdx - d.d_center[i]) <= 1e-6 * scale
    hl = 1e-5 * lam
    fdl = (bubble_eval(BubbleParams(tuple(x), lam + hl), y) - bubble_eval(BubbleParams(tuple(x), lam - hl), y)) / (2 * hl)
    assert abs(fdl - d.d_lambda) <= 1e-6 * abs(d.value) / lam * 10


def test_verify_sync_decoupled_and_coupled():
    y = ball_sample(100, 5, seed=1)
    assert verify_sync_solution(CouplingData(5, 0.0, 1.0, 1.0), y) < 1e-12
    c6 = CouplingData.from_beta(1.0, 6)
    assert verify_sync_solution(c6, ball_sample(100, 6, seed=2)) < 1e-10


def test_verify_sync_flags_wrong_s():
    c = CouplingData.from_beta(1.0, 6)
    bad = CouplingData(6, 1.0, 1.0, c.s + 0.1)
    assert verify_sync_solution(bad, ball_sample(100, 6)) > 1e-3


def test_all_pairs_solve_system():
    for beta in (-0.25, 0.0, 0.5, 1.0):
        for N in (5, 6):
            pairs = synchronized_pairs(beta, N)
            assert pairs
            for c in pairs:
                assert verify_sync_solution(c, ball_sample(1000, N, seed=3)) < 1e-9


def test_dimension_rejected():
    with pytest.raises(ValueError):
        CouplingData.from_beta(0.0, 4)
    with pytest.raises(SynchronizationError):
        CouplingData.from_beta(0.0, 5, kappa=2.0)
