import numpy as np
import pytest
from scipy import optimize

from polybubble.bubbles import BubbleParams, CouplingData, bubble_eval
from polybubble.geometry import CutoffSpec, PolygonConfig, polygon_centers
from polybubble.norms import SampleSpec, fold_to_sector, norm_dstar, norm_star, structured_sample
from polybubble.potentials import builtin_potential
from polybubble.residual import (HalfBubbleViolation, ansatz_eval, make_config, nonlinear_estimate_study,
                                 nonlinear_eval, printed_discrepancy, residual_eval, residual_norm,
                                 residual_scaling_study)

C5 = CouplingData.from_beta(0.0, 5)
C5b = CouplingData.from_beta(1.0, 5)
WELL = builtin_potential("well", {}, 5)
CN5 = 15**0.75


def single(lam=10.0, c=C5, cutoff=None):
    return PolygonConfig(1, 1.0, (0.0, 0.0, 0.0), lam, c, cutoff)


def dense_points(cfg, n=4000, seed=0):
    rng = np.random.default_rng(seed)
    x1 = polygon_centers(cfg)[0]
    d = rng.standard_normal((n, 5))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    r = 10 ** rng.uniform(-4, 0, n)
    return np.vstack([x1, x1 + d * r[:, None]])


# ---------------------------------------------------------------- norms


def profile_sup(head, tau=1.0 / 3.0, power=1.0):
    """max over x >= 0 of (1+x)^(head+tau) / (1+x^2)^(3 power/2): the weighted ratio along a ray."""
    f = lambda x: -((1 + x) ** (head + tau) / (1 + x * x) ** (1.5 * power))  # noqa: E731
    res = optimize.minimize_scalar(f, bounds=(0.0, 10.0), method="bounded", options={"xatol": 1e-12})
    return -res.fun


def test_norm_star_single_bubble_value():
    cfg = single(c=C5b)
    pts = dense_points(cfg, 20000)
    u = ansatz_eval(cfg, None, pts)[0]
    rep = norm_star(u, cfg, pts)
    # the weight is unsquared in lam|y - x|, so the sup sits off the center
    assert rep.value == pytest.approx(C5b.s * CN5 * profile_sup(1.5), rel=1e-3)
    assert rep.value > C5b.s * CN5


def test_norm_zero_and_homogeneity():
    cfg = single()
    pts = dense_points(cfg)
    assert norm_star(np.zeros(len(pts)), cfg, pts).value == 0.0
    assert norm_dstar(np.zeros(len(pts)), cfg, pts).value == 0.0
    u = ansatz_eval(cfg, None, pts)[0]
    assert norm_star(2 * u, cfg, pts).value == 2 * norm_star(u, cfg, pts).value
    f = u ** (7.0 / 3.0)
    rep = norm_dstar(f, cfg, pts)
    assert np.isfinite(rep.value) and rep.value > 0
    assert norm_dstar(3 * f, cfg, pts).value == pytest.approx(3 * rep.value, rel=1e-15)
    assert rep.value == pytest.approx(CN5 ** (7 / 3) * profile_sup(3.5, power=7 / 3), rel=1e-3)


def test_structured_sample_refined_is_bigger():
    cfg = make_config(6, 0.46875, WELL, C5)
    spec = SampleSpec(sector=True)
    assert len(structured_sample(cfg, spec.refined(4))) > len(structured_sample(cfg, spec))


def test_fold_to_sector():
    y = np.random.default_rng(0).normal(size=(100, 5))
    f = fold_to_sector(y, 6)
    th = np.arctan2(f[:, 1], f[:, 0])
    assert np.all(th >= -1e-12) and np.all(th <= np.pi / 6 + 1e-12)
    assert np.allclose(np.hypot(f[:, 0], f[:, 1]), np.hypot(y[:, 0], y[:, 1]))


# ---------------------------------------------------------------- ansatz


def test_ansatz_far_outside_support_zero():
    cfg = make_config(6, 0.46875, WELL, C5)
    y = np.array([[3.0, 0, 0, 0, 0], [0, 0, 2.0, 0, 0]])
    for arr in ansatz_eval(cfg, WELL, y):
        assert np.all(arr == 0)


def test_ansatz_center_value():
    cfg = single(lam=12.0, c=C5b, cutoff=CutoffSpec.around(1.0, (0, 0, 0)))
    W1 = ansatz_eval(cfg, None, polygon_centers(cfg)[:1])[0][0]
    assert W1 == pytest.approx(C5b.s * 12.0**1.5 * CN5, rel=1e-14)


def test_ansatz_laplacian_finite_difference():
    cfg = make_config(6, 0.46875, WELL, C5b)
    rng = np.random.default_rng(4)
    X = polygon_centers(cfg)
    y = X[rng.integers(0, 6, 100)] + rng.normal(size=(100, 5)) * 3 / cfg.lam
    h = 1e-3 / cfg.lam
    W1, _, _, _, L1, _ = ansatz_eval(cfg, None, y)
    fd = np.zeros(len(y))
    for i in range(5):
        e = np.zeros(5)
        e[i] = h
        fd += ansatz_eval(cfg, None, y + e)[0] - 2 * W1 + ansatz_eval(cfg, None, y - e)[0]
    fd /= h * h
    assert np.max(np.abs(fd - L1) / np.abs(L1)) < 1e-4


# ---------------------------------------------------------------- residual


def test_residual_vanishes_for_exact_bubble():
    cfg = single(lam=20.0, c=C5b, cutoff=CutoffSpec.around(1.0, (0, 0, 0), 0.1))
    x1 = polygon_centers(cfg)[0]
    y = x1 + np.random.default_rng(1).uniform(-1, 1, (200, 5)) * 0.02
    r1, r2 = residual_eval(cfg, None, y)
    W1 = ansatz_eval(cfg, None, y)[0]
    assert np.max(np.abs(r1) / W1 ** (7 / 3)) < 1e-10
    assert np.max(np.abs(r2) / W1 ** (7 / 3)) < 1e-10


def test_residual_constant_potential_in_core():
    pp = builtin_potential("constant", {"p0": 0.7, "q0": 0.7}, 5)
    cfg = single(lam=20.0, cutoff=CutoffSpec.around(1.0, (0, 0, 0), 0.1))
    y = polygon_centers(cfg)[0] + np.random.default_rng(2).uniform(-1, 1, (100, 5)) * 0.02
    r1, _ = residual_eval(cfg, pp, y)
    W1 = ansatz_eval(cfg, pp, y)[0]
    assert np.allclose(r1, 0.7 * W1, rtol=1e-10)


def test_printed_decomposition_matches_up_to_sign_in_core():
    cfg = make_config(6, 0.46875, WELL, C5)
    X = polygon_centers(cfg)
    y = X[0] + np.random.default_rng(5).uniform(-1, 1, (50, 5)) * 0.05
    d1, d2 = printed_discrepancy(cfg, WELL, y)
    r1 = residual_eval(cfg, WELL, y)[0]
    assert np.max(np.abs(d1)) < 1e-9 * np.max(np.abs(r1))


def test_residual_norm_stable_under_refinement():
    cfg = make_config(8, 0.46875, WELL, C5)
    spec = SampleSpec(sector=True)
    a = residual_norm(cfg, WELL, spec).value
    b = residual_norm(cfg, WELL, spec.refined(4)).value
    assert a > 0 and abs(b - a) / a < 0.02


def test_scaling_study_edge_cases():
    with pytest.raises(ValueError):
        residual_scaling_study([], 0.5, WELL, C5)
    fit = residual_scaling_study([6], 0.46875, WELL, C5, refine=1)
    assert not fit.passed and np.isnan(fit.slope)


def test_scaling_window_invariance():
    ks = [6, 8, 12]
    a = residual_scaling_study(ks, 0.46875, WELL, C5, refine=1)
    b = residual_scaling_study(ks, 2 * 0.46875, WELL, C5, refine=1)
    assert abs(a.slope - b.slope) < 0.1


# ---------------------------------------------------------------- nonlinearity


def test_nonlinear_zero_direction():
    cfg = make_config(6, 0.46875, WELL, C5b)
    y = structured_sample(cfg, SampleSpec(sector=True))
    n1, n2 = nonlinear_eval(cfg, np.zeros(len(y)), np.zeros(len(y)), y)
    assert np.max(np.abs(n1)) < 1e-9 * np.max(ansatz_eval(cfg, None, y)[0]) ** (7 / 3)
    assert np.max(np.abs(n2)) < 1e-9 * np.max(ansatz_eval(cfg, None, y)[0]) ** (7 / 3)


def test_nonlinear_half_bubble_enforced():
    cfg = single(c=C5)
    y = dense_points(cfg, 10)
    W1 = ansatz_eval(cfg, None, y)[0]
    with pytest.raises(HalfBubbleViolation):
        nonlinear_eval(cfg, 0.6 * W1, np.zeros(len(y)), y)


@pytest.mark.parametrize("family", ["ansatz", "dilation"])
def test_nonlinear_ratio_bounded(family):
    cfg = make_config(6, 0.46875, WELL, C5b)
    out = nonlinear_estimate_study(cfg, [0.1 * 2.0**-i for i in range(1, 8)], family)
    assert out["passed"], out["spread"]
