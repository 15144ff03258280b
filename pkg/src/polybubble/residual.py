"""The polygonal ansatz, its residual, the nonlinear remainder, and the two
scaling studies.

Ansatz: W_1 = xi * s * S with S = sum_j w_{x_j, lam}, W_2 = kappa W_1.
Canonical residual (direct substitution):

    R_1 = -Lap W_1 + P W_1 - W_1^(2*-1) - (beta/2) W_1^(2*/2-1) W_2^(2*/2)
    R_2 = -Lap W_2 + Q W_2 - W_2^(2*-1) - (beta/2) W_2^(2*/2-1) W_1^(2*/2)

Because W_2 = kappa W_1 and s^(2*-2)(1 + (beta/2) kappa^(2*/2)) = 1 this
simplifies to

    R_1 = s [xi sum_j w_j^p - xi^p S^p] - s (2 grad xi . grad S + S Lap xi) + P W_1
    R_2 = kappa * (same with Q in place of P),       p = 2* - 1,

which is what is evaluated (no cancellation between large terms).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .bubbles import CouplingData, critical_exponent
from .fields import FieldPair
from .geometry import CutoffSpec, PolygonConfig, canonical_lambda, cutoff_eval, polygon_centers
from .norms import SampleSpec, norm_dstar, norm_star, structured_sample
from .potentials import PotentialPair


class HalfBubbleViolation(ValueError):
    """Perturbation outside the regime |phi| <= W_1/2, |psi| <= W_2/2."""


@dataclass
class AnsatzPieces:
    xi: np.ndarray
    grad_xi: np.ndarray
    lap_xi: np.ndarray
    S: np.ndarray
    grad_S: np.ndarray
    sum_wp: np.ndarray
    dlam_S: np.ndarray
    W1: np.ndarray
    W2: np.ndarray
    gW1: np.ndarray
    gW2: np.ndarray
    lW1: np.ndarray
    lW2: np.ndarray


def _check_points(y, N):
    y = np.atleast_2d(np.asarray(y, dtype=float))
    if y.shape[-1] != N:
        raise ValueError(f"points must have {N} coordinates")
    return y


def bubble_sums(cfg: PolygonConfig, y, chunk: int = 200_000):
    """S, grad S, sum w_j^p and dS/dlam over the polygon."""
    N = cfg.N
    y = _check_points(y, N)
    p = critical_exponent(N) - 1
    lam = cfg.lam
    cn = (N * (N - 2.0)) ** ((N - 2) / 4.0)
    X = polygon_centers(cfg)
    S = np.zeros(len(y))
    G = np.zeros(y.shape)
    Sp = np.zeros(len(y))
    dL = np.zeros(len(y))
    m = (N - 2) / 2.0
    for x in X:
        d = y - x
        rho2 = np.einsum("ij,ij->i", d, d)
        A = 1.0 + lam * lam * rho2
        w = cn * (lam / A) ** m
        S += w
        G -= ((N - 2) * lam * lam * w / A)[:, None] * d
        Sp += w**p
        dL += m * w * (1.0 - lam * lam * rho2) / (lam * A)
    return S, G, Sp, dL


def ansatz_pieces(cfg: PolygonConfig, y) -> AnsatzPieces:
    N = cfg.N
    y = _check_points(y, N)
    c = cfg.coupling
    s, kap = c.s, c.kappa
    xi, gxi, lxi = cutoff_eval(cfg.cutoff, y)
    S, gS, Sp, dL = bubble_sums(cfg, y)
    W1 = s * xi * S
    gW1 = s * (xi[:, None] * gS + S[:, None] * gxi)
    lW1 = s * (-xi * Sp + 2 * np.einsum("ij,ij->i", gxi, gS) + S * lxi)
    return AnsatzPieces(xi, gxi, lxi, S, gS, Sp, dL, W1, kap * W1, gW1, kap * gW1, lW1, kap * lW1)


def ansatz_eval(cfg: PolygonConfig, pp: PotentialPair | None, y):
    """(W1, W2, grad W1, grad W2, Lap W1, Lap W2) at points y (n, N)."""
    a = ansatz_pieces(cfg, y)
    return a.W1, a.W2, a.gW1, a.gW2, a.lW1, a.lW2


def ansatz_field(cfg: PolygonConfig) -> FieldPair:
    return FieldPair(
        lambda y: ansatz_pieces(cfg, y).W1,
        lambda y: ansatz_pieces(cfg, y).W2,
        lambda y: ansatz_pieces(cfg, y).gW1,
        lambda y: ansatz_pieces(cfg, y).gW2,
        lambda y: ansatz_pieces(cfg, y).lW1,
        lambda y: ansatz_pieces(cfg, y).lW2,
        tag="ansatz",
    )


def _potentials(pp: PotentialPair | None, y):
    if pp is None:
        z = np.zeros(len(y))
        return z, z
    P, Q, _, _ = pp.cartesian(y)
    return P, Q


def residual_eval(cfg: PolygonConfig, pp: PotentialPair | None, y, mode: str = "canonical"):
    """(R1, R2) at points y.

    ``mode``:
      * ``canonical``: the PDE residual of the ansatz (positive sign convention
        -Lap W + P W - f(W)).
      * ``printed``: the decomposition with the opposite sign, the cutoff power
        xi^(2*-1) in the subtracted single-bubble sums, and coupled sums carrying
        exponent 2*/2 on both factors.
      * ``printed_corrected``: as ``printed`` with the coupled sums carrying the
        system's exponents (2*/2 - 1, 2*/2).
    """
    N = cfg.N
    y = _check_points(y, N)
    c = cfg.coupling
    p = critical_exponent(N) - 1
    s, kap = c.s, c.kappa
    a = ansatz_pieces(cfg, y)
    P, Q = _potentials(pp, y)
    if mode == "canonical":
        core = s * (a.xi * a.sum_wp - a.xi**p * a.S**p) \
            - s * (2 * np.einsum("ij,ij->i", a.grad_xi, a.grad_S) + a.S * a.lap_xi)
        return core + P * a.W1, kap * core + Q * a.W2
    if mode not in ("printed", "printed_corrected"):
        raise ValueError(f"unknown residual mode {mode!r}")
    return _printed(cfg, pp, y, a, P, Q, corrected=(mode == "printed_corrected"))


def _printed(cfg, pp, y, a, P, Q, corrected):
    N = cfg.N
    c = cfg.coupling
    ps = critical_exponent(N)
    p = ps - 1
    s, kap, beta = c.s, c.kappa, c.beta
    W1, W2 = a.W1, a.W2
    Wstar1 = s * a.S
    Wstar2 = kap * Wstar1
    # single-bubble pieces W_{i,x_j} = xi U_j, summed powers
    X = polygon_centers(cfg)
    lam = cfg.lam
    cn = (N * (N - 2.0)) ** ((N - 2) / 4.0)
    e1 = ps / 2 - 1 if corrected else ps / 2
    sum1p = np.zeros(len(y))
    sum2p = np.zeros(len(y))
    mix1 = np.zeros(len(y))
    mix2 = np.zeros(len(y))
    for x in X:
        d = y - x
        w = cn * (lam / (1 + lam * lam * np.einsum("ij,ij->i", d, d))) ** ((N - 2) / 2)
        u1 = a.xi * s * w
        u2 = kap * u1
        sum1p += u1**p
        sum2p += u2**p
        mix1 += u1**e1 * u2 ** (ps / 2)
        mix2 += u2**e1 * u1 ** (ps / 2)
    gdot1 = s * np.einsum("ij,ij->i", a.grad_xi, a.grad_S)
    R1 = (W1**p - sum1p) - P * W1 + Wstar1 * a.lap_xi + 2 * gdot1 \
        + 0.5 * beta * (W1 ** (ps / 2 - 1) * W2 ** (ps / 2) - mix1)
    R2 = (W2**p - sum2p) - Q * W2 + Wstar2 * a.lap_xi + 2 * kap * gdot1 \
        + 0.5 * beta * (W2 ** (ps / 2 - 1) * W1 ** (ps / 2) - mix2)
    return R1, R2


def printed_discrepancy(cfg: PolygonConfig, pp, y, corrected: bool = True):
    """Pointwise printed + canonical (they differ only where 0 < xi < 1)."""
    r1, r2 = residual_eval(cfg, pp, y)
    q1, q2 = residual_eval(cfg, pp, y, "printed_corrected" if corrected else "printed")
    return q1 + r1, q2 + r2


def residual_field(cfg: PolygonConfig, pp) -> FieldPair:
    return FieldPair(lambda y: residual_eval(cfg, pp, y)[0], lambda y: residual_eval(cfg, pp, y)[1],
                     tag="residual")


# ---------------------------------------------------------------- nonlinearity


def nonlinear_eval(cfg: PolygonConfig, phi, psi, y=None, W=None, mode: str = "displayed",
                   strict: bool = True):
    """Taylor remainders of the nonlinearity at (W1, W2) in direction (phi, psi).

    N11 = (W1+phi)^p - W1^p - p W1^(p-1) phi,  p = 2*-1
    N12 = (W1+phi)^a (W2+psi)^b - W1^a W2^b - a W1^(a-1) W2^b phi - b W1^a W2^(b-1) psi,
          a = 2*/2 - 1, b = 2*/2
    and the mirrored N21, N22.  ``mode='displayed'`` returns
    (N11 + 2 N12, N21 + 2 N22); ``mode='consistent'`` weights the coupled
    remainders by beta/2 as in the system.

    ``phi``/``psi`` are arrays aligned with ``y`` (or ``W``=(W1, W2)).  With
    ``strict`` the regime |phi| <= W1/2, |psi| <= W2/2 is enforced; otherwise
    negative bases are clamped at zero.
    """
    if W is None:
        a = ansatz_pieces(cfg, y)
        W1, W2 = a.W1, a.W2
    else:
        W1, W2 = (np.asarray(w, dtype=float) for w in W)
    phi = np.asarray(phi, dtype=float)
    psi = np.asarray(psi, dtype=float)
    if strict:
        tol = 1e-14 * (1 + np.abs(W1))
        if np.any(np.abs(phi) > 0.5 * W1 + tol) or np.any(np.abs(psi) > 0.5 * W2 + tol * max(cfg.coupling.kappa, 1)):
            raise HalfBubbleViolation("perturbation exceeds half the ansatz (|phi| <= W1/2, |psi| <= W2/2 required)")
    ps = critical_exponent(cfg.N)
    p = ps - 1
    ea, eb = ps / 2 - 1, ps / 2
    U1 = np.maximum(W1 + phi, 0.0)
    U2 = np.maximum(W2 + psi, 0.0)
    pos1 = W1 > 0
    pos2 = W2 > 0
    safe1 = np.where(pos1, W1, 1.0)
    safe2 = np.where(pos2, W2, 1.0)

    def rem_power(U, Wv, safe, pos, d):
        lin = np.where(pos, Wv**p + p * safe ** (p - 1) * d, 0.0)
        return U**p - lin

    def rem_mixed(Ua, Ub, Wa, Wb, sa, sb, posa, posb, da, db):
        both = posa & posb
        base = Wa**ea * Wb**eb
        lin = np.where(both, base + ea * sa ** (ea - 1) * sb**eb * da + eb * sa**ea * sb ** (eb - 1) * db, 0.0)
        # where exactly one of W vanishes the first-order terms degenerate; use the value itself
        return Ua**ea * Ub**eb - np.where(both, lin, base)

    n11 = rem_power(U1, W1, safe1, pos1, phi)
    n21 = rem_power(U2, W2, safe2, pos2, psi)
    n12 = rem_mixed(U1, U2, W1, W2, safe1, safe2, pos1, pos2, phi, psi)
    n22 = rem_mixed(U2, U1, W2, W1, safe2, safe1, pos2, pos1, psi, phi)
    if mode == "displayed":
        return n11 + 2 * n12, n21 + 2 * n22
    if mode == "consistent":
        b = 0.5 * cfg.coupling.beta
        return n11 + b * n12, n21 + b * n22
    raise ValueError(f"unknown nonlinearity mode {mode!r}")


def nonlinear_quadratic(cfg: PolygonConfig, phi, psi, W, mode: str = "displayed"):
    """Leading (second-order) Taylor term of ``nonlinear_eval``."""
    W1, W2 = (np.asarray(w, dtype=float) for w in W)
    ps = critical_exponent(cfg.N)
    p = ps - 1
    ea, eb = ps / 2 - 1, ps / 2
    pos = (W1 > 0) & (W2 > 0)
    a = np.where(pos, W1, 1.0)
    b = np.where(pos, W2, 1.0)

    def quad_mixed(A, B, dA, dB):
        return 0.5 * (ea * (ea - 1) * A ** (ea - 2) * B**eb * dA**2
                      + 2 * ea * eb * A ** (ea - 1) * B ** (eb - 1) * dA * dB
                      + eb * (eb - 1) * A**ea * B ** (eb - 2) * dB**2)

    q11 = 0.5 * p * (p - 1) * a ** (p - 2) * phi**2
    q21 = 0.5 * p * (p - 1) * b ** (p - 2) * psi**2
    q12 = quad_mixed(a, b, phi, psi)
    q22 = quad_mixed(b, a, psi, phi)
    c = 2.0 if mode == "displayed" else 0.5 * cfg.coupling.beta
    return np.where(pos, q11 + c * q12, 0.0), np.where(pos, q21 + c * q22, 0.0)


# ---------------------------------------------------------------- studies


@dataclass
class ScalingFit:
    rows: list
    slope: float
    intercept: float
    fit_residual: float
    passed: bool
    threshold: float
    extras: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"rows": self.rows, "slope": self.slope, "intercept": self.intercept,
                "fit_residual": self.fit_residual, "passed": self.passed, "threshold": self.threshold,
                **self.extras}


def loglog_fit(x, y):
    lx, ly = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    A = np.c_[lx, np.ones_like(lx)]
    coef, res, *_ = np.linalg.lstsq(A, ly, rcond=None)
    resid = float(np.sqrt(np.mean((A @ coef - ly) ** 2)))
    return float(coef[0]), float(coef[1]), resid


def make_config(k: int, t: float, pp: PotentialPair, coupling: CouplingData, delta: float | None = None,
                cut: bool = True, rbar: float | None = None, ybar2=None) -> PolygonConfig:
    """Polygon at the potential's declared critical point, lambda = t k^((N-2)/(N-4))."""
    N = coupling.N
    lam = canonical_lambda(t, k, N)
    cutoff = CutoffSpec.around(pp.r0, pp.y0_2, delta) if cut else None
    return PolygonConfig(k, pp.r0 if rbar is None else rbar, pp.y0_2 if ybar2 is None else tuple(ybar2),
                         lam, coupling, cutoff)


def residual_norm(cfg: PolygonConfig, pp, spec: SampleSpec | None = None):
    spec = spec or SampleSpec(sector=True)
    pts = structured_sample(cfg, spec)
    return norm_dstar(residual_eval(cfg, pp, pts), cfg, pts)


def residual_scaling_study(k_list, t: float, pp: PotentialPair | None, coupling: CouplingData,
                           delta: float | None = None, spec: SampleSpec | None = None,
                           refine: int = 4, threshold: float = -0.95, configs=None) -> ScalingFit:
    """||R_k||_** for each k at lambda = t k^((N-2)/(N-4)) and its log-log slope against lambda.

    Every row also carries the value on a ``refine``-times refined sample and
    the relative change.  ``configs`` overrides the canonical placements.
    """
    k_list = list(k_list)
    spec = spec or SampleSpec(sector=True)
    if configs is None:
        if len(k_list) == 0:
            raise ValueError("empty k list")
        if any(b <= a for a, b in zip(k_list, k_list[1:])):
            raise ValueError("k list must be ascending")
        if pp is None:
            raise ValueError("potential required for canonical placement")
        configs = [make_config(k, t, pp, coupling, delta) for k in k_list]
    rows = []
    for cfg in configs:
        rep = residual_norm(cfg, pp, spec)
        row = {"k": cfg.k, "lambda": cfg.lam, "norm_dstar": rep.value, "sample_size": rep.sample_size,
               "argmax": rep.argmax_point}
        if refine and refine > 1:
            rf = residual_norm(cfg, pp, spec.refined(refine))
            row["norm_dstar_refined"] = rf.value
            row["refine_change"] = abs(rf.value - rep.value) / rep.value if rep.value > 0 else 0.0
        rows.append(row)
    if len(rows) < 2:
        return ScalingFit(rows, float("nan"), float("nan"), float("nan"), False, threshold,
                          {"reason": "at least two rows are needed for a fit"})
    slope, icpt, res = loglog_fit([r["lambda"] for r in rows], [r["norm_dstar"] for r in rows])
    stab = max((r.get("refine_change", 0.0) for r in rows), default=0.0)
    return ScalingFit(rows, slope, icpt, res, bool(slope <= threshold), threshold,
                      {"max_refine_change": stab})


def perturbation_family(cfg: PolygonConfig, y, h: float, family: str):
    """(phi, psi) for a test family at amplitude h: ``ansatz`` (h W) or ``dilation`` (h lam dW/dlam)."""
    a = ansatz_pieces(cfg, y)
    if family == "ansatz":
        return h * a.W1, h * a.W2, a
    if family == "dilation":
        s, kap = cfg.coupling.s, cfg.coupling.kappa
        phi = h * cfg.lam * s * a.xi * a.dlam_S
        return phi, kap * phi, a
    raise ValueError(f"unknown perturbation family {family!r}")


def lemma_delta(N: int) -> float:
    """Superlinearity exponent used in the ratio experiment: min(1, 0.9 * 4/(N-2))."""
    return min(1.0, 0.9 * 4.0 / (N - 2))


def nonlinear_estimate_study(cfg: PolygonConfig, h_list, family: str = "ansatz", delta: float | None = None,
                             spec: SampleSpec | None = None, mode: str = "displayed", taylor: bool = False):
    """r(h) = ||N(phi_h, psi_h)||_** / ||(phi_h, psi_h)||_*^(1+delta) over h.

    ``taylor`` replaces N by its quadratic Taylor term.  Returns a dict with the
    rows, the spread max r / min r, and ``passed`` (max_h r(h)/r(h_max) <= 3).
    """
    h_list = sorted(float(h) for h in h_list)
    if any(not (0 < h <= 0.5) for h in h_list):
        raise ValueError("all h must lie in (0, 1/2]")
    delta = lemma_delta(cfg.N) if delta is None else delta
    spec = spec or SampleSpec(sector=True)
    pts = structured_sample(cfg, spec)
    rows = []
    for h in h_list:
        phi, psi, a = perturbation_family(cfg, pts, h, family)
        if taylor:
            n1, n2 = nonlinear_quadratic(cfg, phi, psi, (a.W1, a.W2), mode)
        else:
            n1, n2 = nonlinear_eval(cfg, phi, psi, W=(a.W1, a.W2), mode=mode)
        num = norm_dstar((n1, n2), cfg, pts).value
        den = norm_star((phi, psi), cfg, pts).value
        rows.append({"h": h, "norm_N": num, "norm_phi": den, "ratio": num / den ** (1 + delta)})
    ratios = np.array([r["ratio"] for r in rows])
    rmax = ratios[-1]
    return {
        "family": family,
        "delta": delta,
        "rows": rows,
        "spread": float(ratios.max() / ratios.min()),
        "max_ratio_over_hmax": float(ratios.max() / rmax),
        "passed": bool(ratios.max() / rmax <= 3.0 and ratios.max() / ratios.min() < 3.0),
    }
