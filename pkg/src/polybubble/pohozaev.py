"""Local Pohozaev identities on tube domains and the concentration integrals.

For the system -Lap u + P u = F_u, -Lap v + Q v = F_v with
F = (|u|^(2*) + |v|^(2*) + beta |u|^(2*/2) |v|^(2*/2)) / 2*, integration by
parts over a domain D with outward normal nu gives, for any smooth pair,

translation along y_i:
    int_D sum (-Lap u + P u - F_u) d_i u
        = -1/2 int_D (d_i P u^2 + d_i Q v^2)
          + int_dD sum [-d_nu u d_i u + |grad u|^2 nu_i / 2 + P u^2 nu_i / 2] - F nu_i

dilation (multiplier y . grad u):
    int_D sum (-Lap u + P u - F_u) (y . grad u)
        = -(N-2)/2 int_D |grad u|^2 + |grad v|^2 - 1/2 int_D (N P + y . grad P) u^2
          - 1/2 int_D (N Q + y . grad Q) v^2 + N int_D F
          + int_dD sum [-d_nu u (y . grad u) + |grad u|^2 (y.nu) / 2 + P u^2 (y.nu) / 2] - F (y.nu)

For a solution the left side vanishes, so the volume part must balance the
boundary part.  ``residual`` is volume + boundary with both estimated by
Monte Carlo; ``raw`` is the left side, evaluated directly when Laplacians are
available, and agrees with ``residual`` up to quadrature error for any pair.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bubbles import BubbleParams, CouplingData, bubble_gradients, critical_exponent
from .fields import FieldPair
from .geometry import CutoffSpec, PolygonConfig, cylindrical, polygon_centers
from .potentials import PotentialPair
from .quadrature import QuadratureBudget, TubeDomain, constants_B_C, riesz_apply, tube_boundary_mc, tube_mc
from .residual import ansatz_field, ansatz_pieces, loglog_fit, residual_eval


@dataclass
class PohozaevReport:
    identity: str
    volume: float
    volume_stderr: float
    boundary: float
    boundary_stderr: float
    residual: float
    stderr: float
    rho: float
    raw: float | None = None
    raw_stderr: float | None = None
    extras: dict = field(default_factory=dict)

    @property
    def sigma(self) -> float:
        """|residual| in units of its standard error."""
        return abs(self.residual) / self.stderr if self.stderr > 0 else float("inf") * (self.residual != 0)

    def to_dict(self) -> dict:
        return {"identity": self.identity, "volume": self.volume, "volume_stderr": self.volume_stderr,
                "boundary": self.boundary, "boundary_stderr": self.boundary_stderr, "residual": self.residual,
                "stderr": self.stderr, "sigma": self.sigma, "rho": self.rho, "raw": self.raw,
                "raw_stderr": self.raw_stderr, **self.extras}


def bubble_pair(c: CouplingData, center, lam: float, kappa: float | None = None) -> FieldPair:
    """(s w, kappa s w) centered at ``center``; ``kappa`` overrides the synchronized value."""
    bp = BubbleParams(tuple(center), lam)
    kap = c.kappa if kappa is None else kappa
    s = c.s
    p = critical_exponent(c.N)

    def w(y):
        return bubble_gradients(bp, y).value

    def gw(y):
        return bubble_gradients(bp, y).grad_y

    return FieldPair(
        lambda y: s * w(y), lambda y: kap * s * w(y),
        lambda y: s * gw(y), lambda y: kap * s * gw(y),
        lambda y: -s * w(y) ** (p - 1), lambda y: -kap * s * w(y) ** (p - 1),
    )


def _pieces(fields: FieldPair, pp: PotentialPair | None, y, c: CouplingData):
    u, v = fields(y)
    gu, gv = fields.gradients(y)
    if pp is None:
        z = np.zeros(len(y))
        P, Q, gP, gQ = z, z, np.zeros(y.shape), np.zeros(y.shape)
    else:
        P, Q, gP, gQ = pp.cartesian(y)
    ps = critical_exponent(c.N)
    au, av = np.abs(u), np.abs(v)
    F = (au**ps + av**ps + c.beta * au ** (ps / 2) * av ** (ps / 2)) / ps
    Fu = np.sign(u) * (au ** (ps - 1) + 0.5 * c.beta * au ** (ps / 2 - 1) * av ** (ps / 2))
    Fv = np.sign(v) * (av ** (ps - 1) + 0.5 * c.beta * av ** (ps / 2 - 1) * au ** (ps / 2))
    return u, v, gu, gv, P, Q, gP, gQ, F, Fu, Fv


def _laps(fields: FieldPair, y):
    try:
        return fields.laplacians(y)
    except ValueError:
        return None


def _mc(kind, f, D, budget, centers, lam, stream):
    if kind == "volume":
        return tube_mc(f, D, budget, centers, lam, stream=stream)
    angles = np.arctan2(centers[:, 1], centers[:, 0]) if len(centers) else None
    return tube_boundary_mc(f, D, budget, stream=stream, angles=angles)


def _finish(identity, D, vol, bnd, raw, extras):
    res = float(vol.value + bnd.value)
    se = float(np.hypot(vol.stderr, bnd.stderr))
    return PohozaevReport(identity, float(vol.value), float(vol.stderr), float(-bnd.value), float(bnd.stderr),
                          res, se, D.rho, None if raw is None else float(raw.value),
                          None if raw is None else float(raw.stderr), extras)


def pohozaev_translation(fields: FieldPair, pp: PotentialPair | None, D: TubeDomain, i: int,
                         c: CouplingData, budget: QuadratureBudget | None = None, centers=None,
                         lam: float = 1.0, stream: int = 31) -> PohozaevReport:
    """Translation identity along the Cartesian axis ``i``."""
    budget = budget or QuadratureBudget(n_samples=1 << 16)
    if not 0 <= i < D.N:
        raise ValueError("axis out of range")
    centers = np.empty((0, D.N)) if centers is None else np.atleast_2d(centers)

    def vol(y):
        u, v, gu, gv, P, Q, gP, gQ, *_ = _pieces(fields, pp, y, c)
        return -0.5 * (gP[:, i] * u**2 + gQ[:, i] * v**2)

    def bnd(y, nu):
        u, v, gu, gv, P, Q, gP, gQ, F, _, _ = _pieces(fields, pp, y, c)
        out = -F * nu[:, i]
        for a, ga, V in ((u, gu, P), (v, gv, Q)):
            dn = np.einsum("ij,ij->i", ga, nu)
            out += -dn * ga[:, i] + 0.5 * np.einsum("ij,ij->i", ga, ga) * nu[:, i] + 0.5 * V * a**2 * nu[:, i]
        return out

    def raw(y):
        u, v, gu, gv, P, Q, gP, gQ, F, Fu, Fv = _pieces(fields, pp, y, c)
        lu, lv = _laps(fields, y)
        return (-lu + P * u - Fu) * gu[:, i] + (-lv + Q * v - Fv) * gv[:, i]

    V = _mc("volume", vol, D, budget, centers, lam, stream)
    B = _mc("boundary", bnd, D, budget, centers, lam, stream + 1)
    R = _mc("volume", raw, D, budget, centers, lam, stream) if _laps(fields, D_point(D)) is not None else None
    return _finish(f"translation-{i}", D, V, B, R, {"axis": i})


def pohozaev_dilation(fields: FieldPair, pp: PotentialPair | None, D: TubeDomain, c: CouplingData,
                      budget: QuadratureBudget | None = None, centers=None, lam: float = 1.0,
                      stream: int = 41) -> PohozaevReport:
    """Dilation identity with multiplier y . grad u."""
    budget = budget or QuadratureBudget(n_samples=1 << 16)
    N = D.N
    centers = np.empty((0, N)) if centers is None else np.atleast_2d(centers)

    def vol(y):
        u, v, gu, gv, P, Q, gP, gQ, F, _, _ = _pieces(fields, pp, y, c)
        grad2 = np.einsum("ij,ij->i", gu, gu) + np.einsum("ij,ij->i", gv, gv)
        yP = np.einsum("ij,ij->i", y, gP)
        yQ = np.einsum("ij,ij->i", y, gQ)
        terms = np.c_[-(N - 2) / 2.0 * grad2, -0.5 * (N * P + yP) * u**2 - 0.5 * (N * Q + yQ) * v**2, N * F]
        return np.c_[terms, terms.sum(1)]

    def bnd(y, nu):
        u, v, gu, gv, P, Q, gP, gQ, F, _, _ = _pieces(fields, pp, y, c)
        yn = np.einsum("ij,ij->i", y, nu)
        out = -F * yn
        for a, ga, V in ((u, gu, P), (v, gv, Q)):
            dn = np.einsum("ij,ij->i", ga, nu)
            yg = np.einsum("ij,ij->i", y, ga)
            out += -dn * yg + 0.5 * np.einsum("ij,ij->i", ga, ga) * yn + 0.5 * V * a**2 * yn
        return out

    def raw(y):
        u, v, gu, gv, P, Q, gP, gQ, F, Fu, Fv = _pieces(fields, pp, y, c)
        lu, lv = _laps(fields, y)
        return ((-lu + P * u - Fu) * np.einsum("ij,ij->i", y, gu)
                + (-lv + Q * v - Fv) * np.einsum("ij,ij->i", y, gv))

    Vall = _mc("volume", vol, D, budget, centers, lam, stream)
    vals = np.atleast_1d(Vall.value)
    errs = np.atleast_1d(Vall.stderr)

    class _V:
        value = vals[3]
        stderr = errs[3]

    B = _mc("boundary", bnd, D, budget, centers, lam, stream + 1)
    R = _mc("volume", raw, D, budget, centers, lam, stream) if _laps(fields, D_point(D)) is not None else None
    extras = {"gradient_term": float(vals[0]), "potential_term": float(vals[1]), "nonlinear_term": float(vals[2])}
    return _finish("dilation", D, _V, B, R, extras)


def D_point(D: TubeDomain) -> np.ndarray:
    """A point on the core circle of D."""
    return np.r_[D.r0, 0.0, D.y0_2][None, :]


# ------------------------------------------------------------------ rho selection


def boundary_energy(fields: FieldPair, D: TubeDomain, N: int, budget: QuadratureBudget | None = None,
                    stream: int = 51):
    """int_dD |grad phi|^2 + phi^2 + |phi|^(2*) + the same for psi."""
    budget = budget or QuadratureBudget(n_samples=1 << 12)
    ps = critical_exponent(N)

    def f(y, nu):
        u, v = fields(y)
        gu, gv = fields.gradients(y)
        return (np.einsum("ij,ij->i", gu, gu) + u**2 + np.abs(u) ** ps
                + np.einsum("ij,ij->i", gv, gv) + v**2 + np.abs(v) ** ps)

    return tube_boundary_mc(f, D, budget, stream)


def rho_candidates(spec: CutoffSpec, n_candidates: int) -> np.ndarray:
    """Midpoints of n equal cells of (3 delta, 4 delta); a single candidate is 3.5 delta."""
    if n_candidates < 1:
        raise ValueError("n_candidates must be >= 1")
    d = spec.delta
    return 3 * d + d * (np.arange(n_candidates) + 0.5) / n_candidates


def select_rho(fields: FieldPair, spec: CutoffSpec, n_candidates: int = 5,
               budget: QuadratureBudget | None = None) -> tuple[float, list]:
    """Candidate with the smallest boundary energy (first one on ties); common random numbers."""
    rhos = rho_candidates(spec, n_candidates)
    energies = [float(boundary_energy(fields, TubeDomain(spec.r0, spec.y0_2, r), spec.N, budget).value)
                for r in rhos]
    i = int(np.argmin(energies))
    return float(rhos[i]), energies


# ------------------------------------------------------------------ concentration


def _u_sq_integral(cfg: PolygonConfig, g, D: TubeDomain, budget, stream):
    def f(y):
        r, _, y2 = cylindrical(y)
        return g(r, y2) * ansatz_pieces(cfg, y).W1 ** 2

    return tube_mc(f, D, budget, polygon_centers(cfg), cfg.lam, stream=stream)


def concentration_ratio(cfg: PolygonConfig, g=None, rho: float | None = None,
                        budget: QuadratureBudget | None = None, stream: int = 61) -> dict:
    """lam^2 / (k B_U) int_{D_rho} g u_k^2, divided by g(rbar, ybar''); u_k is the ansatz."""
    budget = budget or QuadratureBudget(n_samples=1 << 16)
    if cfg.cutoff is None:
        raise ValueError("concentration needs a cutoff tube")
    g = g or (lambda r, y2: np.ones(np.shape(r)))
    rho = 3.5 * cfg.cutoff.delta if rho is None else rho
    D = TubeDomain(cfg.cutoff.r0, cfg.cutoff.y0_2, rho)
    B_U = constants_B_C(cfg.coupling).B_U
    res = _u_sq_integral(cfg, g, D, budget, stream)
    g0 = float(np.asarray(g(np.array([cfg.rbar]), np.asarray(cfg.ybar2)[None, :])).ravel()[0])
    scale = cfg.lam**2 / (cfg.k * B_U)
    out = {"k": cfg.k, "lambda": cfg.lam, "rho": rho, "integral": float(res.value), "stderr": float(res.stderr),
           "normalized": float(res.value * scale), "g_center": g0}
    out["ratio"] = float(res.value * scale / g0) if g0 != 0 else float("nan")
    out["ratio_stderr"] = float(res.stderr * scale / abs(g0)) if g0 != 0 else float("nan")
    return out


def concentration_study(k_list, t: float, pp: PotentialPair, c: CouplingData, g=None, tol: float = 0.15,
                        budget: QuadratureBudget | None = None, delta: float | None = None) -> dict:
    """Ratios over k; passes when the gap to 1 shrinks monotonically and ends within ``tol``."""
    from .residual import make_config

    rows = [concentration_ratio(make_config(k, t, pp, c, delta), g, budget=budget) for k in k_list]
    gaps = [abs(r["ratio"] - 1) for r in rows]
    monotone = all(gaps[i + 1] <= gaps[i] for i in range(len(gaps) - 1))
    return {"rows": rows, "gaps": gaps, "monotone": monotone, "final_within": bool(gaps[-1] < tol),
            "passed": bool(monotone and gaps[-1] < tol), "tol": tol}


def reduced_equations_residual(state, pp: PotentialPair, c: CouplingData, cfg: PolygonConfig,
                               fields: FieldPair | None = None, rho: float | None = None,
                               budget: QuadratureBudget | None = None, stream: int = 71) -> dict:
    """Pohozaev-derived equations integrated against u^2, v^2 on D_rho.

    Entries are lam^2/(k B_U) int_D (d P u^2 + d Q v^2) for d = d_r and d_{y''_i},
    compared with grad G(rbar, ybar'') from the reduced state.  The split
    r-equation (2r)^(-1) d_r(r^2 P) u^2 + ... is reported as well.
    """
    budget = budget or QuadratureBudget(n_samples=1 << 16)
    fields = fields or ansatz_field(cfg)
    if cfg.cutoff is None:
        raise ValueError("reduced equations need a cutoff tube")
    rho = 3.5 * cfg.cutoff.delta if rho is None else rho
    D = TubeDomain(cfg.cutoff.r0, cfg.cutoff.y0_2, rho)
    N = c.N

    def f(y):
        u, v = fields(y)
        r, _, y2 = cylindrical(y)
        pr, py = pp.grad_P(r, y2)
        qr, qy = pp.grad_Q(r, y2)
        P, Q = pp.P(r, y2), pp.Q(r, y2)
        cols = [pr * u**2 + qr * v**2] + [py[:, j] * u**2 + qy[:, j] * v**2 for j in range(N - 2)]
        cols.append((P + 0.5 * r * pr) * u**2 + (Q + 0.5 * r * qr) * v**2)
        return np.stack(cols, 1)

    res = tube_mc(f, D, budget, polygon_centers(cfg), cfg.lam, stream=stream)
    scale = cfg.lam**2 / (cfg.k * constants_B_C(c).B_U)
    vals = np.atleast_1d(res.value) * scale
    errs = np.atleast_1d(res.stderr) * scale
    x = state.x if hasattr(state, "x") else np.asarray(state, dtype=float)
    gr, gy = pp.grad_G(x[1], x[2:], c.kappa)
    G = float(pp.G(x[1], x[2:], c.kappa))
    pred = np.r_[float(gr), np.asarray(gy, dtype=float)]
    return {"k": cfg.k, "lambda": cfg.lam, "rho": rho, "measured": vals[:N - 1].tolist(),
            "stderr": errs[:N - 1].tolist(), "predicted": pred.tolist(),
            "residual": (vals[:N - 1] - pred).tolist(), "residual_norm": float(np.linalg.norm(vals[:N - 1])),
            "split_r_measured": float(vals[N - 1]), "split_r_predicted": float(G + 0.5 * x[1] * float(gr))}


# ------------------------------------------------------------------ boundary energy of the first iterate


def first_iterate_boundary_energy(cfg: PolygonConfig, pp, rho: float | None = None,
                                  budget: QuadratureBudget | None = None,
                                  boundary_budget: QuadratureBudget | None = None, h: float | None = None) -> dict:
    """int_dD_rho of the boundary energy of phi^1 = Riesz(-R), gradients by central differences.

    Outside the cutoff support the span component vanishes, so phi^1 is the
    plain Riesz potential there.
    """
    from .correction import default_proposal

    budget = budget or QuadratureBudget(n_samples=1 << 14)
    boundary_budget = boundary_budget or QuadratureBudget(n_samples=256, block_size=64)
    if cfg.cutoff is None:
        raise ValueError("needs a cutoff tube")
    delta = cfg.cutoff.delta
    rho = 3.5 * delta if rho is None else rho
    h = 1e-3 * delta if h is None else h
    D = TubeDomain(cfg.cutoff.r0, cfg.cutoff.y0_2, rho)
    prop = default_proposal(cfg)
    N = cfg.N

    def minus_r(z):
        r1, r2 = residual_eval(cfg, pp, z)
        return -np.c_[r1, r2]

    def f(y, nu):
        n = len(y)
        shifts = [np.zeros(N)] + [s * h * e for e in np.eye(N) for s in (1.0, -1.0)]
        pts = np.concatenate([y + d for d in shifts])
        vals, _ = riesz_apply(minus_r, pts, prop, budget, chart_radius=np.full(len(pts), 2 * delta))
        vals = vals.reshape(len(shifts), n, 2)
        phi = vals[0]
        grad = np.stack([(vals[1 + 2 * a] - vals[2 + 2 * a]) / (2 * h) for a in range(N)], 1)
        ps = critical_exponent(N)
        return (np.sum(grad**2, axis=(1, 2)) + np.sum(phi**2, 1) + np.sum(np.abs(phi) ** ps, 1))

    res = tube_boundary_mc(f, D, boundary_budget, stream=81)
    return {"k": cfg.k, "lambda": cfg.lam, "rho": rho, "energy": float(res.value), "stderr": float(res.stderr)}


def boundary_energy_study(k_list, t: float, pp, c: CouplingData, threshold: float = -2.0, **kw) -> dict:
    """Slope of log(energy / k) against log lambda."""
    from .residual import make_config

    rows = [first_iterate_boundary_energy(make_config(k, t, pp, c), pp, **kw) for k in k_list]
    slope = loglog_fit([r["lambda"] for r in rows], [r["energy"] / r["k"] for r in rows])[0] \
        if len(rows) > 1 else float("nan")
    return {"rows": rows, "slope": slope, "threshold": threshold, "passed": bool(slope <= threshold)}
