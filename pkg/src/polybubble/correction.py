"""Orthogonality projection and Picard iterates for the correction (phi, psi).

Kernel directions, for bubble j and slot l in (rbar, lambda, ybar''_1..):

    Y_{j,l} = xi * dU_j/d(slot),   Z_{j,l} = kappa Y_{j,l},   U_j = s w_{x_j, lam}
    K_{j,l} = (W_{1,x_j}^(2*-2) Y_{j,l}, W_{2,x_j}^(2*-2) Z_{j,l})
            = xi^(2*-1) U_j^(2*-2) dU_j (1, kappa^(2*-1))

Inner products are Monte Carlo sums over a fixed node set drawn from the
bubble/tube mixture; projecting with the same nodes makes the discrete
orthogonality exact.

The correction is produced with the Newtonian potential as parametrix:
phi^1 = Riesz(-R_1) minus its span component, where R is the canonical
residual (so W + phi^1 approximately solves the system).  The projection
coefficients of Riesz(-R) use the adjoint identity
<K, Riesz(h)> = <Riesz(K), h> with Riesz(U^(2*-2) dU) = s^(2*-2) dU / (2*-1)
for the uncut bubble; the cutoff modifies K only at distance > delta from
the centers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bubbles import critical_exponent
from .fields import FieldPair
from .geometry import PolygonConfig, cutoff_eval, polygon_centers
from .norms import SampleSpec, norm_dstar, norm_star, structured_sample
from .quadrature import (MixtureProposal, QuadratureBudget, TubeDomain, _block_sizes, combine_blocks,
                         green_constant, riesz_apply)
from .residual import ansatz_pieces, bubble_sums, loglog_fit, nonlinear_eval, residual_eval


class GramError(RuntimeError):
    pass


def slot_names(N: int) -> list[str]:
    return ["rbar", "lambda"] + [f"ybar2_{i + 1}" for i in range(N - 2)]


def slot_exponents(N: int) -> np.ndarray:
    """n_l: Y_{j,l} scales like lam^(n_l) times a profile (lambda slot -1, translations +1)."""
    out = np.ones(N)
    out[1] = -1.0
    return out


def default_proposal(cfg: PolygonConfig, tube_weight: float = 0.1) -> MixtureProposal:
    tube = None
    if cfg.cutoff is not None:
        rho = 2 * cfg.cutoff.delta
        if rho < cfg.cutoff.r0:
            tube = TubeDomain(cfg.cutoff.r0, cfg.cutoff.y0_2, rho)
    return MixtureProposal(polygon_centers(cfg), cfg.lam, tube, tube_weight)


def kernel_directions(cfg: PolygonConfig, y, cut: bool = True):
    """Y_{j,l}(y) (n, k, N) and U_j(y) (n, k); ``cut=False`` drops xi."""
    N = cfg.N
    y = np.atleast_2d(np.asarray(y, dtype=float))
    X = polygon_centers(cfg)
    lam = cfg.lam
    s = cfg.coupling.s
    cn = (N * (N - 2.0)) ** ((N - 2) / 4.0)
    xi = cutoff_eval(cfg.cutoff, y)[0] if cut else np.ones(len(y))
    k = len(X)
    Y = np.empty((len(y), k, N))
    U = np.empty((len(y), k))
    m = (N - 2) / 2.0
    for j, x in enumerate(X):
        d = y - x
        rho2 = np.einsum("ij,ij->i", d, d)
        A = 1 + lam * lam * rho2
        w = cn * (lam / A) ** m
        grad = -((N - 2) * lam * lam * w / A)[:, None] * d
        dx = -grad  # derivative with respect to the center
        th = 2 * np.pi * j / k
        Y[:, j, 0] = dx[:, 0] * np.cos(th) + dx[:, 1] * np.sin(th)
        Y[:, j, 1] = m * w * (1 - lam * lam * rho2) / (lam * A)
        Y[:, j, 2:] = dx[:, 2:]
        U[:, j] = s * w
    Y *= s * xi[:, None, None]
    return Y, U


@dataclass
class KernelBasis:
    cfg: PolygonConfig
    nodes: np.ndarray
    weights: np.ndarray
    block_sizes: list
    Y: np.ndarray
    K1: np.ndarray
    gram: np.ndarray
    gram_err: np.ndarray
    labels: list
    cond_raw: float
    cond_scaled: float
    asymmetry: float

    @property
    def kappa_factor(self) -> float:
        """K2 = kappa^(2*-1) K1."""
        c = self.cfg.coupling
        return c.kappa ** (critical_exponent(c.N) - 1)

    def eval_Y(self, y) -> np.ndarray:
        Y, _ = kernel_directions(self.cfg, y)
        return Y.reshape(len(Y), -1)

    def inner(self, F1, F2, K1=None):
        """<(K1, K2), (F1, F2)> for every basis element, with MC standard errors."""
        K1 = self.K1 if K1 is None else K1
        F1 = np.asarray(F1, dtype=float).reshape(len(self.nodes))
        F2 = np.asarray(F2, dtype=float).reshape(len(self.nodes))
        n = len(self.nodes)
        g = K1 * (F1 + self.kappa_factor * F2)[:, None] * (self.weights * n)[:, None]
        sums, sq, start = [], [], 0
        for b in self.block_sizes:
            sums.append(g[start:start + b].sum(0))
            sq.append((g[start:start + b] ** 2).sum(0))
            start += b
        mean, err = combine_blocks(sums, sq, self.block_sizes)
        return mean, err

    def solve(self, b):
        return np.linalg.solve(self.gram, b)

    def to_dict(self) -> dict:
        d = np.diag(self.gram)
        return {"labels": self.labels, "gram_diag": d.tolist(), "gram_diag_err": np.diag(self.gram_err).tolist(),
                "cond_raw": self.cond_raw, "cond_scaled": self.cond_scaled, "asymmetry": self.asymmetry,
                "nodes": len(self.nodes)}


def kernel_basis(cfg: PolygonConfig, budget: QuadratureBudget | None = None, stream: int = 11,
                 max_cond: float = 1e8) -> KernelBasis:
    """Basis functions at a fixed node set and their Gram matrix <K_a, (Y_b, Z_b)>."""
    budget = budget or QuadratureBudget(n_samples=1 << 15)
    prop = default_proposal(cfg)
    N = cfg.N
    ps = critical_exponent(N)
    kap = cfg.coupling.kappa
    nb, sizes = _block_sizes(budget.n_samples, budget.block_size)
    zs, qs = [], []
    for b in range(nb):
        rng = np.random.default_rng([budget.seed, stream, b])
        z = prop.sample(rng, sizes[b], budget.qmc)
        zs.append(z)
        qs.append(prop.density(z))
    Z = np.concatenate(zs)
    q = np.concatenate(qs)
    w = 1.0 / (len(Z) * q)
    Y, U = kernel_directions(cfg, Z)
    xi = cutoff_eval(cfg.cutoff, Z)[0]
    K1 = ((xi[:, None] * U) ** (ps - 2))[:, :, None] * Y
    Yf = Y.reshape(len(Z), -1)
    K1f = K1.reshape(len(Z), -1)
    kf = kap ** (ps - 1)
    factor = 1 + kf * kap
    sums, sq, start = [], [], 0
    for b in sizes:
        sl = slice(start, start + b)
        Kw = factor * K1f[sl] * (w[sl] * len(Z))[:, None]
        sums.append(Kw.T @ Yf[sl])
        sq.append((Kw**2).T @ (Yf[sl] ** 2))
        start += b
    gram, gerr = combine_blocks(np.stack(sums), np.stack(sq), sizes)
    labels = [f"{j + 1}:{name}" for j in range(cfg.k) for name in slot_names(N)]
    cond_raw = float(np.linalg.cond(gram))
    dg = np.sqrt(np.abs(np.diag(gram)))
    if np.any(dg == 0):
        raise GramError("degenerate Gram matrix (zero diagonal); increase the budget")
    scaled = gram / np.outer(dg, dg)
    cond_scaled = float(np.linalg.cond(scaled))
    asym = float(np.max(np.abs(scaled - scaled.T)))
    if not np.isfinite(cond_scaled) or cond_scaled > max_cond:
        raise GramError(f"ill-conditioned Gram matrix (scaled condition {cond_scaled:.3g}); "
                        "use a larger lambda or a larger node budget")
    return KernelBasis(cfg, Z, w, sizes, Yf, K1f, gram, gerr, labels, cond_raw, cond_scaled, asym)


def project_out(phi_psi, basis: KernelBasis):
    """Remove the span of (Y, Z) so that <K_l, (phi, psi)> = 0 on the node set.

    ``phi_psi`` is a FieldPair or a tuple of node values.  Returns the
    projected FieldPair (or node values) and the coefficients.
    """
    kap = basis.cfg.coupling.kappa
    if isinstance(phi_psi, FieldPair):
        F1, F2 = phi_psi(basis.nodes)
    else:
        F1, F2 = (np.asarray(v, dtype=float) for v in phi_psi)
    b, _ = basis.inner(F1, F2)
    a = basis.solve(b)
    if isinstance(phi_psi, FieldPair):
        fp = phi_psi

        def u(y):
            return fp.u(y) - basis.eval_Y(y) @ a

        def v(y):
            return fp.v(y) - kap * (basis.eval_Y(y) @ a)

        return FieldPair(u, v, tag=fp.tag), a
    return (F1 - basis.Y @ a, F2 - kap * (basis.Y @ a)), a


def adjoint_coefficients(cfg: PolygonConfig, basis: KernelBasis, h1, h2):
    """<K_l, Riesz(h)> through <Riesz(K_l), h>, h given at the basis nodes."""
    N = cfg.N
    ps = critical_exponent(N)
    s = cfg.coupling.s
    Yu, _ = kernel_directions(cfg, basis.nodes, cut=False)
    T1 = (s ** (ps - 2) / (ps - 1)) * Yu.reshape(len(basis.nodes), -1)
    return basis.inner(h1, h2, K1=T1)


@dataclass
class CorrectionReport:
    k: int
    lam: float
    iterates: int
    norms: list
    multipliers: list
    half_bubble_ratio: float
    half_bubble_core_ratio: float
    half_bubble_ok: bool
    status: str
    residual_norm: float
    stderr_ratio: float
    ratios: list = field(default_factory=list)
    extras: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "k": self.k, "lambda": self.lam, "iterates": self.iterates, "norms": self.norms,
            "multipliers": self.multipliers, "half_bubble_ratio": self.half_bubble_ratio,
            "half_bubble_core_ratio": self.half_bubble_core_ratio, "half_bubble_ok": self.half_bubble_ok,
            "status": self.status, "residual_norm": self.residual_norm, "stderr_ratio": self.stderr_ratio,
            "ratios": self.ratios, **self.extras,
        }


def correction_sample(cfg: PolygonConfig) -> SampleSpec:
    """Sector sample used for corrections (coarser section directions)."""
    return SampleSpec(sector=True, directions=16, annulus_circle=8, annulus_random=8, annulus_shells=9,
                      annulus_theta=4, far_points=64)


def _minus_residual(cfg, pp):
    def f(z):
        r1, r2 = residual_eval(cfg, pp, z)
        return -np.c_[r1, r2]
    return f


@dataclass
class _FirstIterate:
    pts: np.ndarray
    raw: np.ndarray
    raw_err: np.ndarray
    basis: KernelBasis
    b0: np.ndarray
    coef: np.ndarray
    phi: np.ndarray
    psi: np.ndarray


def _first(cfg, pp, budget, spec, basis_budget, extra_points=None):
    pts = structured_sample(cfg, spec)
    if extra_points is not None:
        pts = np.concatenate([pts, extra_points])
    prop = default_proposal(cfg)
    raw, err = riesz_apply(_minus_residual(cfg, pp), pts, prop, budget)
    basis = kernel_basis(cfg, basis_budget)
    mr1, mr2 = (-v for v in residual_eval(cfg, pp, basis.nodes))
    b0, _ = adjoint_coefficients(cfg, basis, mr1, mr2)
    coef = basis.solve(b0)
    Ysp = basis.eval_Y(pts) @ coef
    kap = cfg.coupling.kappa
    phi = raw[:, 0] - Ysp
    psi = raw[:, 1] - kap * Ysp
    return _FirstIterate(pts, raw, err, basis, b0, coef, phi, psi)


def _half_bubble(cfg, pts, phi, psi):
    S = bubble_sums(cfg, pts)[0]
    s, kap = cfg.coupling.s, cfg.coupling.kappa
    U = s * S
    ratio = np.maximum(np.abs(phi) / (0.5 * U), np.abs(psi) / (0.5 * kap * U))
    xi = cutoff_eval(cfg.cutoff, pts)[0]
    core = xi >= 1.0
    return float(ratio.max()), float(ratio[core].max()) if np.any(core) else 0.0


def _multiplier_rows(cfg, coef, rnorm):
    N = cfg.N
    names = slot_names(N)
    n = slot_exponents(N)
    c1 = coef[:N]
    rows = []
    for l in range(N):
        scaled = abs(c1[l]) * cfg.lam ** n[l] / rnorm if rnorm > 0 else 0.0
        rows.append({"slot": names[l], "coefficient": float(c1[l]), "scaled": float(scaled),
                     "within_bound": bool(scaled <= 10.0)})
    return rows


def picard_first_iterate(cfg: PolygonConfig, pp, budget: QuadratureBudget | None = None,
                         spec: SampleSpec | None = None, basis_budget: QuadratureBudget | None = None
                         ) -> CorrectionReport:
    """phi^1 = project_out(Riesz(-R_1), Riesz(-R_2)) on the norm sample."""
    budget = budget or QuadratureBudget(n_samples=1 << 15)
    spec = spec or correction_sample(cfg)
    fi = _first(cfg, pp, budget, spec, basis_budget)
    return _report_first(cfg, pp, fi)


def _report_first(cfg, pp, fi: _FirstIterate) -> CorrectionReport:
    nrep = norm_star((fi.phi, fi.psi), cfg, fi.pts)
    rnorm = norm_dstar(tuple(residual_eval(cfg, pp, fi.pts)), cfg, fi.pts).value
    hb, hbc = _half_bubble(cfg, fi.pts, fi.phi, fi.psi)
    i = int(np.argmin(np.linalg.norm(fi.pts - np.asarray(nrep.argmax_point), axis=1)))
    val = max(abs(fi.phi[i]), 1e-300)
    stderr_ratio = float(fi.raw_err[i, 0] / val) if nrep.value > 0 else 0.0
    status = "inconclusive" if stderr_ratio > 0.2 else "contracting"
    return CorrectionReport(
        cfg.k, cfg.lam, 1, [nrep.value], [_multiplier_rows(cfg, fi.coef, rnorm)], hb, hbc, bool(hb <= 1.0),
        status, rnorm, stderr_ratio, [],
        {"argmax": nrep.argmax_point, "sample_size": nrep.sample_size, "basis": fi.basis.to_dict(),
         "norm_components": list(nrep.components)},
    )


def first_iterate_study(k_list, t: float, pp, coupling, budget=None, delta=None, threshold: float = -0.95,
                        spec: SampleSpec | None = None, basis_budget=None):
    """First-iterate norms over k along the canonical window, with log-log slope."""
    from .residual import make_config

    reports = []
    for k in k_list:
        cfg = make_config(k, t, pp, coupling, delta)
        reports.append(picard_first_iterate(cfg, pp, budget, spec, basis_budget))
    out = {"reports": [r.to_dict() for r in reports]}
    if len(reports) >= 2:
        slope, icpt, res = loglog_fit([r.lam for r in reports], [r.norms[0] for r in reports])
    else:
        slope = icpt = res = float("nan")
    out.update({
        "slope": slope, "intercept": icpt, "fit_residual": res, "threshold": threshold,
        "slope_ok": bool(slope <= threshold),
        "half_bubble_ok": bool(all(r.half_bubble_ok for r in reports)),
        "inconclusive": bool(any(r.status == "inconclusive" for r in reports)),
    })
    out["passed"] = bool(out["slope_ok"] and out["half_bubble_ok"])
    return out


def _nystrom(ys, nodes, weights, values, N, exclude=None):
    """sum_i G(y, z_i) values_i w_i, the near-diagonal kernel softened at the node spacing."""
    cg = green_constant(N)
    h = (weights) ** (1.0 / N)
    out = np.zeros((len(ys), values.shape[1]))
    for s in range(0, len(ys), 256):
        Y = ys[s:s + 256]
        d2 = np.sum((Y[:, None, :] - nodes[None]) ** 2, axis=2) + (h**2)[None]
        K = cg * d2 ** ((2.0 - N) / 2.0) * weights[None]
        if exclude is not None:
            idx = np.arange(s, s + len(Y))
            m = idx < len(nodes)
            K[np.flatnonzero(m), idx[m]] = 0.0
        out[s:s + 256] = K @ values
    return out


def picard_loop(cfg: PolygonConfig, pp, max_iter: int = 5, budget: QuadratureBudget | None = None,
                spec: SampleSpec | None = None, basis_budget: QuadratureBudget | None = None,
                tol: float = 1e-3) -> CorrectionReport:
    """Iterate phi^{m+1} = project_out(Riesz(-R + N(phi^m))) (best effort).

    Iterates live on the basis nodes plus the norm sample.  The Riesz
    potential of N(phi^m) is a Nystrom sum over the basis nodes; the
    nonlinearity uses the system's beta/2 weighting with bases clamped at
    zero.  Stops when ||phi^{m+1} - phi^m||_* < tol ||phi^1||_*.
    """
    budget = budget or QuadratureBudget(n_samples=1 << 15)
    basis_budget = basis_budget or QuadratureBudget(n_samples=1 << 13, seed=budget.seed)
    spec = spec or correction_sample(cfg)
    if max_iter <= 1:
        return picard_first_iterate(cfg, pp, budget, spec, basis_budget)
    # first iterate evaluated at the norm sample and the basis nodes
    pre = kernel_basis(cfg, basis_budget)
    fi = _first(cfg, pp, budget, spec, basis_budget, extra_points=pre.nodes)
    first = _report_first(cfg, pp, fi)
    npts = len(fi.pts) - len(pre.nodes)
    basis = fi.basis
    kap = cfg.coupling.kappa
    raw0 = fi.raw
    phi, psi = fi.phi, fi.psi
    W = ansatz_pieces(cfg, fi.pts)
    W1, W2 = W.W1, W.W2
    nodes_sl = slice(npts, None)
    Ynodes = basis.eval_Y(fi.pts)
    sample_pts = fi.pts[:npts]
    norm0 = norm_star((phi[:npts], psi[:npts]), cfg, sample_pts).value
    norms = [norm0]
    coefs = [fi.coef]
    diffs = []
    status = first.status
    for _ in range(1, max_iter):
        n1, n2 = nonlinear_eval(cfg, phi[nodes_sl], psi[nodes_sl], W=(W1[nodes_sl], W2[nodes_sl]),
                                mode="consistent", strict=False)
        vals = np.c_[n1, n2]
        add = _nystrom(fi.pts, basis.nodes, basis.weights, vals, cfg.N, exclude=None)
        # self term excluded on the node rows
        own = _nystrom(fi.pts[nodes_sl], basis.nodes, basis.weights, vals, cfg.N, exclude=True)
        add[nodes_sl] = own
        bN, _ = adjoint_coefficients(cfg, basis, n1, n2)
        coef = basis.solve(fi.b0 + bN)
        span = Ynodes @ coef
        new_phi = raw0[:, 0] + add[:, 0] - span
        new_psi = raw0[:, 1] + add[:, 1] - kap * span
        d = norm_star((new_phi[:npts] - phi[:npts], new_psi[:npts] - psi[:npts]), cfg, sample_pts).value
        phi, psi = new_phi, new_psi
        norms.append(norm_star((phi[:npts], psi[:npts]), cfg, sample_pts).value)
        coefs.append(coef)
        diffs.append(d)
        if norms[-1] > 10 * norm0:
            status = "diverged"
            break
        if d <= tol * norm0:
            break
    ratios = [diffs[i + 1] / diffs[i] for i in range(len(diffs) - 1) if diffs[i] > 0]
    if status != "diverged" and status != "inconclusive":
        if diffs and diffs[-1] <= tol * norm0:
            status = "contracting"
        elif ratios and max(ratios) < 0.9:
            status = "contracting"
        else:
            status = "stalled"
    rnorm = first.residual_norm
    hb, hbc = _half_bubble(cfg, sample_pts, phi[:npts], psi[:npts])
    return CorrectionReport(
        cfg.k, cfg.lam, len(norms), norms, [_multiplier_rows(cfg, c, rnorm) for c in coefs], hb, hbc,
        bool(hb <= 1.0), status, rnorm, first.stderr_ratio, ratios,
        {"differences": diffs, "first": first.to_dict()},
    )
