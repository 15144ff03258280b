"""The finite-dimensional reduced problem.

Unknowns x = (t, rbar, ybar''), lambda = t k^((N-2)/(N-4)).  The reduced map is

    F(x) = ( -B_U G / t^3 + C_1 (1 + beta kappa^(2*/2)) / t^(N-1),
             grad_{r, y''} G(rbar, ybar'') )

with G = P + kappa^2 Q.  ``form="split"`` replaces the r-component by
(2 rbar)^(-1) d/dr (r^2 G).  The t-component is free of k: both terms carry
k^(-3(N-2)/(N-4)) after the substitution.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bubbles import CouplingData
from .degree import DegreeError, DegreeReport, degree_box
from .geometry import PolygonConfig, polygon_centers
from .potentials import PotentialPair
from .quadrature import BubbleConstants, MCResult, QuadratureBudget, constants_B_C, mc_integral
from .residual import ansatz_pieces, bubble_sums, residual_eval

__all__ = ["ReducedState", "interaction_sum", "interaction_brute", "energy_dlambda", "reduced_F", "t_star",
           "newton_solve_reduced", "reduced_degree", "degree_box", "DegreeReport", "DegreeError"]


@dataclass
class ReducedState:
    t: float
    rbar: float
    ybar2: tuple
    F: list = field(default_factory=list)
    jac_cond: float = float("nan")
    converged: bool = False
    iterations: int = 0
    message: str = ""
    trace: list = field(default_factory=list)

    def __post_init__(self):
        if not self.t > 0:
            raise ValueError("t must be positive")
        self.ybar2 = tuple(float(v) for v in np.atleast_1d(self.ybar2))

    @property
    def N(self) -> int:
        return len(self.ybar2) + 2

    @property
    def x(self) -> np.ndarray:
        return np.r_[self.t, self.rbar, self.ybar2]

    @classmethod
    def from_x(cls, x, **kw) -> "ReducedState":
        x = np.asarray(x, dtype=float)
        return cls(float(x[0]), float(x[1]), tuple(x[2:]), **kw)

    def lam(self, k: int) -> float:
        N = self.N
        return self.t * k ** ((N - 2.0) / (N - 4.0))

    def to_dict(self) -> dict:
        return {"t": self.t, "rbar": self.rbar, "ybar2": list(self.ybar2), "F": list(self.F),
                "F_norm": float(np.linalg.norm(self.F)) if len(self.F) else None,
                "jac_cond": self.jac_cond, "converged": self.converged, "iterations": self.iterations,
                "message": self.message, "trace": self.trace}


# ------------------------------------------------------------------ interaction


def interaction_sum(k: int, rbar: float, lam: float, N: int) -> tuple[float, float]:
    """sum_{j=2}^k (2 rbar sin((j-1) pi / k))^(-(N-2)) lam^(-(N-1)) and the same times lam^(N-1)."""
    if k < 2:
        raise ValueError("interaction_sum needs k >= 2")
    j = np.arange(1, k)
    d = 2.0 * rbar * np.sin(j * np.pi / k)
    norm = float(np.sum(d ** (2.0 - N)))
    return norm * lam ** (1.0 - N), norm


def interaction_brute(cfg: PolygonConfig) -> float:
    """Pairwise sum over polygon_centers, without the lambda factor."""
    X = polygon_centers(cfg)
    d = np.linalg.norm(X[1:] - X[0], axis=1)
    return float(np.sum(d ** (2.0 - cfg.N)))


# ------------------------------------------------------------------ energy expansion


@dataclass
class EnergyReport:
    lhs: float
    lhs_stderr: float
    rhs: float
    rhs_paper_constant: float
    gap: float
    gap_stderr: float
    rel_gap: float
    status: str
    terms: dict

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def energy_dlambda(cfg: PolygonConfig, pp: PotentialPair | None, budget: QuadratureBudget | None = None,
                   constants: BubbleConstants | None = None, stream: int = 21) -> EnergyReport:
    """int (R_1 dW_1/dlam + R_2 dW_2/dlam) against its large-lambda expansion.

    The expansion is k[-B_U P/lam^3 - B_V Q/lam^3 + C_int (N-2) sum_j lam^(1-N) |x_1 - x_j|^(2-N)]
    with C_int = (1 + kappa^2) s^2 A / 2 and A = (N-2) |S^(N-1)| c_N^2, the
    coefficient from differentiating the pair interaction energy.  The same
    expansion with C_1 (1 + beta kappa^(2*/2)) in place of C_int is reported
    as ``rhs_paper_constant``.  ``gap`` is (lhs - rhs) lam^3 / k and
    ``rel_gap`` is (lhs - rhs) / |rhs|.
    """
    from .correction import default_proposal

    budget = budget or QuadratureBudget(n_samples=1 << 16)
    c = cfg.coupling
    N, k, lam = cfg.N, cfg.k, cfg.lam
    consts = constants or constants_B_C(c)
    s, kap = c.s, c.kappa

    def f(z):
        a = ansatz_pieces(cfg, z)
        dL = bubble_sums(cfg, z)[3]
        r1, r2 = residual_eval(cfg, pp, z)
        return s * a.xi * dL * (r1 + kap * r2)

    res: MCResult = mc_integral(f, default_proposal(cfg), budget, stream)
    if pp is None:
        P0 = Q0 = 0.0
    else:
        P0 = float(pp.P(cfg.rbar, np.asarray(cfg.ybar2)))
        Q0 = float(pp.Q(cfg.rbar, np.asarray(cfg.ybar2)))
    pot = -(consts.B_U * P0 + consts.B_V * Q0) / lam**3
    inter = interaction_sum(k, cfg.rbar, lam, N)[0] if k >= 2 else 0.0
    c_int = 0.5 * (1 + kap**2) * s**2 * consts.interaction
    rhs = k * (pot + c_int * (N - 2) * inter)
    rhs_p = k * (pot + consts.C1_coupled * (N - 2) * inter)
    scale = lam**3 / k
    gap = (res.value - rhs) * scale
    gerr = res.stderr * scale
    status = "inconclusive" if res.stderr > 0.2 * max(abs(res.value), 1e-300) and abs(res.value) > 0 else "ok"
    terms = {"potential": k * pot, "interaction": k * c_int * (N - 2) * inter, "C_int": c_int,
             "C1_coupled": consts.C1_coupled, "lambda": lam, "k": k}
    return EnergyReport(float(res.value), float(res.stderr), float(rhs), float(rhs_p), float(gap), float(gerr),
                        float((res.value - rhs) / abs(rhs)) if rhs != 0 else float("nan"), status, terms)


# ------------------------------------------------------------------ reduced map


def _constants(c: CouplingData, constants):
    return constants if constants is not None else constants_B_C(c)


def t_star(pp: PotentialPair, c: CouplingData, constants: BubbleConstants | None = None,
           point=None) -> float:
    """[C_1 (1 + beta kappa^(2*/2)) / (B_U G)]^(1/(N-4)) at the critical point (or ``point``)."""
    consts = _constants(c, constants)
    r, y2 = (pp.r0, np.asarray(pp.y0_2)) if point is None else (point[0], np.asarray(point[1]))
    G = float(pp.G(r, y2, c.kappa))
    if G <= 0:
        raise ValueError("t* needs G > 0")
    return float((consts.C1_coupled / (consts.B_U * G)) ** (1.0 / (c.N - 4)))


def reduced_F(state, pp: PotentialPair, c: CouplingData, constants: BubbleConstants | None = None,
              form: str = "gradient") -> np.ndarray:
    """F ordered like the unknowns (t, rbar, ybar'')."""
    consts = _constants(c, constants)
    x = state.x if isinstance(state, ReducedState) else np.asarray(state, dtype=float)
    t, r, y2 = x[0], x[1], x[2:]
    if r <= 0:
        raise ValueError("rbar must be positive")
    if t <= 0:
        raise ValueError("t must be positive")
    N = c.N
    G = float(pp.G(r, y2, c.kappa))
    gr, gy = pp.grad_G(r, y2, c.kappa)
    if form == "split":
        gr = G + 0.5 * r * gr
    elif form != "gradient":
        raise ValueError(f"unknown form {form!r}")
    ft = -consts.B_U * G / t**3 + consts.C1_coupled / t ** (N - 1)
    return np.r_[ft, float(gr), np.asarray(gy, dtype=float)]


def _fd_jacobian(fun, x, h=1e-7):
    n = len(x)
    J = np.empty((n, n))
    for i in range(n):
        e = np.zeros(n)
        e[i] = h * max(1.0, abs(x[i]))
        J[:, i] = (fun(x + e) - fun(x - e)) / (2 * e[i])
    return J


def newton_solve_reduced(seed: ReducedState, pp: PotentialPair, c: CouplingData, tol: float = 1e-10,
                         box=None, constants: BubbleConstants | None = None, form: str = "gradient",
                         max_iter: int = 100) -> ReducedState:
    """Damped Newton with a central-difference Jacobian.

    ``box`` is a list of (lo, hi) per unknown; leaving it, a singular
    Jacobian or no convergence within ``max_iter`` gives ``converged=False``.
    """
    consts = _constants(c, constants)
    fun = lambda x: reduced_F(x, pp, c, consts, form)  # noqa: E731
    x = seed.x.astype(float)
    lo = hi = None
    if box is not None:
        lo = np.array([b[0] for b in box], dtype=float)
        hi = np.array([b[1] for b in box], dtype=float)
        if np.any(x < lo) or np.any(x > hi):
            return ReducedState.from_x(x, F=fun(x).tolist(), message="seed outside the search box")
    trace = []
    Fx = fun(x)
    cond = float("nan")
    for it in range(max_iter + 1):
        fn = float(np.linalg.norm(Fx))
        trace.append({"iter": it, "x": x.tolist(), "F_norm": fn})
        J = _fd_jacobian(fun, x)
        cond = float(np.linalg.cond(J))
        if fn < tol:
            return ReducedState.from_x(x, F=Fx.tolist(), jac_cond=cond, converged=True, iterations=it,
                                       message="converged", trace=trace)
        if it == max_iter:
            break
        if not np.isfinite(cond) or cond > 1e14:
            return ReducedState.from_x(x, F=Fx.tolist(), jac_cond=cond, iterations=it, trace=trace,
                                       message="singular Jacobian: no isolated critical point")
        step = np.linalg.solve(J, -Fx)
        a = 1.0
        while a > 1e-8:
            xn = x + a * step
            if xn[0] > 0 and xn[1] > 0:
                Fn = fun(xn)
                if np.linalg.norm(Fn) < (1 - 1e-4 * a) * fn or np.linalg.norm(Fn) < tol:
                    break
            a *= 0.5
        else:
            return ReducedState.from_x(x, F=Fx.tolist(), jac_cond=cond, iterations=it, trace=trace,
                                       message="line search failed")
        x, Fx = xn, Fn
        if lo is not None and (np.any(x < lo) or np.any(x > hi)):
            return ReducedState.from_x(x, F=Fx.tolist(), jac_cond=cond, iterations=it + 1, trace=trace,
                                       message="iterate left the search box")
    return ReducedState.from_x(x, F=Fx.tolist(), jac_cond=cond, iterations=max_iter, trace=trace,
                               message="no convergence within the iteration limit")


# ------------------------------------------------------------------ degree


def reduced_degree(pp: PotentialPair, c: CouplingData, center: ReducedState, half_width: float = 0.2,
                   t_range=None, constants: BubbleConstants | None = None, form: str = "gradient",
                   resolution: int = 16) -> dict:
    """Degree of F on (t, rbar, ybar''_1) with the other ybar'' frozen.

    Computed directly in 3D and as the product of the (rbar, ybar''_1) degree
    with the sign of dF_t/dt at the t-root; both must agree.
    """
    consts = _constants(c, constants)
    x0 = center.x
    ts = t_range or (0.5 * center.t, 2.0 * center.t)
    box2 = [(x0[1] - half_width, x0[1] + half_width), (x0[2] - half_width, x0[2] + half_width)]
    box3 = [tuple(ts)] + box2

    def batch(X):
        X = np.atleast_2d(X)
        t, r = X[:, 0], X[:, 1]
        y2 = np.tile(x0[2:], (len(X), 1))
        y2[:, 0] = X[:, 2]
        G = pp.G(r, y2, c.kappa)
        gr, gy = pp.grad_G(r, y2, c.kappa)
        if form == "split":
            gr = G + 0.5 * r * gr
        # F_t times the positive factor t^(N-1); the degree is unchanged
        ft = -consts.B_U * G * t ** (c.N - 4) + consts.C1_coupled
        return np.c_[ft, gr, gy[:, 0]]

    def full(x3):
        return batch(x3)

    def plane(x2):
        x2 = np.atleast_2d(x2)
        return batch(np.c_[np.full(len(x2), x0[0]), x2])[:, 1:]

    out = {"box": box3, "form": form}
    try:
        rep3 = degree_box(full, box3, resolution=resolution)
        out["degree_3d"] = rep3.degree
        out["report_3d"] = rep3.to_dict()
    except DegreeError as exc:
        out["degree_3d"] = None
        out["error_3d"] = str(exc)
    try:
        rep2 = degree_box(plane, box2, resolution=4 * resolution)
        d2 = rep2.degree
        out["report_plane"] = rep2.to_dict()
    except DegreeError as exc:
        d2 = None
        out["error_plane"] = str(exc)
    # sign of dF_t/dt at the root of the t-component, which is unique for t > 0
    G = float(pp.G(x0[1], x0[2:], c.kappa))
    ft = lambda t: -consts.B_U * G / t**3 + consts.C1_coupled / t ** (c.N - 1)  # noqa: E731
    ft_lo, ft_hi = ft(ts[0]), ft(ts[1])
    if ft_lo * ft_hi < 0:
        t_sign = int(np.sign(ft_hi - ft_lo))
    else:
        t_sign = 0
    out["t_sign"] = t_sign
    out["degree_plane"] = d2
    out["degree_factorized"] = None if d2 is None else d2 * t_sign
    out["agree"] = bool(out["degree_3d"] is not None and out["degree_3d"] == out["degree_factorized"])
    out["degree"] = out["degree_3d"]
    return out
