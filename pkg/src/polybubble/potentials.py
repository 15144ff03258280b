"""Parametric potential families P, Q on (r, y'') and the hypothesis checks.

Families (sigma(t) = t / (1 + |t|), odd extension of t/(1+t)):

* ``well``:     P = p0 + p2 sigma((r-r0)^2 + |y''-y0''|^2)
* ``saddle``:   P = p0 + p2 sigma((r-r0)^2 - |y''-y0''|^2), requires p0 >= p2
* ``constant``: P = p0

Q uses the same profile with (q0, q2).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bubbles import CouplingData
from .degree import DegreeError, DegreeReport, degree_box

FAMILIES = ("well", "saddle", "constant")


def sigma(t):
    t = np.asarray(t, dtype=float)
    return t / (1.0 + np.abs(t))


def dsigma(t):
    t = np.asarray(t, dtype=float)
    return 1.0 / (1.0 + np.abs(t)) ** 2


@dataclass(frozen=True)
class PotentialPair:
    family: str
    p0: float
    q0: float
    p2: float = 0.0
    q2: float = 0.0
    r0: float = 1.0
    y0_2: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "y0_2", tuple(float(v) for v in self.y0_2))
        if self.family not in FAMILIES:
            raise ValueError(f"unknown potential family {self.family!r}")
        if self.r0 <= 0:
            raise ValueError("r0 must be positive")
        lo_p, lo_q = self.p0, self.q0
        if self.family == "well":
            lo_p, lo_q = min(self.p0, self.p0 + self.p2), min(self.q0, self.q0 + self.q2)
        elif self.family == "saddle":
            lo_p, lo_q = self.p0 - abs(self.p2), self.q0 - abs(self.q2)
        if lo_p < 0 or lo_q < 0:
            raise ValueError("parameters produce negative potential values")

    @property
    def N(self) -> int:
        return len(self.y0_2) + 2

    @property
    def params(self) -> dict:
        return {"p0": self.p0, "q0": self.q0, "p2": self.p2, "q2": self.q2,
                "r0": self.r0, "y0_2": list(self.y0_2)}

    def _profile(self, r, y2):
        """Profile value and its (d/dr, d/dy'') derivatives."""
        r = np.asarray(r, dtype=float)
        y2 = np.asarray(y2, dtype=float)
        dr = r - self.r0
        dy = y2 - np.asarray(self.y0_2)
        if self.family == "constant":
            z = np.zeros(r.shape)
            return z, z, np.zeros(dy.shape)
        q2 = np.einsum("...i,...i->...", dy, dy)
        sgn = 1.0 if self.family == "well" else -1.0
        t = dr**2 + sgn * q2
        val = sigma(t)
        ds = dsigma(t)
        return val, 2.0 * ds * dr, (2.0 * sgn * ds)[..., None] * dy

    def P(self, r, y2):
        return self.p0 + self.p2 * self._profile(r, y2)[0]

    def Q(self, r, y2):
        return self.q0 + self.q2 * self._profile(r, y2)[0]

    def grad_P(self, r, y2):
        _, gr, gy = self._profile(r, y2)
        return self.p2 * gr, self.p2 * gy

    def grad_Q(self, r, y2):
        _, gr, gy = self._profile(r, y2)
        return self.q2 * gr, self.q2 * gy

    def G(self, r, y2, kappa: float):
        """G = P + kappa^2 Q."""
        return self.P(r, y2) + kappa**2 * self.Q(r, y2)

    def grad_G(self, r, y2, kappa: float):
        pr, py = self.grad_P(r, y2)
        qr, qy = self.grad_Q(r, y2)
        return pr + kappa**2 * qr, py + kappa**2 * qy

    def G_w(self, r, y2, kappa: float):
        """G_w = r^2 (P + kappa^2 Q)."""
        return np.asarray(r) ** 2 * self.G(r, y2, kappa)

    def grad_G_w(self, r, y2, kappa: float):
        r = np.asarray(r, dtype=float)
        g = self.G(r, y2, kappa)
        gr, gy = self.grad_G(r, y2, kappa)
        return 2 * r * g + r**2 * gr, (r**2)[..., None] * gy

    def cartesian(self, y):
        """P, Q and their gradients at points y in R^N (shape (..., N))."""
        y = np.asarray(y, dtype=float)
        r = np.hypot(y[..., 0], y[..., 1])
        y2 = y[..., 2:]
        _, pr, py = self._profile(r, y2)
        val = self._profile(r, y2)[0]
        with np.errstate(divide="ignore", invalid="ignore"):
            er = np.where(r[..., None] > 0, y[..., :2] / r[..., None], 0.0)
        g = np.empty(y.shape)
        g[..., :2] = pr[..., None] * er
        g[..., 2:] = py
        return (self.p0 + self.p2 * val, self.q0 + self.q2 * val, self.p2 * g, self.q2 * g)


def builtin_potential(family: str, params: dict | None = None, N: int = 5) -> PotentialPair:
    """Build a family from a parameter dict (keys p0, q0, p2, q2, r0, y0_2)."""
    params = dict(params or {})
    allowed = {"p0", "q0", "p2", "q2", "r0", "y0_2"}
    extra = set(params) - allowed
    if extra:
        raise ValueError(f"unknown potential parameters {sorted(extra)}")
    y0 = params.get("y0_2", [0.0] * (N - 2))
    if np.isscalar(y0):
        y0 = [float(y0)] * (N - 2)
    if len(y0) != N - 2:
        raise ValueError("y0_2 must have N-2 entries")
    return PotentialPair(
        family,
        float(params.get("p0", 1.0)),
        float(params.get("q0", 1.0)),
        float(params.get("p2", 0.0 if family == "constant" else 1.0)),
        float(params.get("q2", 0.0 if family == "constant" else 1.0)),
        float(params.get("r0", 1.0)),
        tuple(y0),
    )


@dataclass
class HypothesisReport:
    combination: str
    critical_point: tuple | None
    gradient_norm: float | None
    degree: int | None
    degree_report: dict | None
    nonnegative: bool
    bound: float
    positive_at_critical: bool | None
    coupling_ok: bool
    message: str = ""
    extras: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "combination": self.combination,
            "critical_point": None if self.critical_point is None else list(self.critical_point),
            "gradient_norm": self.gradient_norm,
            "degree": self.degree,
            "degree_report": self.degree_report,
            "nonnegative": self.nonnegative,
            "bound": self.bound,
            "positive_at_critical": self.positive_at_critical,
            "coupling_ok": self.coupling_ok,
            "message": self.message,
            **self.extras,
        }


def _plane_gradient(pp: PotentialPair, kappa: float, weighted: bool):
    """Gradient of G_w (or G) in (r, y''_1) with the other y'' frozen at y0''."""
    y0 = np.asarray(pp.y0_2)

    def grad(x):
        x = np.atleast_2d(x)
        y2 = np.tile(y0, (len(x), 1))
        y2[:, 0] = x[:, 1]
        gr, gy = (pp.grad_G_w if weighted else pp.grad_G)(x[:, 0], y2, kappa)
        return np.c_[gr, gy[:, 0]]

    return grad


def _damped_newton(grad, x0, tol=1e-12, maxit=100):
    x = np.asarray(x0, dtype=float)
    for _ in range(maxit):
        g = grad(x)[0]
        gn = np.linalg.norm(g)
        if gn < tol:
            return x, gn
        h = 1e-6 * (1 + np.abs(x))
        H = np.empty((2, 2))
        for i in range(2):
            e = np.zeros(2)
            e[i] = h[i]
            H[:, i] = (grad(x + e)[0] - grad(x - e)[0]) / (2 * h[i])
        try:
            step = np.linalg.solve(H, -g)
        except np.linalg.LinAlgError:
            return None, gn
        a = 1.0
        while a > 1e-6:
            xn = x + a * step
            if xn[0] > 0 and np.linalg.norm(grad(xn)[0]) < gn:
                break
            a *= 0.5
        else:
            return None, gn
        x = xn
    g = np.linalg.norm(grad(x)[0])
    return (x, g) if g < tol else (None, g)


def check_hypotheses(pp: PotentialPair, c: CouplingData, box=None, weighted: bool = True,
                     resolution: int = 64) -> HypothesisReport:
    """Critical point, degree, positivity and boundedness for G_w (or G).

    ``box`` is [(r_lo, r_hi), (y1_lo, y1_hi)] in the (r, y''_1) plane; other
    y'' components are frozen at y0''.  ``weighted`` selects
    G_w = r^2 (P + kappa^2 Q) (default) or G = P + kappa^2 Q.
    """
    kappa = c.kappa
    y0 = np.asarray(pp.y0_2)
    if box is None:
        box = [(0.5 * pp.r0, 1.5 * pp.r0), (y0[0] - 0.5 * pp.r0, y0[0] + 0.5 * pp.r0)]
    box = [tuple(map(float, b)) for b in box]
    if box[0][0] <= 0:
        raise ValueError("r-side of the box must be positive")
    if not (box[0][0] <= pp.r0 <= box[0][1] and box[1][0] <= y0[0] <= box[1][1]):
        raise ValueError("box must contain the declared critical point")
    grad = _plane_gradient(pp, kappa, weighted)
    x, gn = _damped_newton(grad, [pp.r0, y0[0]])
    crit = None
    msg = ""
    if x is None:
        msg = "no critical point found"
    else:
        crit = (float(x[0]), float(x[1]))
    deg = None
    drep = None
    try:
        rep: DegreeReport = degree_box(grad, box, resolution=resolution)
        deg, drep = rep.degree, rep.to_dict()
    except DegreeError as exc:
        msg = (msg + "; " if msg else "") + f"degree undefined: {exc}"
    # positivity and boundedness on a scan grid
    rr = np.linspace(box[0][0], box[0][1], 41)
    yy = np.linspace(box[1][0] - 5, box[1][1] + 5, 41)
    R, Y = np.meshgrid(np.r_[rr, 10 * pp.r0], yy, indexing="ij")
    y2 = np.tile(y0, (R.size, 1))
    y2[:, 0] = Y.ravel()
    Pv = pp.P(R.ravel(), y2)
    Qv = pp.Q(R.ravel(), y2)
    nonneg = bool(np.all(Pv >= 0) and np.all(Qv >= 0))
    bound = float(max(abs(pp.p0) + abs(pp.p2), abs(pp.q0) + abs(pp.q2)))
    pos = None
    if crit is not None:
        y2c = y0.copy()
        y2c[0] = crit[1]
        pos = bool(pp.P(crit[0], y2c) > 0 and pp.Q(crit[0], y2c) > 0)
    coupling_ok = bool(1 + c.beta * kappa ** (c.p / 2) > 0)
    return HypothesisReport(
        "r^2(P+kappa^2 Q)" if weighted else "P+kappa^2 Q",
        crit, float(gn), deg, drep, nonneg, bound, pos, coupling_ok, msg,
    )
