"""Radial integrals, bubble constants, importance-sampled Monte Carlo, the
Newtonian (Riesz) potential, and tube-domain quadrature.

Monte Carlo estimates are split into fixed-size blocks.  Block ``b`` draws
from ``default_rng([seed, stream, b])`` so results do not depend on the
number of workers; partial sums are combined in block order.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special
from scipy.stats import qmc as _qmc

from .bubbles import CouplingData, bubble_constant, check_dimension, critical_exponent


class QuadratureError(RuntimeError):
    """Non-convergence; carries the achieved estimate and error bound."""

    def __init__(self, msg, estimate=float("nan"), error=float("nan")):
        super().__init__(f"{msg} (estimate={estimate:.6g}, error bound={error:.3g})")
        self.estimate = estimate
        self.error = error


@dataclass(frozen=True)
class QuadratureBudget:
    n_samples: int = 100_000
    seed: int = 0
    block_size: int = 4096
    workers: int = 1
    chart_fraction: float = 0.2
    radial_nodes: int = 24
    angular_nodes: int = 12
    theta_nodes: int = 128
    rtol: float = 1e-10
    qmc: bool = True

    def __post_init__(self):
        for name in ("n_samples", "block_size", "workers", "radial_nodes", "angular_nodes", "theta_nodes"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not (0 < self.rtol < 1):
            raise ValueError("rtol must lie in (0, 1)")
        if not (0 <= self.chart_fraction < 1):
            raise ValueError("chart_fraction must lie in [0, 1)")

    def replace(self, **kw) -> "QuadratureBudget":
        d = dict(self.__dict__)
        d.update(kw)
        return QuadratureBudget(**d)


def sphere_area(N: int) -> float:
    """omega_{N-1} = |S^{N-1}| = 2 pi^(N/2) / Gamma(N/2)."""
    return 2.0 * math.pi ** (N / 2.0) / math.gamma(N / 2.0)


def ball_volume(m: int, rho: float = 1.0) -> float:
    return math.pi ** (m / 2.0) / math.gamma(m / 2.0 + 1.0) * rho**m


def green_constant(N: int) -> float:
    """1/((N-2) omega_{N-1}): -Lap of c|y|^(2-N) is the Dirac mass."""
    return 1.0 / ((N - 2) * sphere_area(N))


# ---------------------------------------------------------------- radial


def radial_integral(f, N: int, budget: QuadratureBudget | None = None) -> float:
    """omega_{N-1} int_0^inf f(r) r^(N-1) dr (Gauss-Kronrod, tail via r = 1/u)."""
    budget = budget or QuadratureBudget()
    eps = budget.rtol * 1e-3

    def head(r):
        return f(r) * r ** (N - 1)

    def tail(u):
        if u == 0.0:
            return 0.0
        return f(1.0 / u) * u ** (-N - 1)

    v1, e1 = integrate.quad(head, 0.0, 1.0, epsabs=0.0, epsrel=eps, limit=400)
    v2, e2 = integrate.quad(tail, 0.0, 1.0, epsabs=0.0, epsrel=eps, limit=400)
    val, err = v1 + v2, e1 + e2
    if not (math.isfinite(val) and err <= budget.rtol * max(abs(val), 1e-300)):
        raise QuadratureError("radial integral did not converge", sphere_area(N) * val, sphere_area(N) * err)
    return sphere_area(N) * val


@dataclass(frozen=True)
class BubbleConstants:
    N: int
    B_w: float
    C_w: float
    B_U: float
    B_V: float
    C1: float
    C1_coupled: float
    interaction: float
    B_w_quadrature: float
    C_w_quadrature: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def beta_forms(N: int) -> tuple[float, float]:
    """Closed forms of int w^2 and int w^(2*) through the Beta function."""
    N = check_dimension(N)
    om = sphere_area(N)
    bw = (N * (N - 2.0)) ** ((N - 2) / 2.0) * om * 0.5 * special.beta(N / 2.0, (N - 4) / 2.0)
    cw = (N * (N - 2.0)) ** (N / 2.0) * om * 0.5 * special.beta(N / 2.0, N / 2.0)
    return float(bw), float(cw)


def constants_B_C(c: CouplingData, budget: QuadratureBudget | None = None) -> BubbleConstants:
    """B_w = int w^2, C_w = int w^(2*), B_U = s^2 B_w, B_V = kappa^2 s^2 B_w.

    ``C1`` is C_w; ``C1_coupled`` = C_w (1 + beta kappa^(2*/2)).  ``interaction``
    is A = (N-2) omega_{N-1} c_N^2, the coefficient of the far-field product
    w_{x,lam} w_{x',lam} ~ c_N^2 lam^(2-N) |x-x'|^(2-N) integrated against
    w^(2*-1) (int w^(2*-1) = c_N^{-1} A).
    """
    N = c.N
    bw, cw = beta_forms(N)
    cn = bubble_constant(N)
    p = critical_exponent(N)
    qb = radial_integral(lambda r: cn**2 * (1 + r * r) ** (2.0 - N), N, budget)
    qc = radial_integral(lambda r: cn**p * (1 + r * r) ** (-float(N)), N, budget)
    return BubbleConstants(
        N=N,
        B_w=bw,
        C_w=cw,
        B_U=c.s**2 * bw,
        B_V=c.kappa**2 * c.s**2 * bw,
        C1=cw,
        C1_coupled=cw * (1 + c.beta * c.kappa ** (p / 2)),
        interaction=(N - 2) * sphere_area(N) * cn**2,
        B_w_quadrature=qb,
        C_w_quadrature=qc,
    )


# ---------------------------------------------------------------- tube domains


@dataclass(frozen=True)
class TubeDomain:
    """Solid torus {|(r, y'') - (r0, y0'')| <= rho}."""

    r0: float
    y0_2: tuple
    rho: float

    def __post_init__(self):
        object.__setattr__(self, "y0_2", tuple(float(v) for v in self.y0_2))
        if not (0 < self.rho < self.r0):
            raise ValueError("tube radius must satisfy 0 < rho < r0")

    @property
    def N(self) -> int:
        return len(self.y0_2) + 2

    @property
    def volume(self) -> float:
        return 2 * math.pi * self.r0 * ball_volume(self.N - 1, self.rho)

    @property
    def area(self) -> float:
        return 2 * math.pi * self.r0 * sphere_area(self.N - 1) * self.rho ** (self.N - 2)

    def offset(self, y):
        """(r - r0, y'' - y0'') and its norm."""
        y = np.asarray(y, dtype=float)
        r = np.hypot(y[..., 0], y[..., 1])
        e = np.concatenate([(r - self.r0)[..., None], y[..., 2:] - np.asarray(self.y0_2)], axis=-1)
        return e, np.linalg.norm(e, axis=-1)

    def contains(self, y):
        return self.offset(y)[1] <= self.rho

    def scaled(self, mu: float) -> "TubeDomain":
        """Image under y -> y / mu."""
        return TubeDomain(self.r0 / mu, tuple(v / mu for v in self.y0_2), self.rho / mu)


def _embed(D: TubeDomain, theta, e):
    """Points with angle theta and (r, y'') offset e from the tube core."""
    r = D.r0 + e[:, 0]
    out = np.empty((len(theta), D.N))
    out[:, 0] = r * np.cos(theta)
    out[:, 1] = r * np.sin(theta)
    out[:, 2:] = np.asarray(D.y0_2) + e[:, 1:]
    return out


def _normal(theta, u):
    out = np.empty((len(theta), u.shape[1] + 1))
    out[:, 0] = u[:, 0] * np.cos(theta)
    out[:, 1] = u[:, 0] * np.sin(theta)
    out[:, 2:] = u[:, 1:]
    return out


def sample_tube(D: TubeDomain, rng, n: int, boundary: bool = False):
    """Uniform samples in D (or on its boundary) by rejection on the r weight.

    Returns (points, unit offsets); offsets are the outward normals on the
    boundary.
    """
    m = D.N - 1
    pts, us = [], []
    need = n
    while need > 0:
        batch = max(2 * need, 64)
        g = rng.standard_normal((batch, m))
        u = g / np.linalg.norm(g, axis=1, keepdims=True)
        rad = np.full(batch, D.rho) if boundary else D.rho * rng.random(batch) ** (1.0 / m)
        e = u * rad[:, None]
        keep = rng.random(batch) * (D.r0 + D.rho) < D.r0 + e[:, 0]
        theta = 2 * np.pi * rng.random(batch)
        e, u, theta = e[keep][:need], u[keep][:need], theta[keep][:need]
        pts.append(_embed(D, theta, e))
        us.append(_normal(theta, u))
        need -= len(e)
    return np.concatenate(pts), np.concatenate(us)


def _sphere_nodes(m: int, n: int):
    """Product nodes/weights on S^{m-1} (hyperspherical angles, Gauss-Jacobi)."""
    if m == 1:
        return np.array([[1.0], [-1.0]]), np.array([1.0, 1.0])
    if m == 2:
        phi = 2 * np.pi * np.arange(2 * n) / (2 * n)
        return np.c_[np.cos(phi), np.sin(phi)], np.full(2 * n, 2 * np.pi / (2 * n))
    q = m - 2  # weight sin^q(phi) on the first polar angle
    a = (q - 1) / 2.0
    x, w = special.roots_jacobi(n, a, a)
    sub, sw = _sphere_nodes(m - 1, n)
    sin = np.sqrt(1 - x * x)
    U = np.concatenate([np.repeat(x, len(sub))[:, None], (sin[:, None, None] * sub[None]).reshape(-1, m - 1)], 1)
    W = (w[:, None] * sw[None]).ravel()
    return U, W


def _apply_chunks(f, pts, *extra, chunk=200_000):
    out = []
    for i in range(0, len(pts), chunk):
        v = np.asarray(f(pts[i:i + chunk], *(e[i:i + chunk] for e in extra)), dtype=float)
        out.append(v.reshape(len(pts[i:i + chunk]), -1))
    return np.concatenate(out, 0)


def tube_integral(f, D: TubeDomain, budget: QuadratureBudget | None = None):
    """Product rule over D: theta trapezoid x Gauss-Legendre shell radius x sphere nodes."""
    budget = budget or QuadratureBudget()
    m = D.N - 1
    U, Wu = _sphere_nodes(m, budget.angular_nodes)
    x, wx = special.roots_legendre(budget.radial_nodes)
    t = 0.5 * D.rho * (x + 1)
    wt = 0.5 * D.rho * wx * t ** (m - 1)
    nth = budget.theta_nodes
    th = 2 * np.pi * np.arange(nth) / nth
    total = 0.0
    for ti, wti in zip(t, wt):
        e = np.tile(U * ti, (nth, 1))
        theta = np.repeat(th, len(U))
        pts = _embed(D, theta, e)
        jac = (D.r0 + e[:, 0]) * np.tile(Wu, nth) * (2 * np.pi / nth) * wti
        total = total + np.sum(_apply_chunks(f, pts) * jac[:, None], axis=0)
    return _squeeze(total)


def tube_boundary_integral(f, D: TubeDomain, budget: QuadratureBudget | None = None):
    """Product rule over the boundary of D; ``f(points, normals)``."""
    budget = budget or QuadratureBudget()
    m = D.N - 1
    U, Wu = _sphere_nodes(m, budget.angular_nodes)
    nth = budget.theta_nodes
    th = 2 * np.pi * np.arange(nth) / nth
    theta = np.repeat(th, len(U))
    u = np.tile(U, (nth, 1))
    pts = _embed(D, theta, u * D.rho)
    nu = _normal(theta, u)
    jac = (D.r0 + D.rho * u[:, 0]) * np.tile(Wu, nth) * (2 * np.pi / nth) * D.rho ** (m - 1)
    return _squeeze(np.sum(_apply_chunks(f, pts, nu) * jac[:, None], axis=0))


def _squeeze(v):
    v = np.asarray(v, dtype=float)
    return float(v[0]) if v.size == 1 else v


# ---------------------------------------------------------------- Monte Carlo


@dataclass(frozen=True)
class MCResult:
    value: float | np.ndarray
    stderr: float | np.ndarray
    n: int

    def to_dict(self) -> dict:
        return {"value": np.asarray(self.value).tolist(), "stderr": np.asarray(self.stderr).tolist(), "n": self.n}


def uniforms(rng, n: int, d: int, use_qmc: bool = True) -> np.ndarray:
    """n points in (0,1)^d: one scrambled Sobol replicate, or plain pseudo-random."""
    if use_qmc:
        eng = _qmc.Sobol(d, scramble=True, seed=rng)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            u = eng.random(n)
    else:
        u = rng.random((n, d))
    return np.clip(u, 1e-15, 1 - 1e-15)


def unit_ball_kernel_offsets(u: np.ndarray) -> np.ndarray:
    """Map uniforms (n, N+1) to offsets in the unit ball with density prop. to |v|^(2-N)."""
    g = special.ndtri(u[:, :-1])
    return g / np.linalg.norm(g, axis=1, keepdims=True) * np.sqrt(u[:, -1:])


class MixtureProposal:
    """Equal-weight multivariate Cauchy densities of scale 1/lam around each center,
    plus ``tube_weight`` uniform mass on a tube (when given)."""

    def __init__(self, centers, lam: float, tube: TubeDomain | None = None, tube_weight: float = 0.1,
                 scale: float | None = None):
        self.centers = np.asarray(centers, dtype=float).reshape(-1, np.shape(centers)[-1])
        self.N = self.centers.shape[1]
        self.lam = float(lam)
        self.scale = 1.0 / self.lam if scale is None else float(scale)
        self.tube = tube
        self.tube_weight = float(tube_weight) if tube is not None else 0.0
        if len(self.centers) == 0 and tube is None:
            raise ValueError("proposal needs centers or a tube")
        if len(self.centers) == 0:
            self.tube_weight = 1.0
        N = self.N
        self._cnorm = math.gamma((N + 1) / 2) / math.pi ** ((N + 1) / 2) / self.scale**N

    def sample(self, rng, n: int, use_qmc: bool = True) -> np.ndarray:
        k = len(self.centers)
        N = self.N
        u = uniforms(rng, n, N + 2, use_qmc)
        out = np.empty((n, N))
        ntube = 0
        if k:
            cum = (1 - self.tube_weight) * np.arange(1, k + 1) / k
            comp = np.searchsorted(cum, u[:, 0], side="right")
            cauchy = comp < k
            g = special.ndtri(u[cauchy, 1:N + 1])
            chi = np.abs(special.ndtri(u[cauchy, N + 1]))
            out[cauchy] = self.centers[comp[cauchy]] + self.scale * g / chi[:, None]
            tube_mask = ~cauchy
            ntube = int(tube_mask.sum())
        else:
            tube_mask = np.ones(n, bool)
            ntube = n
        if ntube:
            out[tube_mask] = sample_tube(self.tube, rng, ntube)[0]
        return out

    def density(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        k = len(self.centers)
        q = np.zeros(z.shape[:-1])
        if k:
            for x in self.centers:
                d2 = np.einsum("...i,...i->...", z - x, z - x) / self.scale**2
                q += (1.0 + d2) ** (-(self.N + 1) / 2.0)
            q *= self._cnorm * (1 - self.tube_weight) / k
        if self.tube is not None and self.tube_weight > 0:
            q += self.tube_weight * self.tube.contains(z) / self.tube.volume
        return q


def _run_blocks(fn, nblocks: int, workers: int):
    if workers <= 1 or nblocks <= 1:
        return [fn(b) for b in range(nblocks)]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, range(nblocks)))


def _block_sizes(n, bs):
    nb = (n + bs - 1) // bs
    return nb, [min(bs, n - b * bs) for b in range(nb)]


def combine_blocks(sums, sumsq, counts):
    """Estimate and standard error from per-block sums.

    With several blocks the error is the spread of block means (valid for
    randomized QMC replicates); a single block falls back to the iid formula.
    """
    sums = np.asarray(sums, dtype=float)
    counts = np.asarray(counts, dtype=float)
    n = counts.sum()
    mean = sums.sum(0) / n
    B = len(counts)
    if B >= 2:
        bm = sums / counts.reshape((-1,) + (1,) * (sums.ndim - 1))
        wts = (counts / n).reshape((-1,) + (1,) * (sums.ndim - 1))
        var = np.sum(wts**2 * (bm - mean) ** 2, axis=0) * B / (B - 1)
    else:
        var = np.maximum(np.asarray(sumsq, dtype=float).sum(0) / n - mean**2, 0.0) / max(n - 1, 1)
    return mean, np.sqrt(var)


def mc_integral(f, proposal: MixtureProposal, budget: QuadratureBudget, stream: int = 0) -> MCResult:
    """Importance-sampled estimate of int f with standard error; f may be vector valued."""
    nb, sizes = _block_sizes(budget.n_samples, budget.block_size)

    def block(b):
        rng = np.random.default_rng([budget.seed, stream, b])
        z = proposal.sample(rng, sizes[b], budget.qmc)
        q = proposal.density(z)
        v = np.asarray(f(z), dtype=float).reshape(len(z), -1)
        g = np.where(q[:, None] > 0, v / np.where(q > 0, q, 1.0)[:, None], 0.0)
        return g.sum(0), (g * g).sum(0)

    parts = _run_blocks(block, nb, budget.workers)
    mean, err = combine_blocks([p[0] for p in parts], [p[1] for p in parts], sizes)
    return MCResult(_squeeze(mean), _squeeze(err), budget.n_samples)


def tube_mc(f, D: TubeDomain, budget: QuadratureBudget, centers=None, lam: float = 1.0,
            tube_weight: float = 0.1, stream: int = 0) -> MCResult:
    """Monte Carlo over D: mixture of bubble proposals and uniform tube mass."""
    if centers is None or len(centers) == 0:
        prop = MixtureProposal(np.empty((0, D.N)), lam, D, 1.0)
    else:
        prop = MixtureProposal(centers, lam, D, tube_weight)

    def g(z):
        v = np.asarray(f(z), dtype=float).reshape(len(z), -1)
        return v * D.contains(z)[:, None]

    return mc_integral(g, prop, budget, stream)


def _wrapped_cauchy_pdf(theta, mu, gamma):
    return np.sinh(gamma) / (2 * np.pi * (np.cosh(gamma) - np.cos(theta - mu)))


def tube_boundary_mc(f, D: TubeDomain, budget: QuadratureBudget, stream: int = 0, angles=None,
                     angle_scale: float | None = None, angle_weight: float = 0.5) -> MCResult:
    """Monte Carlo on the boundary of D; ``f(points, normals)``.

    Without ``angles`` the samples are uniform in area.  With ``angles`` the
    azimuth is drawn from a mixture of uniform and wrapped Cauchy laws
    centered at those angles (scale ``angle_scale``, default rho / r0), and
    samples are reweighted by the azimuthal density ratio.
    """
    nb, sizes = _block_sizes(budget.n_samples, budget.block_size)
    area = D.area
    mus = None if angles is None or len(angles) == 0 else np.asarray(angles, dtype=float).ravel()
    gam = D.rho / D.r0 if angle_scale is None else float(angle_scale)

    def block(b):
        rng = np.random.default_rng([budget.seed, stream, b])
        z, nu = sample_tube(D, rng, sizes[b], boundary=True)
        wt = np.full(len(z), area)
        if mus is not None:
            arng = np.random.default_rng([budget.seed, stream + 104729, b])
            n = len(z)
            pick = arng.random(n) < angle_weight
            comp = arng.integers(len(mus), size=n)
            th_c = mus[comp] + gam * np.tan(np.pi * (arng.random(n) - 0.5))
            th0 = np.arctan2(z[:, 1], z[:, 0])
            th = np.where(pick, th_c, th0)
            c, s_ = np.cos(th - th0), np.sin(th - th0)
            z = z.copy()
            nu = nu.copy()
            for arr in (z, nu):
                x0, x1 = arr[:, 0].copy(), arr[:, 1].copy()
                arr[:, 0] = c * x0 - s_ * x1
                arr[:, 1] = s_ * x0 + c * x1
            th = np.mod(th, 2 * np.pi)
            dens = (1 - angle_weight) / (2 * np.pi) + angle_weight * np.mean(
                [_wrapped_cauchy_pdf(th, m, gam) for m in mus], axis=0)
            wt = area / (2 * np.pi * dens)
        g = np.asarray(f(z, nu), dtype=float).reshape(len(z), -1) * wt[:, None]
        return g.sum(0), (g * g).sum(0)

    parts = _run_blocks(block, nb, budget.workers)
    mean, err = combine_blocks([p[0] for p in parts], [p[1] for p in parts], sizes)
    return MCResult(_squeeze(mean), _squeeze(err), budget.n_samples)


# ---------------------------------------------------------------- Riesz potential


def default_chart_radius(proposal: MixtureProposal, ys):
    """Half the distance to the nearest center, clipped to [1/lam, a_max]."""
    ys = np.asarray(ys, dtype=float)
    if len(proposal.centers):
        d = np.min(np.linalg.norm(ys[:, None, :] - proposal.centers[None], axis=2), axis=1)
    else:
        d = np.full(len(ys), np.inf)
    amax = proposal.tube.rho if proposal.tube is not None else 8.0 * proposal.scale
    return np.clip(0.5 * d, proposal.scale, max(amax, proposal.scale))


def riesz_apply(f, ys, proposal: MixtureProposal, budget: QuadratureBudget, chart_radius=None,
                stream: int = 1, y_chunk: int = 64):
    """(1/((N-2) omega_{N-1})) int f(z) |y - z|^(2-N) dz at each y; returns (values, stderr).

    Every block holds shared samples from ``proposal`` (reused for all y) and
    a fraction ``chart_fraction`` of samples from a chart around y with
    density proportional to |z - y|^(2-N) on a ball of radius a(y).  Both are
    weighted by the block's y-dependent mixture density, so each block is an
    unbiased replicate and the kernel singularity carries bounded weight.
    """
    ys = np.atleast_2d(np.asarray(ys, dtype=float))
    N = proposal.N
    ny = len(ys)
    cg = green_constant(N)
    om = sphere_area(N)
    a = default_chart_radius(proposal, ys) if chart_radius is None else np.broadcast_to(
        np.asarray(chart_radius, dtype=float), (ny,)).copy()
    nb, sizes = _block_sizes(budget.n_samples, budget.block_size)
    nc = [int(round(budget.chart_fraction * s)) for s in sizes]
    nq = [s - c for s, c in zip(sizes, nc)]

    def draw(b):
        rng = np.random.default_rng([budget.seed, stream, b])
        z = proposal.sample(rng, nq[b], budget.qmc) if nq[b] else np.empty((0, N))
        fz = np.asarray(f(z), dtype=float).reshape(len(z), -1) if nq[b] else None
        crng = np.random.default_rng([budget.seed, stream + 7919, b])
        v = unit_ball_kernel_offsets(uniforms(crng, nc[b], N + 1, budget.qmc)) if nc[b] else None
        return z, proposal.density(z), fz, v

    blocks = _run_blocks(draw, nb, budget.workers)

    def chunk(ci):
        sl = slice(ci * y_chunk, min(ny, (ci + 1) * y_chunk))
        Y = ys[sl]
        A = a[sl]
        norm_c = om * A**2 / 2.0
        sums = []
        for b, (z, q, fz, v) in enumerate(blocks):
            alpha = nc[b] / sizes[b]
            tot = 0.0
            if nq[b]:
                d = np.linalg.norm(Y[:, None, :] - z[None], axis=2)
                with np.errstate(divide="ignore", invalid="ignore"):
                    K = cg * d ** (2.0 - N)
                    pc = np.where(d < A[:, None], d ** (2.0 - N) / norm_c[:, None], 0.0)
                    p = alpha * pc + (1 - alpha) * q[None]
                    w = K / p
                w[~np.isfinite(w)] = 0.0
                tot = tot + w @ fz
            if nc[b]:
                Z = Y[:, None, :] + A[:, None, None] * v[None]
                flat = Z.reshape(-1, N)
                fc = np.asarray(f(flat), dtype=float).reshape(len(Y), nc[b], -1)
                qz = proposal.density(flat).reshape(len(Y), nc[b])
                dist = A[:, None] * np.linalg.norm(v, axis=1)[None]
                with np.errstate(divide="ignore", invalid="ignore"):
                    pc = dist ** (2.0 - N) / norm_c[:, None]
                    w = cg * dist ** (2.0 - N) / (alpha * pc + (1 - alpha) * qz)
                w[~np.isfinite(w)] = 0.0
                tot = tot + np.einsum("ym,ymf->yf", w, fc)
            sums.append(tot)
        return np.stack(sums, 0)  # (blocks, y, f)

    nchunks = (ny + y_chunk - 1) // y_chunk
    res = np.concatenate(_run_blocks(chunk, nchunks, budget.workers), axis=1)
    mean, err = combine_blocks(res, res**2, sizes)
    if mean.shape[1] == 1:
        return mean[:, 0], err[:, 0]
    return mean, err
