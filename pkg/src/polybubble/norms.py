"""Weighted sup norms on a structured sample.

    ||u||_*  = sup lam^(-(N-2)/2) |u| / sum_j (1 + lam |y - x_j|)^(-((N-2)/2 + tau))
    ||f||_** = sup lam^(-(N+2)/2) |f| / sum_j (1 + lam |y - x_j|)^(-((N+2)/2 + tau))

with tau = (N-4)/(N-2).  A pair norm is the sum of the component norms.

The sup is taken over a deterministic sample: dyadic rays around the
centers, a grid filling the cutoff support, and far-field points.  Samples
are nested under refinement, so a refined value is never smaller.  In
``sector`` mode only the fundamental domain of the k-fold rotation and the
reflection y_2 -> -y_2 is sampled; for fields with that symmetry the sup
is identical to the full sample.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .geometry import PolygonConfig, polygon_centers, rotation


@dataclass(frozen=True)
class SampleSpec:
    dyadic_step: float = 1.0
    m_min: int = -2
    directions: int = 32
    far_points: int = 64
    seed: int = 0
    annulus_theta: int = 8
    annulus_shells: int = 9
    annulus_circle: int = 16
    annulus_random: int = 16
    sector: bool = False

    def refined(self, factor: int = 4) -> "SampleSpec":
        """Superset sample: finer dyadic step, more directions, finer annulus grid."""
        if factor < 1:
            raise ValueError("factor must be >= 1")
        if factor == 1:
            return self
        f2 = max(2, factor // 2)
        return replace(
            self,
            dyadic_step=self.dyadic_step / factor,
            directions=self.directions * factor,
            far_points=self.far_points * factor,
            annulus_theta=self.annulus_theta * f2,
            annulus_shells=(self.annulus_shells - 1) * f2 + 1,
            annulus_circle=self.annulus_circle * f2,
            annulus_random=self.annulus_random * factor,
        )

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class NormReport:
    value: float
    argmax_point: list
    sample_size: int
    tau: float
    kind: str
    components: tuple = ()

    def to_dict(self) -> dict:
        return {"value": self.value, "argmax_point": list(self.argmax_point), "sample_size": self.sample_size,
                "tau": self.tau, "kind": self.kind, "components": list(self.components)}


def tau_of(N: int) -> float:
    return (N - 4.0) / (N - 2.0)


def _unit(v):
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def _delta(cfg: PolygonConfig) -> float:
    return cfg.cutoff.delta if cfg.cutoff is not None else 0.1 * cfg.rbar


def _section_directions(N: int, spec: SampleSpec, rng) -> np.ndarray:
    """Unit vectors in the (r, y'') section: great circles through e_r, then random."""
    m = N - 1
    dirs = []
    ang = 2 * np.pi * np.arange(spec.annulus_circle) / spec.annulus_circle
    for i in range(1, m):
        d = np.zeros((len(ang), m))
        d[:, 0] = np.cos(ang)
        d[:, i] = np.sin(ang)
        dirs.append(d)
    dirs.append(_unit(rng.standard_normal((spec.annulus_random, m))))
    return np.concatenate(dirs, 0)


def structured_sample(cfg: PolygonConfig, spec: SampleSpec | None = None) -> np.ndarray:
    """Sample points, shape (n, N)."""
    spec = spec or SampleSpec()
    N, k, lam = cfg.N, cfg.k, cfg.lam
    delta = _delta(cfg)
    X = polygon_centers(cfg)
    # rays around x_1, in the local frame (e_r, e_theta, y'')
    m_max = max(spec.m_min, math.ceil(math.log2(max(lam * delta, 1.0))))
    ms = np.arange(spec.m_min, m_max + spec.dyadic_step / 2, spec.dyadic_step)
    radii = 2.0**ms / lam
    axes = np.concatenate([np.eye(N), -np.eye(N)], 0)
    rng_dir = np.random.default_rng([spec.seed, 1])
    rand = _unit(rng_dir.standard_normal((spec.directions, N)))
    dirs = np.concatenate([axes, rand], 0)
    rays = (X[0][None, None] + radii[None, :, None] * dirs[:, None, :]).reshape(-1, N)
    # cutoff-support grid
    if cfg.cutoff is not None:
        r0, y0 = cfg.cutoff.r0, np.asarray(cfg.cutoff.y0_2)
    else:
        r0, y0 = cfg.rbar, np.asarray(cfg.ybar2)
    rng_sec = np.random.default_rng([spec.seed, 2])
    sdir = _section_directions(N, spec, rng_sec)
    shells = 2 * delta * (np.arange(spec.annulus_shells) / (spec.annulus_shells - 1))
    nt = spec.annulus_theta
    th_sector = np.pi / k * np.arange(nt + 1) / nt
    th_full = np.pi / k * np.arange(2 * k * nt) / nt
    th = th_sector if spec.sector else th_full
    E = (shells[:, None, None] * sdir[None]).reshape(-1, N - 1)
    E = np.unique(np.round(E, 15), axis=0)
    T = np.repeat(th, len(E))
    EE = np.tile(E, (len(th), 1))
    r = r0 + EE[:, 0]
    grid = np.empty((len(T), N))
    grid[:, 0] = r * np.cos(T)
    grid[:, 1] = r * np.sin(T)
    grid[:, 2:] = y0 + EE[:, 1:]
    # far field: alternately in the near exterior of the support and out to 10 rbar
    nf = spec.far_points
    u = _unit(np.random.default_rng([spec.seed, 3]).standard_normal((nf, N)))
    tf = 2 * np.pi * np.random.default_rng([spec.seed, 4]).random(nf)
    ef = _unit(np.random.default_rng([spec.seed, 5]).standard_normal((nf, N - 1)))
    lu = np.random.default_rng([spec.seed, 6]).random(nf)
    is_near = np.arange(nf) % 2 == 0
    lo = np.where(is_near, 3 * delta, 2 * cfg.rbar)
    hi = np.where(is_near, max(cfg.rbar, 4 * delta), 10 * cfg.rbar)
    sfar = lo * (hi / lo) ** lu
    ef = ef * sfar[:, None]
    near = np.empty((nf, N))
    rf = np.abs(r0 + ef[:, 0])
    near[:, 0] = rf * np.cos(tf)
    near[:, 1] = rf * np.sin(tf)
    near[:, 2:] = y0 + ef[:, 1:]
    far = np.where(is_near[:, None], near, u * sfar[:, None])
    if spec.sector:
        far = fold_to_sector(far, k)
        pts = [rays]
    else:
        pts = [rays]
        R = rotation(k, N)
        cur = rays
        for _ in range(1, k):
            cur = cur @ R.T
            pts.append(cur)
    pts += [grid, far]
    out = np.concatenate(pts, 0)
    # keep off the cylindrical axis
    rr = np.hypot(out[:, 0], out[:, 1])
    return out[rr > 1e-12]


def fold_to_sector(y, k: int):
    """Map points into theta in [0, pi/k] by rotations and the reflection y_2 -> -y_2."""
    y = np.array(y, dtype=float)
    r = np.hypot(y[:, 0], y[:, 1])
    th = np.mod(np.arctan2(y[:, 1], y[:, 0]), 2 * np.pi / k)
    th = np.where(th > np.pi / k, 2 * np.pi / k - th, th)
    y[:, 0] = r * np.cos(th)
    y[:, 1] = r * np.sin(th)
    return y


def weight_sum(cfg: PolygonConfig, y, exponent: float) -> np.ndarray:
    """sum_j (1 + lam |y - x_j|)^(-exponent)."""
    y = np.atleast_2d(np.asarray(y, dtype=float))
    X = polygon_centers(cfg)
    out = np.zeros(len(y))
    for x in X:
        out += (1.0 + cfg.lam * np.linalg.norm(y - x, axis=1)) ** (-exponent)
    return out


def _resolve(u, cfg, sample):
    if sample is None or isinstance(sample, SampleSpec):
        pts = structured_sample(cfg, sample)
    else:
        pts = np.atleast_2d(np.asarray(sample, dtype=float))
    if callable(u):
        vals = u(pts)
    else:
        vals = u
    if isinstance(vals, tuple):
        comps = [np.asarray(v, dtype=float).reshape(len(pts)) for v in vals]
    else:
        comps = [np.asarray(vals, dtype=float).reshape(len(pts))]
    return pts, comps


def _weighted_sup(u, cfg, sample, head: float, kind: str) -> NormReport:
    N = cfg.N
    tau = tau_of(N)
    pts, comps = _resolve(u, cfg, sample)
    wsum = weight_sum(cfg, pts, head + tau)
    total = 0.0
    best = (-1.0, pts[0])
    vals = []
    for c in comps:
        ratio = cfg.lam ** (-head) * np.abs(c) / wsum
        i = int(np.argmax(ratio))
        v = float(ratio[i])
        vals.append(v)
        total += v
        if v > best[0]:
            best = (v, pts[i])
    return NormReport(total, [float(x) for x in best[1]], len(pts), tau, kind, tuple(vals))


def norm_star(u, cfg: PolygonConfig, sample=None) -> NormReport:
    """||u||_*; ``u`` is a callable on points or values aligned with ``sample`` points.

    A tuple of components gives the pair norm.
    """
    return _weighted_sup(u, cfg, sample, (cfg.N - 2) / 2.0, "star")


def norm_dstar(f, cfg: PolygonConfig, sample=None) -> NormReport:
    """||f||_**; same calling convention as ``norm_star``."""
    return _weighted_sup(f, cfg, sample, (cfg.N + 2) / 2.0, "dstar")
