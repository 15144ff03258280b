"""Polygonal placement of bubbles, the tube cutoff, and the symmetry test."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bubbles import CouplingData


@dataclass(frozen=True)
class CutoffSpec:
    """xi = eta(s), s = |(|y'|, y'') - (r0, y0'')|; xi = 1 for s <= delta, 0 for s >= 2 delta."""

    r0: float
    y0_2: tuple
    delta: float

    def __post_init__(self):
        object.__setattr__(self, "y0_2", tuple(float(v) for v in self.y0_2))
        if not (self.r0 > 0 and self.delta > 0):
            raise ValueError("r0 and delta must be positive")

    @classmethod
    def around(cls, r0: float, y0_2, delta: float | None = None) -> "CutoffSpec":
        return cls(r0, tuple(y0_2), 0.1 * r0 if delta is None else delta)

    @property
    def N(self) -> int:
        return len(self.y0_2) + 2


@dataclass(frozen=True)
class PolygonConfig:
    """One ansatz instance; ``cutoff=None`` means xi = 1 everywhere (uncut bubbles)."""

    k: int
    rbar: float
    ybar2: tuple
    lam: float
    coupling: CouplingData
    cutoff: CutoffSpec | None = None

    def __post_init__(self):
        object.__setattr__(self, "ybar2", tuple(float(v) for v in self.ybar2))
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not (self.rbar > 0 and self.lam > 0):
            raise ValueError("rbar and lambda must be positive")
        if len(self.ybar2) != self.coupling.N - 2:
            raise ValueError("ybar2 must have N-2 components")
        if self.cutoff is not None:
            if self.cutoff.N != self.coupling.N:
                raise ValueError("cutoff dimension mismatch")
            off = math.hypot(self.rbar - self.cutoff.r0,
                             float(np.linalg.norm(np.subtract(self.ybar2, self.cutoff.y0_2))))
            if off >= 10 * self.cutoff.delta:
                raise ValueError("concentration point must lie within 10*delta of the cutoff center")

    @property
    def N(self) -> int:
        return self.coupling.N

    @property
    def centers(self) -> np.ndarray:
        return polygon_centers(self)

    def with_lambda(self, lam: float) -> "PolygonConfig":
        return PolygonConfig(self.k, self.rbar, self.ybar2, lam, self.coupling, self.cutoff)


def canonical_lambda(t: float, k: int, N: int) -> float:
    """lambda = t k^((N-2)/(N-4))."""
    return t * k ** ((N - 2.0) / (N - 4.0))


def centers_from(k: int, rbar: float, ybar2) -> np.ndarray:
    ybar2 = np.asarray(ybar2, dtype=float)
    ang = 2.0 * np.pi * np.arange(k) / k
    out = np.empty((k, 2 + ybar2.size))
    out[:, 0] = rbar * np.cos(ang)
    out[:, 1] = rbar * np.sin(ang)
    out[:, 2:] = ybar2
    return out


def polygon_centers(cfg: PolygonConfig) -> np.ndarray:
    """x_j = (rbar cos(2(j-1)pi/k), rbar sin(2(j-1)pi/k), ybar''), shape (k, N)."""
    return centers_from(cfg.k, cfg.rbar, cfg.ybar2)


def center_distances(k: int, rbar: float) -> np.ndarray:
    """|x_1 - x_j| = 2 rbar sin((j-1) pi / k) for j = 2..k."""
    return 2.0 * rbar * np.sin(np.arange(1, k) * np.pi / k)


def min_center_distance(k: int, rbar: float) -> float:
    if k < 2:
        raise ValueError("k must be >= 2")
    return 2.0 * rbar * math.sin(math.pi / k)


def cylindrical(y):
    """(r, theta, y'') of points y of shape (..., N)."""
    y = np.asarray(y, dtype=float)
    r = np.hypot(y[..., 0], y[..., 1])
    return r, np.arctan2(y[..., 1], y[..., 0]), y[..., 2:]


def quintic_step(t):
    """eta(t) = 1 - (10t^3 - 15t^4 + 6t^5) on [0, 1] with derivatives in t."""
    t = np.clip(t, 0.0, 1.0)
    e = 1.0 - t**3 * (10.0 - 15.0 * t + 6.0 * t**2)
    de = -30.0 * t**2 * (1.0 - t) ** 2
    d2e = -60.0 * t * (1.0 - t) * (1.0 - 2.0 * t)
    return e, de, d2e


def tube_distance(spec: CutoffSpec, y):
    """s(y), grad s, Lap s; grad/Lap are nan where s = 0 or on the axis."""
    y = np.asarray(y, dtype=float)
    N = y.shape[-1]
    r = np.hypot(y[..., 0], y[..., 1])
    dy2 = y[..., 2:] - np.asarray(spec.y0_2)
    dr = r - spec.r0
    s = np.sqrt(dr**2 + np.einsum("...i,...i->...", dy2, dy2))
    with np.errstate(divide="ignore", invalid="ignore"):
        grad = np.empty(y.shape)
        grad[..., 0] = dr / s * y[..., 0] / r
        grad[..., 1] = dr / s * y[..., 1] / r
        grad[..., 2:] = dy2 / s[..., None]
        lap = (N - 2) / s + dr / (r * s)
    return s, grad, lap


def cutoff_eval(spec: CutoffSpec | None, y):
    """(xi, grad xi, Lap xi) at points y of shape (..., N)."""
    y = np.asarray(y, dtype=float)
    if spec is None:
        shape = y.shape[:-1]
        return np.ones(shape), np.zeros(y.shape), np.zeros(shape)
    d = spec.delta
    s, gs, ls = tube_distance(spec, y)
    r = np.hypot(y[..., 0], y[..., 1])
    if np.any((r == 0) & (s < 2 * d)):
        raise ValueError("cutoff evaluated on the cylindrical axis inside its support")
    t = (s - d) / d
    e, de, d2e = quintic_step(t)
    ramp = (s > d) & (s < 2 * d)
    xi = np.where(s <= d, 1.0, np.where(s >= 2 * d, 0.0, np.clip(e, 0.0, 1.0)))
    de = np.where(ramp, de / d, 0.0)
    d2e = np.where(ramp, d2e / d**2, 0.0)
    gs = np.where(ramp[..., None], gs, 0.0)
    ls = np.where(ramp, ls, 0.0)
    return xi, de[..., None] * gs, d2e + de * ls


def rotation(k: int, N: int) -> np.ndarray:
    """Rotation by 2 pi / k in the y' plane."""
    R = np.eye(N)
    c, s = math.cos(2 * math.pi / k), math.sin(2 * math.pi / k)
    R[:2, :2] = [[c, -s], [s, c]]
    return R


def symmetry_check(field, k: int, tol: float, sample) -> bool:
    """k-fold rotation invariance in y' and evenness in y_2..y_N on the sample.

    ``field`` maps points (n, N) to a pair of arrays (u, v).
    """
    y = np.asarray(sample, dtype=float)
    N = y.shape[-1]
    base = field(y)
    images = [y @ rotation(k, N).T]
    for h in range(1, N):
        m = y.copy()
        m[:, h] = -m[:, h]
        images.append(m)
    for img in images:
        other = field(img)
        for a, b in zip(base, other):
            if np.max(np.abs(np.asarray(a) - np.asarray(b)), initial=0.0) > tol:
                return False
    return True
