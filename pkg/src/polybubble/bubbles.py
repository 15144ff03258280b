"""Aubin-Talenti bubbles, their derivatives, and the synchronized amplitudes.

The bubble is

    w_{x,lam}(y) = c_N * (lam / (1 + lam^2 |y - x|^2))^((N-2)/2),
    c_N = (N(N-2))^((N-2)/4),

which solves -Lap w = w^(2*-1) on R^N with 2* = 2N/(N-2).  A synchronized
pair (U, V) = (s w, kappa s w) solves the potential-free coupled system

    -Lap u = u^(2*-1) + (beta/2) u^(2*/2-1) v^(2*/2)
    -Lap v = v^(2*-1) + (beta/2) v^(2*/2-1) u^(2*/2)

exactly when kappa solves the consistency equation below and
s^(2*-2) (1 + (beta/2) kappa^(2*/2)) = 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.optimize import brentq


class SynchronizationError(ValueError):
    """Raised when the synchronized amplitude s is undefined."""


def check_dimension(N) -> int:
    if isinstance(N, bool) or int(N) != N or N < 5:
        raise ValueError(f"dimension must be an integer >= 5, got {N!r}")
    return int(N)


def critical_exponent(N: int) -> float:
    """2* = 2N/(N-2)."""
    return 2.0 * N / (N - 2.0)


def bubble_constant(N: int) -> float:
    """Normalization c_N = (N(N-2))^((N-2)/4)."""
    return float(N * (N - 2.0)) ** ((N - 2.0) / 4.0)


def kappa_consistency(kappa, beta: float, N: int):
    """2 + beta k^(2*/2) - beta k^(2*/2-2) - 2 k^(2*-2); zero iff (sw, k sw) solves the system."""
    p = critical_exponent(N)
    kappa = np.asarray(kappa, dtype=float)
    return 2.0 + beta * kappa ** (p / 2) - beta * kappa ** (p / 2 - 2) - 2.0 * kappa ** (p - 2)


def kappa_printed(kappa, beta: float, N: int):
    """The variant with no beta on the k^(2*/2) term (audit only)."""
    p = critical_exponent(N)
    kappa = np.asarray(kappa, dtype=float)
    return 2.0 + kappa ** (p / 2) - beta * kappa ** (p / 2 - 2) - 2.0 * kappa ** (p - 2)


@dataclass(frozen=True)
class KappaRoot:
    kappa: float
    residual: float
    printed_residual: float


def solve_kappa(beta: float, N: int, search_interval=(1e-3, 1e3), step: float = 1e-3) -> list[KappaRoot]:
    """All roots of the consistency equation on ``search_interval``, ascending.

    Sign-change scan with a fixed step, then Brent bisection on each bracket.
    Tangential (even multiplicity) roots are not detected.
    """
    N = check_dimension(N)
    if not math.isfinite(beta):
        raise ValueError("beta must be finite")
    lo, hi = map(float, search_interval)
    if not (0.0 < lo < hi):
        return []
    n = int(math.ceil((hi - lo) / step)) + 1
    grid = np.linspace(lo, hi, n)
    f = kappa_consistency(grid, beta, N)

    def g(x):
        return float(kappa_consistency(x, beta, N))

    roots: list[float] = []
    exact = np.flatnonzero(f == 0.0)
    roots.extend(grid[exact].tolist())
    sgn = np.sign(f)
    brackets = np.flatnonzero(sgn[:-1] * sgn[1:] < 0)
    for i in brackets:
        r = brentq(g, grid[i], grid[i + 1], xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
        roots.append(r)
    roots.sort()
    out: list[KappaRoot] = []
    for r in roots:
        if out and abs(r - out[-1].kappa) <= 1e-12 * max(1.0, r):
            continue
        res = g(r)
        if abs(res) >= 1e-12:
            # polish with a few secant-free bisection steps on a tiny bracket
            a, b = r * (1 - 1e-12), r * (1 + 1e-12)
            if g(a) * g(b) < 0:
                r = brentq(g, a, b, xtol=1e-300, rtol=4 * np.finfo(float).eps)
                res = g(r)
        out.append(KappaRoot(float(r), float(res), float(kappa_printed(r, beta, N))))
    return out


def solve_s(beta: float, kappa: float, N: int) -> float:
    """s = (2 / (2 + beta kappa^(2*/2)))^((N-2)/4)."""
    N = check_dimension(N)
    p = critical_exponent(N)
    den = 2.0 + beta * kappa ** (p / 2)
    if not den > 0:
        raise SynchronizationError(
            f"2 + beta*kappa^(2*/2) = {den:.6g} <= 0: synchronized amplitude undefined"
        )
    return (2.0 / den) ** ((N - 2.0) / 4.0)


@dataclass(frozen=True)
class CouplingData:
    N: int
    beta: float
    kappa: float
    s: float

    def __post_init__(self):
        check_dimension(self.N)
        if not (self.kappa > 0 and self.s > 0):
            raise ValueError("kappa and s must be positive")
        if not 1.0 + self.beta * self.kappa ** (self.p / 2) > 0:
            raise SynchronizationError("1 + beta*kappa^(2*/2) must be positive")

    @property
    def p(self) -> float:
        """Critical exponent 2*."""
        return critical_exponent(self.N)

    @classmethod
    def from_beta(cls, beta: float, N: int, kappa: float | None = None) -> "CouplingData":
        """Coupling with the given kappa (default: the symmetric root kappa = 1)."""
        if kappa is None:
            kappa = 1.0
        kappa = float(kappa)
        res = float(kappa_consistency(kappa, beta, N))
        if abs(res) > 1e-9:
            raise SynchronizationError(f"kappa={kappa} is not a consistency root (residual {res:.3g})")
        return cls(int(N), float(beta), kappa, solve_s(beta, kappa, N))

    @property
    def amplitude_identity(self) -> float:
        """s^(2*-2)(1 + (beta/2) kappa^(2*/2)) - 1, zero up to rounding."""
        return self.s ** (self.p - 2) * (1 + 0.5 * self.beta * self.kappa ** (self.p / 2)) - 1.0


@dataclass(frozen=True)
class BubbleParams:
    center: tuple
    lam: float

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lambda must be positive")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))

    @property
    def N(self) -> int:
        return len(self.center)


def _as_points(y, N: int) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if y.shape[-1] != N:
        raise ValueError(f"points must have trailing dimension {N}")
    return y


def bubble_eval(p: BubbleParams, y):
    """w_{x,lam}(y) for points y of shape (..., N)."""
    N = p.N
    y = _as_points(y, N)
    d = y - np.asarray(p.center)
    rho2 = np.einsum("...i,...i->...", d, d)
    return bubble_constant(N) * (p.lam / (1.0 + p.lam**2 * rho2)) ** ((N - 2) / 2.0)


class BubbleDerivatives(NamedTuple):
    value: np.ndarray
    grad_y: np.ndarray
    d_lambda: np.ndarray
    d_center: np.ndarray


def bubble_gradients(p: BubbleParams, y) -> BubbleDerivatives:
    """Closed-form value, grad_y, d/dlambda and d/dx of w_{x,lam}(y)."""
    N = p.N
    y = _as_points(y, N)
    lam = p.lam
    d = y - np.asarray(p.center)
    rho2 = np.einsum("...i,...i->...", d, d)
    A = 1.0 + lam**2 * rho2
    w = bubble_constant(N) * (lam / A) ** ((N - 2) / 2.0)
    grad = -(N - 2) * lam**2 * d * (w / A)[..., None]
    dl = 0.5 * (N - 2) * w * (1.0 - lam**2 * rho2) / (lam * A)
    return BubbleDerivatives(w, grad, dl, -grad)


def bubble_laplacian(p: BubbleParams, y):
    """Lap w = -w^(2*-1)."""
    return -bubble_eval(p, y) ** (critical_exponent(p.N) - 1)


def coupling_terms(u, v, beta: float, N: int):
    """Right-hand sides f(u,v) = u^(2*-1) + (beta/2) u^(2*/2-1) v^(2*/2) and its mirror."""
    p = critical_exponent(N)
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    fu = u ** (p - 1) + 0.5 * beta * u ** (p / 2 - 1) * v ** (p / 2)
    fv = v ** (p - 1) + 0.5 * beta * v ** (p / 2 - 1) * u ** (p / 2)
    return fu, fv


def verify_sync_solution(c: CouplingData, sample) -> float:
    """Max absolute residual of the potential-free system on (s w_{0,1}, kappa s w_{0,1})."""
    N = c.N
    y = _as_points(sample, N)
    if y.size == 0:
        raise ValueError("sample must be nonempty")
    w = bubble_eval(BubbleParams((0.0,) * N, 1.0), y)
    p = c.p
    U = c.s * w
    V = c.kappa * c.s * w
    lapU = -c.s * w ** (p - 1)
    lapV = c.kappa * lapU
    fu, fv = coupling_terms(U, V, c.beta, N)
    r1 = -lapU - fu
    r2 = -lapV - fv
    return float(max(np.max(np.abs(r1)), np.max(np.abs(r2))))


def synchronized_pairs(beta: float, N: int, search_interval=(1e-3, 1e3)) -> list[CouplingData]:
    """Every admissible (kappa, s) on the interval."""
    out = []
    for root in solve_kappa(beta, N, search_interval):
        try:
            out.append(CouplingData(int(N), float(beta), root.kappa, solve_s(beta, root.kappa, N)))
        except SynchronizationError:
            continue
    return out
