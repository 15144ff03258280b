"""A pair of scalar fields on R^N, evaluated on arrays of points."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

PROVENANCE = ("ansatz", "residual", "correction", "custom")


@dataclass
class FieldPair:
    """(u, v) with optional gradients and Laplacians.

    Each callable maps points of shape (n, N) to an array of shape (n,)
    (gradients: (n, N)).
    """

    u: Callable
    v: Callable
    grad_u: Callable | None = None
    grad_v: Callable | None = None
    lap_u: Callable | None = None
    lap_v: Callable | None = None
    tag: str = "custom"

    def __post_init__(self):
        if self.tag not in PROVENANCE:
            raise ValueError(f"unknown provenance tag {self.tag!r}")

    def __call__(self, y):
        y = np.atleast_2d(np.asarray(y, dtype=float))
        return np.asarray(self.u(y), dtype=float), np.asarray(self.v(y), dtype=float)

    def gradients(self, y):
        if self.grad_u is None or self.grad_v is None:
            raise ValueError("field pair carries no gradients")
        y = np.atleast_2d(np.asarray(y, dtype=float))
        return np.asarray(self.grad_u(y)), np.asarray(self.grad_v(y))

    def laplacians(self, y):
        if self.lap_u is None or self.lap_v is None:
            raise ValueError("field pair carries no Laplacians")
        y = np.atleast_2d(np.asarray(y, dtype=float))
        return np.asarray(self.lap_u(y)), np.asarray(self.lap_v(y))

    def scaled(self, cu: float, cv: float | None = None) -> "FieldPair":
        cv = cu if cv is None else cv

        def mul(f, c):
            return None if f is None else (lambda y: c * np.asarray(f(y)))

        return FieldPair(mul(self.u, cu), mul(self.v, cv), mul(self.grad_u, cu), mul(self.grad_v, cv),
                         mul(self.lap_u, cu), mul(self.lap_v, cv), self.tag)


def zero_pair(tag: str = "custom") -> FieldPair:
    z = lambda y: np.zeros(len(y))  # noqa: E731
    zg = lambda y: np.zeros(np.shape(y))  # noqa: E731
    return FieldPair(z, z, zg, zg, z, z, tag)
