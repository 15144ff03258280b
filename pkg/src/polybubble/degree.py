"""Brouwer degree of a map on a box in dimension 1, 2 or 3 from boundary data.

dim 1: sign change.  dim 2: winding number of the image of the boundary
trace.  dim 3: sum of signed solid angles of the image of a triangulated
boundary, divided by 4 pi.  Components are rescaled by their maximum
magnitude on the boundary first (a positive diagonal scaling does not change
the degree).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class DegreeError(RuntimeError):
    pass


@dataclass
class DegreeReport:
    box: list
    degree: int
    method: str
    boundary_samples: int
    min_abs_F: float
    raw_value: float = 0.0
    resolution: int = 0
    extras: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "box": [list(map(float, b)) for b in self.box],
            "degree": int(self.degree),
            "method": self.method,
            "boundary_samples": int(self.boundary_samples),
            "min_abs_F": float(self.min_abs_F),
            "raw_value": float(self.raw_value),
            "resolution": int(self.resolution),
            **self.extras,
        }


def _square_trace(box, n):
    (a0, b0), (a1, b1) = box
    t = np.linspace(0.0, 1.0, n, endpoint=False)
    bottom = np.c_[a0 + (b0 - a0) * t, np.full(n, a1)]
    right = np.c_[np.full(n, b0), a1 + (b1 - a1) * t]
    top = np.c_[b0 - (b0 - a0) * t, np.full(n, b1)]
    left = np.c_[np.full(n, a0), b1 - (b1 - a1) * t]
    return np.vstack([bottom, right, top, left])


def _cube_triangles(box, n):
    """Outward-oriented triangulation of the boundary of a 3-box."""
    lo = np.array([b[0] for b in box], dtype=float)
    hi = np.array([b[1] for b in box], dtype=float)
    g = np.linspace(0.0, 1.0, n + 1)
    tris = []
    for axis in range(3):
        others = [a for a in range(3) if a != axis]
        for side, sign in ((lo[axis], -1.0), (hi[axis], 1.0)):
            U, V = np.meshgrid(g, g, indexing="ij")
            P = np.empty((n + 1, n + 1, 3))
            P[..., axis] = side
            P[..., others[0]] = lo[others[0]] + (hi[others[0]] - lo[others[0]]) * U
            P[..., others[1]] = lo[others[1]] + (hi[others[1]] - lo[others[1]]) * V
            a = P[:-1, :-1].reshape(-1, 3)
            b = P[1:, :-1].reshape(-1, 3)
            c = P[1:, 1:].reshape(-1, 3)
            d = P[:-1, 1:].reshape(-1, 3)
            e0 = np.zeros(3)
            e0[others[0]] = 1.0
            e1 = np.zeros(3)
            e1[others[1]] = 1.0
            orient = np.dot(np.cross(e0, e1), np.eye(3)[axis]) * sign
            if orient > 0:
                tris.append(np.stack([a, b, c], 1))
                tris.append(np.stack([a, c, d], 1))
            else:
                tris.append(np.stack([a, c, b], 1))
                tris.append(np.stack([a, d, c], 1))
    return np.concatenate(tris, 0)


def _scaled(F, pts):
    vals = np.asarray(F(pts), dtype=float).reshape(len(pts), -1)
    if not np.all(np.isfinite(vals)):
        raise DegreeError("map is not finite on the box boundary")
    scale = np.max(np.abs(vals), axis=0)
    if np.any(scale == 0):
        raise DegreeError("zero too close to boundary: a component vanishes identically there")
    return vals / scale


def degree_box(F, box, resolution: int = 32, max_refine: int = 5) -> DegreeReport:
    """Brouwer degree of ``F`` (maps (n, d) -> (n, d)) on the box [(lo, hi), ...].

    The boundary is refined by doubling until every step of the image is
    short compared with its distance from the origin; otherwise a zero may sit
    on or next to the boundary and a ``DegreeError`` is raised.
    """
    box = [tuple(map(float, b)) for b in box]
    d = len(box)
    if d not in (1, 2, 3):
        raise ValueError("degree_box supports 1, 2 or 3 unknowns")
    if any(not b[0] < b[1] for b in box):
        raise ValueError("box intervals must be nondegenerate")
    if d == 1:
        pts = np.array([[box[0][0]], [box[0][1]]])
        vals = np.asarray(F(pts), dtype=float).reshape(2)
        if np.any(vals == 0) or not np.all(np.isfinite(vals)):
            raise DegreeError("zero too close to boundary")
        deg = int((np.sign(vals[1]) - np.sign(vals[0])) // 2)
        return DegreeReport(box, deg, "sign-change", 2, float(np.min(np.abs(vals))), float(deg), 1)
    n = int(resolution)
    pts = _square_trace(box, n) if d == 2 else _cube_triangles(box, n).reshape(-1, 3)
    vals = np.asarray(F(pts), dtype=float).reshape(len(pts), -1)
    for comp in vals.T:
        if np.all(comp > 0) or np.all(comp < 0):
            # image of the boundary lies in an open half-space
            return DegreeReport(box, 0, "half-space", len(pts),
                                float(np.min(np.linalg.norm(vals, axis=1))), 0.0, n)
    for _ in range(max_refine + 1):
        if d == 2:
            pts = _square_trace(box, n)
            G = _scaled(F, pts)
            mags = np.linalg.norm(G, axis=1)
            nxt = np.roll(G, -1, axis=0)
            steps = np.linalg.norm(nxt - G, axis=1)
            ok = np.all(steps < np.minimum(mags, np.roll(mags, -1))) if np.all(mags > 0) else False
            if ok:
                ang = np.arctan2(G[:, 1], G[:, 0])
                dang = np.angle(np.exp(1j * (np.roll(ang, -1) - ang)))
                raw = float(np.sum(dang) / (2 * np.pi))
                return DegreeReport(box, int(round(raw)), "boundary winding", len(pts),
                                    float(mags.min()), raw, n)
        else:
            tris = _cube_triangles(box, n)
            flat = tris.reshape(-1, 3)
            G = _scaled(F, flat).reshape(-1, 3, 3)
            mags = np.linalg.norm(G, axis=2)
            if np.all(mags > 0):
                Uv = G / mags[..., None]
                a, b, c = Uv[:, 0], Uv[:, 1], Uv[:, 2]
                steps = np.max(np.stack([np.linalg.norm(G[:, 0] - G[:, 1], axis=1),
                                         np.linalg.norm(G[:, 1] - G[:, 2], axis=1),
                                         np.linalg.norm(G[:, 2] - G[:, 0], axis=1)]), axis=0)
                ok = np.all(steps < mags.min(axis=1))
                if ok:
                    num = np.einsum("ij,ij->i", a, np.cross(b, c))
                    den = 1.0 + np.einsum("ij,ij->i", a, b) + np.einsum("ij,ij->i", b, c) \
                        + np.einsum("ij,ij->i", c, a)
                    omega = 2.0 * np.arctan2(num, den)
                    raw = float(np.sum(omega) / (4 * np.pi))
                    return DegreeReport(box, int(round(raw)), "solid-angle sum", len(flat),
                                        float(mags.min()), raw, n)
        n *= 2
    raise DegreeError(
        f"zero too close to boundary: image steps not resolved at resolution {n // 2}"
    )
