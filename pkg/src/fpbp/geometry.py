"""Small planar-geometry helpers shared by the map and radio code."""
from __future__ import annotations

import math

import numpy as np


def cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull(points) -> np.ndarray:
    """Andrew's monotone chain. Returns hull vertices counter-clockwise,
    without collinear points and without repeating the first vertex."""
    pts = sorted(set((float(p[0]), float(p[1])) for p in points))
    if len(pts) <= 2:
        return np.array(pts, dtype=float).reshape(-1, 2)
    lower: list = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list = []
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.array(lower[:-1] + upper[:-1], dtype=float)


def strictly_inside_hull(hull: np.ndarray, points: np.ndarray, eps: float = 1e-9) -> np.ndarray:
    """Boolean mask of ``points`` lying in the open interior of a CCW hull.

    Degenerate hulls (fewer than 3 vertices) have an empty interior.
    """
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(hull) < 3:
        return np.zeros(len(points), dtype=bool)
    inside = np.ones(len(points), dtype=bool)
    nxt = np.roll(hull, -1, axis=0)
    for a, b in zip(hull, nxt):
        c = (b[0] - a[0]) * (points[:, 1] - a[1]) - (b[1] - a[1]) * (points[:, 0] - a[0])
        inside &= c > eps
    return inside


def point_in_polygon(x: float, y: float, poly: np.ndarray) -> bool:
    """Even-odd ray casting test; the caller guarantees ``(x, y)`` is not on an edge."""
    inside = False
    n = len(poly)
    xj, yj = poly[-1]
    for i in range(n):
        xi, yi = poly[i]
        if (yi > y) != (yj > y):
            xcross = xi + (y - yi) * (xj - xi) / (yj - yi)
            if x < xcross:
                inside = not inside
        xj, yj = xi, yi
    return inside


def polygon_area(poly: np.ndarray) -> float:
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def closest_point_on_polygon(p, poly: np.ndarray):
    """Closest point on the closed polyline ``poly`` to ``p``.

    Returns ``(distance, point, edge_index)``; ties go to the lowest edge index.
    """
    a = poly
    b = np.roll(poly, -1, axis=0)
    ab = b - a
    ap = np.asarray(p, dtype=float) - a
    denom = np.einsum("ij,ij->i", ab, ab)
    t = np.where(denom > 0, np.einsum("ij,ij->i", ap, ab) / np.where(denom > 0, denom, 1.0), 0.0)
    t = np.clip(t, 0.0, 1.0)
    proj = a + t[:, None] * ab
    d2 = np.einsum("ij,ij->i", proj - p, proj - p)
    k = int(np.argmin(d2))
    return math.sqrt(d2[k]), proj[k], k


def rotate(v, phi: float) -> np.ndarray:
    c, s = math.cos(phi), math.sin(phi)
    return np.array([c * v[0] - s * v[1], s * v[0] + c * v[1]])


def included_angle(u, v) -> float:
    """Angle in [0, pi] between two nonzero vectors."""
    nu = math.hypot(u[0], u[1])
    nv = math.hypot(v[0], v[1])
    c = (u[0] * v[0] + u[1] * v[1]) / (nu * nv)
    return math.acos(max(-1.0, min(1.0, c)))


def wrap_angle(a: float) -> float:
    """Map an angle to (-pi, pi]."""
    a = math.fmod(a + math.pi, 2.0 * math.pi)
    if a <= 0.0:
        a += 2.0 * math.pi
    return a - math.pi
