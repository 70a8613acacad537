"""Body-frame outline polylines for every scenario body kind.

Strictly convex bodies are traced as the zero level set of their
defining functions by radial bisection from the body-frame origin,
which every shipped shape contains; polygons use their vertices.
"""

from __future__ import annotations

import numpy as np


def _circle_level(center, radius):
    c = np.asarray(center, dtype=float)
    r = float(radius)
    return lambda y: float((y - c) @ (y - c) - r * r)


def _ellipse_level(a, b):
    return lambda y: float((y[0] / a) ** 2 + (y[1] / b) ** 2 - 1.0)


def _superellipse_level(a, b, power):
    p = int(power)
    return lambda y: float(abs(y[0] / a) ** p + abs(y[1] / b) ** p - 1.0)


def _radial_outline(levels, n: int, r_max: float = 20.0) -> np.ndarray:
    """Zero contour of max(levels) by bisection along rays from 0."""
    pts = []
    for ang in np.linspace(0.0, 2 * np.pi, n, endpoint=False):
        d = np.array([np.cos(ang), np.sin(ang)])
        lo, hi = 0.0, r_max
        if max(f(hi * d) for f in levels) < 0:
            raise ValueError("body unbounded along a ray")
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if max(f(mid * d) for f in levels) < 0:
                lo = mid
            else:
                hi = mid
        pts.append(0.5 * (lo + hi) * d)
    pts.append(pts[0])
    return np.array(pts)


def _polygon_vertices(vertices) -> np.ndarray:
    verts = np.asarray(vertices, dtype=float)
    center = verts.mean(axis=0)
    order = np.argsort(np.arctan2(*(verts - center).T[::-1]))
    verts = verts[order]
    return np.vstack([verts, verts[:1]])


def body_outline(body: dict, n: int = 256) -> np.ndarray:
    """Closed body-frame outline, shape (k, 2), first point repeated."""
    kind = body.get("kind")
    if kind == "circle":
        return _radial_outline([_circle_level([0, 0], body["radius"])], n)
    if kind == "ellipse":
        return _radial_outline([_ellipse_level(body["a"], body["b"])], n)
    if kind == "superellipse":
        return _radial_outline(
            [_superellipse_level(body["a"], body["b"], body["power"])], n)
    if kind == "circle_intersection":
        levels = [_circle_level(c, r)
                  for c, r in zip(body["centers"], body["radii"])]
        return _radial_outline(levels, n)
    if kind == "polygon":
        return _polygon_vertices(body["vertices"])
    if kind == "regular_polygon":
        m = int(body["sides"])
        rad = float(body["radius"])
        rot = float(body.get("rotation", 0.0))
        ang = rot + 2 * np.pi * np.arange(m) / m
        return _polygon_vertices(np.column_stack([rad * np.cos(ang),
                                                  rad * np.sin(ang)]))
    raise ValueError(f"unknown body kind {kind!r}")


def transform_outline(outline: np.ndarray, pose) -> np.ndarray:
    """Body-frame outline to world frame at pose (x, y, theta)."""
    x, y, theta = pose
    c, s = np.cos(theta), np.sin(theta)
    R = np.array([[c, -s], [s, c]])
    return outline @ R.T + np.array([x, y])
