"""State-dependent convex robot bodies and their derivatives.

Two body kinds are supported:

* ``StrictConvexBody`` -- an intersection of smooth level-set constraints
  ``A_k(x, z) <= 0`` built from body-frame level functions composed with a
  planar rigid map.
* ``PolytopeBody`` -- a rigid polytope ``A(x) z <= b(x)`` stored as
  body-frame half spaces plus a pose map.

Everything downstream (distance solvers, sensitivities, safety filters)
consumes the derivative blocks produced here.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np


def rotation_2d(theta: float) -> np.ndarray:
    """2x2 rotation matrix for angle theta."""
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


# d/dtheta R(theta) = R(theta) @ SKEW_2D
SKEW_2D = np.array([[0.0, -1.0], [1.0, 0.0]])


def pose_from_state(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Extract planar position p and rotation R from state (x1, x2, x3)."""
    x = np.asarray(x, dtype=float)
    return x[:2].copy(), rotation_2d(x[2])


# ---------------------------------------------------------------------------
# body-frame level functions for strictly convex shapes
# ---------------------------------------------------------------------------


class LevelFunction:
    """Scalar convex function phi(y) in body coordinates.

    Subclasses provide value, gradient, and Hessian; the 0-sublevel set
    {y: phi(y) <= 0} is the (body-frame) shape piece.
    """

    def value(self, y: np.ndarray) -> float:
        raise NotImplementedError

    def grad(self, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def hess(self, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class CircleLevel(LevelFunction):
    """phi(y) = ||y - c||^2 - R^2."""

    def __init__(self, radius: float, center=(0.0, 0.0)):
        self.radius = float(radius)
        self.center = np.asarray(center, dtype=float)

    def value(self, y):
        d = y - self.center
        return float(d @ d - self.radius**2)

    def grad(self, y):
        return 2.0 * (y - self.center)

    def hess(self, y):
        return 2.0 * np.eye(len(y))


class EllipseLevel(LevelFunction):
    """phi(y) = (y1/a)^2 + (y2/b)^2 - 1."""

    def __init__(self, a: float, b: float):
        self.inv_sq = np.array([1.0 / a**2, 1.0 / b**2])

    def value(self, y):
        return float(self.inv_sq @ (y * y) - 1.0)

    def grad(self, y):
        return 2.0 * self.inv_sq * y

    def hess(self, y):
        return np.diag(2.0 * self.inv_sq)


class SuperellipseLevel(LevelFunction):
    """phi(y) = (y1/a)^p + (y2/b)^p - 1 with even power p >= 2.

    For p > 2 the Hessian is only positive semidefinite on the symmetry
    axes; callers that need strong convexity should check the reported
    minimum eigenvalue diagnostics downstream.
    """

    def __init__(self, a: float, b: float, power: int):
        if power < 2 or power % 2 != 0:
            raise ValueError("superellipse power must be even and >= 2")
        self.scale = np.array([1.0 / a, 1.0 / b])
        self.power = int(power)

    def value(self, y):
        return float(np.sum((self.scale * y) ** self.power) - 1.0)

    def grad(self, y):
        p = self.power
        return p * self.scale * (self.scale * y) ** (p - 1)

    def hess(self, y):
        p = self.power
        return np.diag(p * (p - 1) * self.scale**2 * (self.scale * y) ** (p - 2))


@dataclass
class ConstraintEval:
    """All derivative blocks of the r constraints at one (x, z)."""

    values: np.ndarray      # (r,)
    grad_z: np.ndarray      # (r, l)
    hess_z: np.ndarray      # (r, l, l)
    grad_x: np.ndarray      # (r, n)
    mixed_xz: np.ndarray    # (r, n, l)  d/dx of grad_z


class StrictConvexBody:
    """Strictly convex body: body-frame level functions + rigid pose map.

    The world-frame constraints are A_k(x, z) = phi_k(R(x3)^T (z - p(x)))
    with p = (x1, x2).  State dimension is 3, ambient dimension 2.
    """

    kind = "strict"

    def __init__(self, levels: list[LevelFunction], interior_point=(0.0, 0.0)):
        if not levels:
            raise ValueError("need at least one level function")
        self.levels = list(levels)
        self.interior_body = np.asarray(interior_point, dtype=float)
        self.ambient_dim = 2
        self.state_dim = 3
        self.num_constraints = len(levels)
        v = max(lv.value(self.interior_body) for lv in levels)
        if v >= 0:
            raise ValueError("interior point is not strictly inside the body")

    def interior_point(self, x: np.ndarray) -> np.ndarray:
        """A strictly feasible world point at state x."""
        p, R = pose_from_state(x)
        return p + R @ self.interior_body

    def evaluate_z(self, p: np.ndarray, R: np.ndarray, z: np.ndarray):
        """Values plus z-derivatives only, for a precomputed pose.

        Cheaper than evaluate(); used inside distance-solver iterations
        where the state derivatives are not needed.
        """
        y = R.T @ (np.asarray(z, dtype=float) - p)
        r, l = self.num_constraints, self.ambient_dim
        vals = np.empty(r)
        gz = np.empty((r, l))
        hz = np.empty((r, l, l))
        for k, lv in enumerate(self.levels):
            vals[k] = lv.value(y)
            gz[k] = R @ lv.grad(y)
            hz[k] = R @ lv.hess(y) @ R.T
        return vals, gz, hz

    def evaluate(self, x: np.ndarray, z: np.ndarray) -> ConstraintEval:
        """Values and all derivative blocks of A(x, z)."""
        p, R = pose_from_state(x)
        y = R.T @ (np.asarray(z, dtype=float) - p)
        r, l, n = self.num_constraints, self.ambient_dim, self.state_dim
        vals = np.empty(r)
        gz = np.empty((r, l))
        hz = np.empty((r, l, l))
        gx = np.empty((r, n))
        mixed = np.empty((r, n, l))
        dRT_dth = SKEW_2D.T @ R.T  # d/dtheta of R^T
        dy_dth = dRT_dth @ (z - p)
        for k, lv in enumerate(self.levels):
            g = lv.grad(y)
            H = lv.hess(y)
            vals[k] = lv.value(y)
            gz[k] = R @ g                     # row of grad wrt z
            hz[k] = R @ H @ R.T
            # dA/dp = -grad_z A; dA/dtheta = g . dy/dtheta
            gx[k, :2] = -gz[k]
            gx[k, 2] = g @ dy_dth
            # d(grad_z A)/dp_a = -(hess_z A)[a, :]
            mixed[k, :2, :] = -hz[k]
            # d(grad_z A)/dtheta = R H dy_dth + dR/dth g
            mixed[k, 2, :] = R @ (H @ dy_dth) + (R @ SKEW_2D) @ g
        return ConstraintEval(vals, gz, hz, gx, mixed)

    def contains(self, x: np.ndarray, z: np.ndarray) -> tuple[bool, float]:
        margin = float(np.max(self.evaluate(x, z).values))
        return margin <= 0.0, margin

    def min_hessian_eigenvalue(self, x, z, lam: np.ndarray) -> float:
        """Min eigenvalue of sum_k lam_k * hess_z A_k at (x, z).

        Diagnostic for degenerate curvature (e.g. quartic superellipses on
        their axes) so downstream solvers can decide to regularize.
        """
        ev = self.evaluate(x, z)
        H = np.tensordot(lam, ev.hess_z, axes=1)
        return float(np.linalg.eigvalsh(H)[0])


# ---------------------------------------------------------------------------
# shape builders matching the shipped scenarios
# ---------------------------------------------------------------------------


def make_circle(radius: float) -> StrictConvexBody:
    return StrictConvexBody([CircleLevel(radius)])


def make_ellipse(a: float, b: float) -> StrictConvexBody:
    return StrictConvexBody([EllipseLevel(a, b)])


def make_superellipse(a: float, b: float, power: int) -> StrictConvexBody:
    return StrictConvexBody([SuperellipseLevel(a, b, power)])


def make_circle_intersection(centers, radii) -> StrictConvexBody:
    """Intersection of circles; centers must admit a common interior point.

    The interior point is taken as the centroid of the centers, which works
    for the lens-like shapes used in the shipped scenarios.
    """
    centers = np.asarray(centers, dtype=float)
    radii = np.asarray(radii, dtype=float)
    if len(centers) != len(radii):
        raise ValueError("centers and radii length mismatch")
    levels = [CircleLevel(rad, c) for c, rad in zip(centers, radii)]
    centroid = centers.mean(axis=0)
    return StrictConvexBody(levels, interior_point=centroid)


# ---------------------------------------------------------------------------
# polytopes
# ---------------------------------------------------------------------------


@dataclass
class PolytopeRates:
    """Lie-derivative tensors of the world-frame half-space data.

    Adot = lf_A + sum_m u_m * lg_A[:, :, m] and likewise for b.
    """

    lf_A: np.ndarray   # (r, l)
    lg_A: np.ndarray   # (r, l, m)
    lf_b: np.ndarray   # (r,)
    lg_b: np.ndarray   # (r, m)

    def at_input(self, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        u = np.asarray(u, dtype=float)
        return (self.lf_A + self.lg_A @ u, self.lf_b + self.lg_b @ u)


class PolytopeBody:
    """Rigid polytope stored as body-frame half spaces A0 y <= b0.

    Rows of A0 are unit-normalized at construction so dual variables are
    comparable across faces.
    """

    kind = "polytope"

    def __init__(self, A0: np.ndarray, b0: np.ndarray):
        A0 = np.asarray(A0, dtype=float)
        b0 = np.asarray(b0, dtype=float)
        if A0.ndim != 2 or b0.shape != (A0.shape[0],):
            raise ValueError("inconsistent half-space data")
        norms = np.linalg.norm(A0, axis=1)
        if np.any(norms < 1e-12):
            raise ValueError("zero face normal")
        self.A0 = A0 / norms[:, None]
        self.b0 = b0 / norms
        self.num_constraints, self.ambient_dim = self.A0.shape
        self.state_dim = 3
        self._vertices = None

    @classmethod
    def from_vertices(cls, vertices) -> "PolytopeBody":
        """Build from a 2-D vertex cloud (convex hull is taken)."""
        from scipy.spatial import ConvexHull

        pts = np.asarray(vertices, dtype=float)
        hull = ConvexHull(pts)
        # hull.equations rows are [normal, offset] with normal.x + off <= 0
        A0 = hull.equations[:, :-1]
        b0 = -hull.equations[:, -1]
        return cls(A0, b0)

    def vertices(self) -> np.ndarray:
        """Body-frame vertices by enumerating row intersections."""
        if self._vertices is not None:
            return self._vertices
        r, l = self.A0.shape
        found = []
        for rows in itertools.combinations(range(r), l):
            Ar = self.A0[list(rows)]
            if abs(np.linalg.det(Ar)) < 1e-10:
                continue
            v = np.linalg.solve(Ar, self.b0[list(rows)])
            if np.all(self.A0 @ v <= self.b0 + 1e-9):
                if not any(np.linalg.norm(v - w) < 1e-9 for w in found):
                    found.append(v)
        if not found:
            raise ValueError("polytope appears unbounded or empty")
        self._vertices = np.array(found)
        return self._vertices

    def at_state(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """World-frame (A, b) at state x: A = A0 R^T, b = b0 + A0 R^T p."""
        p, R = pose_from_state(x)
        if abs(abs(np.linalg.det(R)) - 1.0) > 1e-9:
            raise ValueError("non-orthonormal rotation in state")
        A = self.A0 @ R.T
        return A, self.b0 + A @ p

    def rates(self, x: np.ndarray, f: np.ndarray, g: np.ndarray) -> PolytopeRates:
        """Lie derivatives of (A, b) along control-affine dynamics.

        f is (n,), g is (n, m); the pose map uses ppos = x[:2], theta = x[2].
        """
        p, R = pose_from_state(x)
        f = np.asarray(f, dtype=float)
        g = np.asarray(g, dtype=float)
        if f.shape[0] != self.state_dim or g.shape[0] != self.state_dim:
            raise ValueError("dynamics dimension mismatch")
        A = self.A0 @ R.T
        dA_dth = self.A0 @ (R @ SKEW_2D).T
        m = g.shape[1]
        lf_A = dA_dth * f[2]
        lg_A = dA_dth[:, :, None] * g[2, :][None, None, :]
        lf_b = dA_dth @ p * f[2] + A @ f[:2]
        lg_b = np.outer(dA_dth @ p, g[2, :]) + A @ g[:2, :]
        assert lg_b.shape == (self.num_constraints, m)
        return PolytopeRates(lf_A, lg_A, lf_b, lg_b)

    def contains(self, x: np.ndarray, z: np.ndarray) -> tuple[bool, float]:
        A, b = self.at_state(x)
        margin = float(np.max(A @ z - b))
        return margin <= 0.0, margin

    def interior_point(self, x: np.ndarray) -> np.ndarray:
        p, R = pose_from_state(x)
        return p + R @ self.vertices().mean(axis=0)


@dataclass
class LicqReport:
    ok: bool
    offending_vertices: list = field(default_factory=list)


def verify_licq_vertices(body: PolytopeBody, tol: float = 1e-8) -> LicqReport:
    """Check linear independence of active face rows at every vertex."""
    verts = body.vertices()
    bad = []
    for v in verts:
        active = np.where(body.A0 @ v - body.b0 > -tol)[0]
        Aact = body.A0[active]
        if np.linalg.matrix_rank(Aact, tol=1e-9) < len(active):
            bad.append(v)
    return LicqReport(ok=not bad, offending_vertices=bad)


@dataclass
class BodyAtState:
    """World-frame evaluation cache for one body at one state."""

    body: object
    x: np.ndarray
    A: np.ndarray | None = None  # polytopes only
    b: np.ndarray | None = None
    p: np.ndarray | None = None  # strict bodies: cached pose
    R: np.ndarray | None = None

    @classmethod
    def of(cls, body, x) -> "BodyAtState":
        x = np.asarray(x, dtype=float)
        if body.kind == "polytope":
            A, b = body.at_state(x)
            return cls(body, x, A, b)
        p, R = pose_from_state(x)
        return cls(body, x, p=p, R=R)

    def evaluate(self, z: np.ndarray) -> ConstraintEval:
        if self.body.kind != "strict":
            raise TypeError("evaluate() is for strict bodies")
        return self.body.evaluate(self.x, z)

    def evaluate_z(self, z: np.ndarray):
        """(values, grad_z, hess_z) using the cached pose."""
        return self.body.evaluate_z(self.p, self.R, z)
