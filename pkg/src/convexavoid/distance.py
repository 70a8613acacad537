"""Minimum squared distance between two bodies, with KKT data.

Strictly convex pairs go through a damped primal-dual Newton solver on the
perturbed KKT system; polytope pairs go through dense QPs (primal in the
points, dual in the multipliers).  All callers receive the same
``KKTSolution`` record: optimal points, duals, squared distance h, the
separating vector, and residual/complementarity diagnostics.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import BodyAtState
from .qp import QuadProgram, solve_qp

INTERSECT_THRESHOLD = 1e-10
ACTIVE_TOL = 1e-6
DEFAULT_EPS_ALMOST = 1e-3


@dataclass
class IndexSets:
    """Active / strictly-active / weakly-active / almost-active sets.

    Indices are (tag, row) pairs over the two-body constraint list, with
    tag 0 for body i and 1 for body j.
    """

    J0: set = field(default_factory=set)
    J1: set = field(default_factory=set)
    J2: set = field(default_factory=set)
    J2eps: set = field(default_factory=set)
    eps: float = DEFAULT_EPS_ALMOST

    def strict_complementarity(self) -> bool:
        return not self.J2


@dataclass
class KKTSolution:
    z_i: np.ndarray
    z_j: np.ndarray
    lam_i: np.ndarray
    lam_j: np.ndarray
    h: float
    s: np.ndarray                    # separating vector z_i - z_j
    kkt_residual: float
    solver_kind: str                 # strict | polytope-primal | polytope-dual
    intersecting: bool = False
    strict_complementarity: bool | None = None
    index_sets: IndexSets | None = None
    converged: bool = True
    j0_nonunique: bool = False       # polytope J0 taken at one vertex solution

    @property
    def lam(self) -> np.ndarray:
        return np.concatenate([self.lam_i, self.lam_j])


class BodiesIntersect(RuntimeError):
    """Strict solver found overlapping bodies; h and s* degenerate."""


# ---------------------------------------------------------------------------
# strictly convex pair: primal-dual Newton on the perturbed KKT system
# ---------------------------------------------------------------------------


def _pair_eval_z(bi: BodyAtState, bj: BodyAtState, z, l, r_i):
    vi, gi, hi = bi.evaluate_z(z[:l])
    vj, gj, hj = bj.evaluate_z(z[l:])
    vals = np.concatenate([vi, vj])
    grad = np.zeros((len(vals), 2 * l))
    grad[:r_i, :l] = gi
    grad[r_i:, l:] = gj
    return vals, grad, hi, hj


def min_dist_strict(bi: BodyAtState, bj: BodyAtState, warm=None,
                    tol: float = 1e-10, max_iter: int = 120) -> KKTSolution:
    """Min squared distance between two strictly convex bodies.

    Primal-dual Newton iteration on the barrier-perturbed KKT system; the
    barrier parameter tracks a fraction of the current complementarity
    gap, and step lengths keep lambda > 0 and A(z) < 0.
    """
    l = bi.body.ambient_dim
    r_i, r_j = bi.body.num_constraints, bj.body.num_constraints
    r = r_i + r_j

    z = None
    if warm is not None and warm.converged:
        zw = np.concatenate([warm.z_i, warm.z_j])
        vals, grad, hi, hj = _pair_eval_z(bi, bj, zw, l, r_i)
        if np.all(vals < -1e-12):
            z = zw
            lam = np.maximum(np.concatenate([warm.lam_i, warm.lam_j]), 1e-10)
    if z is None:
        z = np.concatenate([bi.body.interior_point(bi.x),
                            bj.body.interior_point(bj.x)])
        vals, grad, hi, hj = _pair_eval_z(bi, bj, z, l, r_i)
        if np.any(vals >= 0):
            raise ValueError("interior initialization infeasible")
        lam = 1.0 / (-vals)

    sigma = 0.2
    I2 = 2.0 * np.eye(l)
    converged = False
    for _ in range(max_iter):
        s = z[:l] - z[l:]
        rd = np.concatenate([2 * s, -2 * s]) + grad.T @ lam
        comp = lam * (-vals)
        if np.max(np.abs(rd)) <= tol and np.max(comp) <= tol:
            converged = True
            break
        mu = sigma * float(np.mean(comp))
        rc = -lam * vals - mu

        H = np.zeros((2 * l, 2 * l))
        H[:l, :l] = I2 + np.tensordot(lam[:r_i], hi, axes=1)
        H[l:, l:] = I2 + np.tensordot(lam[r_i:], hj, axes=1)
        H[:l, l:] = -I2
        H[l:, :l] = -I2
        J = np.zeros((2 * l + r, 2 * l + r))
        J[:2 * l, :2 * l] = H
        J[:2 * l, 2 * l:] = grad.T
        J[2 * l:, :2 * l] = -lam[:, None] * grad
        J[2 * l:, 2 * l:] = -np.diag(vals)
        res = np.concatenate([rd, rc])
        try:
            step = np.linalg.solve(J, -res)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(J + 1e-12 * np.eye(len(J)), -res,
                                   rcond=None)[0]
        dz, dlam = step[:2 * l], step[2 * l:]
        # fraction-to-boundary on lambda, backtracking on A(z) < 0
        alpha = 1.0
        neg = dlam < 0
        if np.any(neg):
            alpha = min(alpha, 0.995 * float(np.min(-lam[neg] / dlam[neg])))
        accepted = False
        for _ in range(60):
            z_new = z + alpha * dz
            v_new, g_new, hi_new, hj_new = _pair_eval_z(bi, bj, z_new, l, r_i)
            if np.all(v_new < 0):
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            break
        z = z_new
        lam = lam + alpha * dlam  # fraction-to-boundary keeps lam > 0
        vals, grad, hi, hj = v_new, g_new, hi_new, hj_new

    s = z[:l] - z[l:]
    rd = np.concatenate([2 * s, -2 * s]) + grad.T @ lam
    kkt_res = float(max(np.max(np.abs(rd)), np.max(np.abs(lam * vals)),
                        max(0.0, float(np.max(vals)))))
    if kkt_res > tol:
        converged = False
    lam = np.maximum(lam, 0.0)
    s = z[:l] - z[l:]
    h = float(s @ s)
    sol = KKTSolution(
        z_i=z[:l].copy(), z_j=z[l:].copy(),
        lam_i=lam[:r_i].copy(), lam_j=lam[r_i:].copy(),
        h=h, s=s, kkt_residual=kkt_res, solver_kind="strict",
        intersecting=h < INTERSECT_THRESHOLD, converged=converged)
    sol.index_sets = classify_index_sets(sol, vals)
    sol.strict_complementarity = sol.index_sets.strict_complementarity()
    return sol


# ---------------------------------------------------------------------------
# polytope pair: primal QP and dual QP
# ---------------------------------------------------------------------------


def min_dist_polytope_primal(bi: BodyAtState, bj: BodyAtState,
                             warm=None) -> KKTSolution:
    """2l-variable QP over the two closest points."""
    Ai, bi_vec = bi.A, bi.b
    Aj, bj_vec = bj.A, bj.b
    r_i, l = Ai.shape
    r_j = Aj.shape[0]
    I = np.eye(l)
    H = np.block([[2 * I, -2 * I], [-2 * I, 2 * I]])
    G = np.zeros((r_i + r_j, 2 * l))
    G[:r_i, :l] = Ai
    G[r_i:, l:] = Aj
    rep = solve_qp(QuadProgram(H=H, f=np.zeros(2 * l), A_in=G,
                               b_in=np.concatenate([bi_vec, bj_vec])))
    if rep.status == "infeasible":
        raise ValueError("polytope distance QP infeasible: corrupt body data")
    z = rep.x
    s = z[:l] - z[l:]
    h = max(float(s @ s), 0.0)
    lam = rep.dual_in
    vals = G @ z - np.concatenate([bi_vec, bj_vec])
    sol = KKTSolution(
        z_i=z[:l], z_j=z[l:], lam_i=lam[:r_i], lam_j=lam[r_i:],
        h=h, s=s, kkt_residual=max(rep.residuals.values()),
        solver_kind="polytope-primal",
        intersecting=h < INTERSECT_THRESHOLD,
        converged=rep.status == "optimal", j0_nonunique=True)
    sol.index_sets = classify_index_sets(sol, vals)
    sol.strict_complementarity = sol.index_sets.strict_complementarity()
    return sol


def min_dist_polytope_dual(bi: BodyAtState, bj: BodyAtState, warm=None):
    """Dual QP over multipliers only; returns (h, lam_i, lam_j, report).

    Maximizes -0.25||lam_i A_i||^2 - lam_i b_i - lam_j b_j subject to
    lam_i A_i + lam_j A_j = 0 and lam >= 0; the optimum equals the primal
    squared distance and the maximizer is unique.
    """
    Ai, bi_vec = bi.A, bi.b
    Aj, bj_vec = bj.A, bj.b
    r_i, l = Ai.shape
    r_j = Aj.shape[0]
    n = r_i + r_j
    H = np.zeros((n, n))
    H[:r_i, :r_i] = 0.5 * (Ai @ Ai.T)
    f = np.concatenate([bi_vec, bj_vec])
    A_eq = np.zeros((l, n))
    A_eq[:, :r_i] = Ai.T
    A_eq[:, r_i:] = Aj.T
    rep = solve_qp(QuadProgram(H=H, f=f, A_eq=A_eq, b_eq=np.zeros(l),
                               lb=np.zeros(n)))
    if rep.status == "infeasible":
        raise ValueError("polytope dual QP infeasible: corrupt body data")
    lam = np.maximum(rep.x, 0.0)
    h = max(float(-rep.objective), 0.0)
    lam, h = _polish_dual(Ai, bi_vec, Aj, bj_vec, lam, h)
    return h, lam[:r_i], lam[r_i:], rep


def _dual_objective(Ai, bi_vec, bj_vec, lam_i, lam_j) -> float:
    w = Ai.T @ lam_i
    return float(-0.25 * w @ w - lam_i @ bi_vec - lam_j @ bj_vec)


def _polish_dual(Ai, bi_vec, Aj, bj_vec, lam, h,
                 support_tol: float = 1e-6):
    """Refine the dual maximizer on its support to machine precision.

    Interior-point accuracy (~1e-7) on the multipliers is enough for h
    but not for the rate LP built on them, whose M-box amplifies any
    dual suboptimality.  With the support fixed, the maximizer solves a
    linear KKT system in the supported multipliers and the equality
    multiplier, which we solve directly and accept only if it stays
    nonnegative and does not move the objective.
    """
    r_i = Ai.shape[0]
    l = Ai.shape[1]
    act_i = np.flatnonzero(lam[:r_i] > support_tol)
    act_j = np.flatnonzero(lam[r_i:] > support_tol)
    n_s = len(act_i) + len(act_j)
    if n_s == 0:
        return lam, h
    Ai_s = Ai[act_i]
    Aj_s = Aj[act_j]
    K = np.zeros((n_s + l, n_s + l))
    rhs = np.zeros(n_s + l)
    K[:len(act_i), :len(act_i)] = 0.5 * (Ai_s @ Ai_s.T)
    K[:len(act_i), n_s:] = Ai_s
    K[len(act_i):n_s, n_s:] = Aj_s
    K[n_s:, :len(act_i)] = Ai_s.T
    K[n_s:, len(act_i):n_s] = Aj_s.T
    rhs[:len(act_i)] = -bi_vec[act_i]
    rhs[len(act_i):n_s] = -bj_vec[act_j]
    sol, *_ = np.linalg.lstsq(K, rhs, rcond=None)
    residual = float(np.max(np.abs(K @ sol - rhs), initial=0.0))
    lam_new = np.zeros_like(lam)
    lam_new[act_i] = sol[:len(act_i)]
    lam_new[r_i + act_j] = sol[len(act_i):n_s]
    if residual > 1e-8 or np.min(lam_new[np.r_[act_i, r_i + act_j]]) < -1e-9:
        return lam, h
    lam_new = np.maximum(lam_new, 0.0)
    h_new = max(_dual_objective(Ai, bi_vec, bj_vec,
                                lam_new[:r_i], lam_new[r_i:]), 0.0)
    if abs(h_new - h) > 1e-6 * (1.0 + abs(h)):
        return lam, h
    return lam_new, h_new


def _ordered_world_vertices(body_at: BodyAtState) -> np.ndarray:
    """World-frame polygon vertices in counterclockwise order."""
    from .geometry import pose_from_state

    p, R = pose_from_state(body_at.x)
    verts = body_at.body.vertices() @ R.T + p
    center = verts.mean(axis=0)
    order = np.argsort(np.arctan2(verts[:, 1] - center[1],
                                  verts[:, 0] - center[0]))
    return verts[order]


def _project_point_to_polygon(q: np.ndarray, verts: np.ndarray) -> np.ndarray:
    """Closest boundary point of an ordered convex polygon to q."""
    best, best_d = None, np.inf
    n = len(verts)
    for k in range(n):
        a, b = verts[k], verts[(k + 1) % n]
        d = b - a
        t = float(np.clip((q - a) @ d / (d @ d), 0.0, 1.0))
        pt = a + t * d
        dd = float((q - pt) @ (q - pt))
        if dd < best_d:
            best, best_d = pt, dd
    return best


def polytope_contact_sites(bi: BodyAtState, bj: BodyAtState,
                           h_min: float, window: float = 0.5,
                           active_tol: float = 1e-7,
                           stat_tol: float = 0.2) -> list:
    """Near-minimal contact sites of a polytope pair, with duals.

    The minimum-distance multiplier is unique only away from (almost)
    parallel face alignments; near one, the contact point and the dual
    jump between the ends of the overlap interval and hdot jumps with
    them.  This enumerates every vertex-to-boundary critical site whose
    squared distance is within `window` of the minimum and recovers the
    multipliers of each, so a sampled safety filter can constrain every
    nearby smooth branch of h.  Returns (h_site, lam_i, lam_j) triples.
    """
    verts_i = _ordered_world_vertices(bi)
    verts_j = _ordered_world_vertices(bj)
    r_i, r_j = len(bi.b), len(bj.b)

    def support_lam(A, b, z, target):
        act = [k for k in range(len(b))
               if abs(float(A[k] @ z - b[k])) <= active_tol * (1 + abs(b[k]))]
        if not act:
            return None
        Asub = A[act]
        x, *_ = np.linalg.lstsq(Asub.T, target, rcond=None)
        nt = float(np.linalg.norm(target))
        # slightly negative components mark a branch about to take over;
        # clip them so the imminent support is still constrained
        neg_tol = 0.1 * (1e-6 + float(np.max(np.maximum(x, 0.0),
                                             initial=0.0)))
        if (np.linalg.norm(Asub.T @ x - target) > stat_tol * (1e-9 + nt)
                or np.any(x < -neg_tol)):
            return None
        lam = np.zeros(len(b))
        lam[act] = np.maximum(x, 0.0)
        return lam

    sites = []
    seen = []
    for q_set, p_set, qv in ((bi, bj, verts_i), (bj, bi, verts_j)):
        for q in qv:
            p = _project_point_to_polygon(q, verts_j if q_set is bi
                                          else verts_i)
            if q_set is bi:
                z_i, z_j = q, p
            else:
                z_i, z_j = p, q
            s = z_i - z_j
            hs = float(s @ s)
            if hs <= INTERSECT_THRESHOLD or hs > h_min + window:
                continue
            key = np.concatenate([z_i, z_j])
            if any(np.max(np.abs(key - k)) < 1e-6 for k in seen):
                continue
            lam_i = support_lam(bi.A, bi.b, z_i, -2.0 * s)
            lam_j = support_lam(bj.A, bj.b, z_j, 2.0 * s)
            if lam_i is None or lam_j is None:
                continue
            seen.append(key)
            sites.append((hs, lam_i, lam_j))
    sites.sort(key=lambda t: t[0])
    return sites


def recover_unique_dual(s: np.ndarray, active_i, active_j,
                        Ai: np.ndarray, Aj: np.ndarray):
    """Closed-form duals from the separating vector and active rows.

    Nonzero components are -2 s' pinv(A_i,active) on body i rows and
    +2 s' pinv(A_j,active) on body j rows; requires full row rank of the
    active submatrices.
    """
    lam_i = np.zeros(Ai.shape[0])
    lam_j = np.zeros(Aj.shape[0])
    if float(s @ s) == 0.0:
        return lam_i, lam_j
    active_i = list(active_i)
    active_j = list(active_j)
    for rows, A in ((active_i, Ai), (active_j, Aj)):
        if rows:
            sub = A[rows]
            if np.linalg.matrix_rank(sub, tol=1e-9) < len(rows):
                raise ValueError("rank-deficient active rows (LICQ violation)")
    if active_i:
        lam_i[active_i] = -2.0 * s @ np.linalg.pinv(Ai[active_i])
    if active_j:
        lam_j[active_j] = 2.0 * s @ np.linalg.pinv(Aj[active_j])
    return lam_i, lam_j


# ---------------------------------------------------------------------------
# index sets
# ---------------------------------------------------------------------------


def classify_index_sets(sol: KKTSolution, constraint_values: np.ndarray,
                        eps: float = DEFAULT_EPS_ALMOST,
                        active_tol: float = ACTIVE_TOL) -> IndexSets:
    """J0/J1/J2 and the eps-almost-active set over the combined list."""
    r_i = len(sol.lam_i)
    lam = sol.lam
    idx = IndexSets(eps=eps)
    for k, (a_val, lam_k) in enumerate(zip(constraint_values, lam)):
        key = (0, k) if k < r_i else (1, k - r_i)
        if a_val > -active_tol:
            idx.J0.add(key)
        if lam_k > active_tol:
            idx.J1.add(key)
        if lam_k < eps and a_val > -eps:
            idx.J2eps.add(key)
    idx.J2 = idx.J0 - idx.J1
    return idx


def constraint_values_at(sol: KKTSolution, bi: BodyAtState, bj: BodyAtState):
    """Constraint values A(x, z*) for either body kind."""
    if bi.A is not None:
        vi = bi.A @ sol.z_i - bi.b
        vj = bj.A @ sol.z_j - bj.b
    else:
        vi = bi.evaluate(sol.z_i).values
        vj = bj.evaluate(sol.z_j).values
    return np.concatenate([vi, vj])
