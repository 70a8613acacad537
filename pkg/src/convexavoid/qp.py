"""Small dense convex QP / LP interface with dual extraction.

The numerical engine is cvxopt's interior-point solvers; this module owns
the problem description, the KKT residual checks, and the status mapping
so callers never touch cvxopt directly.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from cvxopt import matrix, solvers
from scipy.optimize import linprog

_SOLVER_OPTIONS = {
    "show_progress": False,
    "abstol": 1e-10,
    "reltol": 1e-10,
    "feastol": 1e-9,
    "maxiters": 200,
}

# fallback for badly scaled programs where the tight targets push the
# interior-point scaling past numerical limits
_RELAXED_OPTIONS = {
    "show_progress": False,
    "abstol": 1e-8,
    "reltol": 1e-8,
    "feastol": 1e-8,
    "maxiters": 200,
}

DEFAULT_TOL = 1e-8


@dataclass
class QuadProgram:
    """min 0.5 v'Hv + f'v  s.t.  A_eq v = b_eq, A_in v <= b_in, lb <= v <= ub."""

    H: np.ndarray
    f: np.ndarray
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    A_in: np.ndarray | None = None
    b_in: np.ndarray | None = None
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None
    warm_start: dict | None = None  # primal/dual/active-set hint

    def dim(self) -> int:
        return len(self.f)


@dataclass
class SolveReport:
    x: np.ndarray
    status: str                     # optimal | infeasible | max-iter
    objective: float
    dual_eq: np.ndarray             # multipliers of A_eq rows
    dual_in: np.ndarray             # multipliers of A_in rows (>= 0)
    dual_lb: np.ndarray
    dual_ub: np.ndarray
    residuals: dict = field(default_factory=dict)
    iterations: int = 0
    wall_time: float = 0.0


def _stack_inequalities(p: QuadProgram):
    """Collect A_in, bounds into a single (G, h) block, with row bookkeeping."""
    n = p.dim()
    blocks_G, blocks_h = [], []
    n_in = 0 if p.A_in is None else len(p.b_in)
    if n_in:
        blocks_G.append(np.asarray(p.A_in, dtype=float))
        blocks_h.append(np.asarray(p.b_in, dtype=float))
    lb_rows = []
    if p.lb is not None:
        lb_rows = [i for i in range(n) if np.isfinite(p.lb[i])]
        if lb_rows:
            G = np.zeros((len(lb_rows), n))
            for r, i in enumerate(lb_rows):
                G[r, i] = -1.0
            blocks_G.append(G)
            blocks_h.append(-np.asarray(p.lb, dtype=float)[lb_rows])
    ub_rows = []
    if p.ub is not None:
        ub_rows = [i for i in range(n) if np.isfinite(p.ub[i])]
        if ub_rows:
            G = np.zeros((len(ub_rows), n))
            for r, i in enumerate(ub_rows):
                G[r, i] = 1.0
            blocks_G.append(G)
            blocks_h.append(np.asarray(p.ub, dtype=float)[ub_rows])
    if blocks_G:
        return np.vstack(blocks_G), np.concatenate(blocks_h), n_in, lb_rows, ub_rows
    return None, None, 0, [], []


def _split_ineq_duals(z, n, n_in, lb_rows, ub_rows):
    dual_in = z[:n_in] if n_in else np.zeros(0)
    dual_lb = np.zeros(n)
    dual_ub = np.zeros(n)
    off = n_in
    for r, i in enumerate(lb_rows):
        dual_lb[i] = z[off + r]
    off += len(lb_rows)
    for r, i in enumerate(ub_rows):
        dual_ub[i] = z[off + r]
    return dual_in, dual_lb, dual_ub


def _kkt_residuals(H, f, x, p: QuadProgram, G, hvec, z, y):
    """Relative KKT residuals of a candidate primal/dual pair."""
    scale = 1.0 + np.max(np.abs(f)) if len(f) else 1.0
    grad = H @ x + f
    if p.A_eq is not None and len(p.b_eq):
        grad = grad + np.asarray(p.A_eq).T @ y
        prim_eq = np.max(np.abs(np.asarray(p.A_eq) @ x - np.asarray(p.b_eq)))
    else:
        prim_eq = 0.0
    if G is not None:
        grad = grad + G.T @ z
        slack = G @ x - hvec
        prim_in = max(0.0, float(np.max(slack)))
        # normalize per row: large-offset rows (rate boxes) carry tiny
        # multipliers whose absolute products are meaningless
        comp = float(np.max(np.abs(z * slack) / (1.0 + np.abs(hvec))))
        dual_sign = max(0.0, float(np.max(-z))) if len(z) else 0.0
    else:
        prim_in, comp, dual_sign = 0.0, 0.0, 0.0
    xs = 1.0 + float(np.max(np.abs(x))) if len(x) else 1.0
    return {
        "stationarity": float(np.max(np.abs(grad))) / scale,
        "primal_eq": prim_eq / xs,
        "primal_in": prim_in / xs,
        "complementarity": comp / scale,
        "dual_sign": dual_sign,
    }


def _residuals_acceptable(res: dict, tol: float) -> bool:
    """Feasibility and stationarity are held tight; complementarity is a
    gap measure and degenerate programs stall before closing it fully."""
    strict_keys = ("stationarity", "primal_eq", "primal_in", "dual_sign")
    if any(res[k] > 100 * tol for k in strict_keys):
        return False
    return res["complementarity"] <= max(1e-3, 100 * tol)


def _cvxopt_attempts(solver, args, n: int):
    """Run cvxopt with two tolerance settings; None if both fail.

    Small programs get the tight targets first; large ones start relaxed
    because the tight targets tend to push the interior-point scaling
    past numerical limits there, wasting a full iteration path.
    """
    if n <= 40:
        order = (_SOLVER_OPTIONS, _RELAXED_OPTIONS)
    else:
        order = (_RELAXED_OPTIONS, _SOLVER_OPTIONS)
    old = dict(solvers.options)
    last = None
    try:
        for opts in order:
            solvers.options.clear()
            solvers.options.update(opts)
            try:
                sol = solver(**args)
            except (ValueError, ZeroDivisionError, ArithmeticError):
                continue
            last = sol
            if sol["status"] == "optimal":
                return sol
        return last
    finally:
        solvers.options.clear()
        solvers.options.update(old)


def solve_qp(p: QuadProgram, tol: float = DEFAULT_TOL) -> SolveReport:
    """Solve a convex QP; duals and KKT residuals are always reported."""
    t0 = time.perf_counter()
    n = p.dim()
    H = np.asarray(p.H, dtype=float)
    if np.max(np.abs(H - H.T)) > 1e-12:
        raise ValueError("H must be symmetric")
    H = 0.5 * (H + H.T)
    f = np.asarray(p.f, dtype=float)

    G, hvec, n_in, lb_rows, ub_rows = _stack_inequalities(p)
    has_eq = p.A_eq is not None and len(p.b_eq) > 0

    # singular H (variables absent from the cost) destabilizes the
    # interior-point scaling; a tiny ridge keeps it PD without moving
    # the optimum beyond the reported residuals
    H_solve = H
    if n:
        try:
            np.linalg.cholesky(H)
        except np.linalg.LinAlgError:
            H_solve = H + 1e-9 * np.eye(n)

    if G is None and not has_eq:
        # unconstrained: plain stationary point
        try:
            x = np.linalg.solve(H, -f)
            status = "optimal"
        except np.linalg.LinAlgError:
            x, status = np.zeros(n), "max-iter"
        rep = SolveReport(
            x=x, status=status, objective=float(0.5 * x @ H @ x + f @ x),
            dual_eq=np.zeros(0), dual_in=np.zeros(0),
            dual_lb=np.zeros(n), dual_ub=np.zeros(n),
            residuals=_kkt_residuals(H, f, x, p, None, None, np.zeros(0), np.zeros(0)),
            wall_time=time.perf_counter() - t0)
        return rep

    args = dict(P=matrix(H_solve), q=matrix(f))
    if G is not None:
        args["G"], args["h"] = matrix(G), matrix(hvec)
    else:
        # cvxopt requires G for coneqp when A alone is rank deficient in
        # [P; A; G]; a vacuous row keeps the interface uniform.
        args["G"], args["h"] = matrix(np.zeros((1, n))), matrix(np.ones(1))
    if has_eq:
        args["A"] = matrix(np.asarray(p.A_eq, dtype=float))
        args["b"] = matrix(np.asarray(p.b_eq, dtype=float))

    sol = _cvxopt_attempts(solvers.qp, args, n)
    if sol is None or sol["x"] is None:
        return SolveReport(
            x=np.zeros(n), status="infeasible", objective=np.inf,
            dual_eq=np.zeros(0 if not has_eq else len(p.b_eq)),
            dual_in=np.zeros(n_in), dual_lb=np.zeros(n), dual_ub=np.zeros(n),
            wall_time=time.perf_counter() - t0)

    x = np.array(sol["x"]).ravel()
    z = np.array(sol["z"]).ravel() if sol["z"] is not None else np.zeros(0)
    if G is None:
        z = np.zeros(0)
    y = np.array(sol["y"]).ravel() if has_eq else np.zeros(0)
    dual_in, dual_lb, dual_ub = _split_ineq_duals(z, n, n_in, lb_rows, ub_rows)
    res = _kkt_residuals(H_solve, f, x, p, G, hvec, z, y)

    # accept by KKT residuals: cvxopt reports "unknown" on slow progress
    # even when the iterate is accurate enough
    if _residuals_acceptable(res, tol):
        status = "optimal"
    elif "infeasible" in sol["status"]:
        status = "infeasible"
    else:
        status = "max-iter"
    return SolveReport(
        x=x, status=status, objective=float(0.5 * x @ H @ x + f @ x),
        dual_eq=y, dual_in=dual_in, dual_lb=dual_lb, dual_ub=dual_ub,
        residuals=res, iterations=sol.get("iterations", 0),
        wall_time=time.perf_counter() - t0)


def solve_lp(c, A_eq=None, b_eq=None, A_in=None, b_in=None,
             bounds=None, maximize: bool = False,
             tol: float = DEFAULT_TOL) -> SolveReport:
    """Solve a dense LP via HiGHS; `bounds` is an optional (lb, ub) pair.

    Simplex-based solvers handle the large box bounds used by the
    multiplier-rate programs far better than interior-point codes, which
    stall on the resulting ill-scaled barriers.
    """
    c = np.asarray(c, dtype=float)
    n = len(c)
    n_in = 0 if b_in is None else len(b_in)
    n_eq = 0 if b_eq is None else len(b_eq)
    lb, ub = (bounds if bounds is not None else (None, None))
    if lb is None:
        box = [(None, None)] * n
    else:
        box = [(float(lo) if np.isfinite(lo) else None,
                float(hi) if np.isfinite(hi) else None)
               for lo, hi in zip(lb, ub)]

    t0 = time.perf_counter()
    res = linprog(-c if maximize else c, A_ub=A_in, b_ub=b_in,
                  A_eq=A_eq, b_eq=b_eq, bounds=box, method="highs")
    wall = time.perf_counter() - t0

    if res.status == 2:
        return SolveReport(
            x=np.zeros(n), status="infeasible", objective=np.inf,
            dual_eq=np.zeros(n_eq), dual_in=np.zeros(n_in),
            dual_lb=np.zeros(n), dual_ub=np.zeros(n), wall_time=wall)
    if res.status == 3:
        return SolveReport(
            x=np.zeros(n), status="unbounded", objective=-np.inf,
            dual_eq=np.zeros(n_eq), dual_in=np.zeros(n_in),
            dual_lb=np.zeros(n), dual_ub=np.zeros(n), wall_time=wall)

    x = np.asarray(res.x, dtype=float)
    dual_eq = (-np.asarray(res.eqlin.marginals, dtype=float)
               if n_eq else np.zeros(0))
    dual_in = (-np.asarray(res.ineqlin.marginals, dtype=float)
               if n_in else np.zeros(0))
    dual_lb = np.asarray(res.lower.marginals, dtype=float)
    dual_ub = -np.asarray(res.upper.marginals, dtype=float)

    residuals = {"primal_eq": 0.0, "primal_in": 0.0}
    if n_eq:
        residuals["primal_eq"] = float(
            np.max(np.abs(np.asarray(A_eq) @ x - np.asarray(b_eq))))
    if n_in:
        residuals["primal_in"] = float(
            max(0.0, np.max(np.asarray(A_in) @ x - np.asarray(b_in))))
    status = "optimal" if res.status == 0 else "max-iter"
    obj = float(c @ x)
    return SolveReport(
        x=x, status=status, objective=obj,
        dual_eq=dual_eq, dual_in=dual_in, dual_lb=dual_lb, dual_ub=dual_ub,
        residuals=residuals, iterations=int(getattr(res, "nit", 0)),
        wall_time=wall)
