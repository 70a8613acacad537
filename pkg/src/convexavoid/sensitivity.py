"""Derivatives of the minimum distance through its KKT solution.

Three paths, matching how regular the solution is:

* under strict complementarity the KKT map is differentiable and a single
  linear solve gives the full gradient of h with respect to both robot
  states;
* at border cases (weakly active constraints) only directional
  derivatives exist; they come from a small auxiliary QP whose optimality
  conditions are exactly the rate form of the KKT system;
* for polytope pairs, a lower bound on hdot comes from an LP over
  multiplier rates built on the dual program.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .distance import IndexSets, KKTSolution
from .geometry import BodyAtState
from .qp import QuadProgram, solve_lp, solve_qp

log = logging.getLogger(__name__)

DEFAULT_M = 1e4
COND_LIMIT = 1e10
HESS_REG = 1e-9
STRICT_COMP_TOL = 1e-6


@dataclass
class SensitivitySystem:
    """Linear system Q [dz; dlam] = V for KKT-solution sensitivities.

    Row blocks: stationarity in z (2l rows) then weighted constraint rates
    (r rows).  Columns of V span both robots' states (2n).
    """

    Q: np.ndarray
    V: np.ndarray
    hess_L: np.ndarray          # (2l, 2l) Lagrangian Hessian in z
    grad_zA: np.ndarray         # (r, 2l)
    grad_xA: np.ndarray         # (r, 2n)
    mixed_xzL: np.ndarray       # (2l, 2n) d/dx of grad_z L
    lam: np.ndarray
    values: np.ndarray
    cond: float = np.inf

    @property
    def l2(self) -> int:
        return self.hess_L.shape[0]


@dataclass
class DirectionalDerivative:
    z_dot: np.ndarray           # (2l,)
    lam_dot: np.ndarray         # (r,)
    dh: float
    residual: float
    regularized: bool = False
    lam_dot_value: float | None = None   # polytope dual-rate objective


def _pair_blocks(bi: BodyAtState, bj: BodyAtState, sol: KKTSolution):
    ev_i = bi.evaluate(sol.z_i)
    ev_j = bj.evaluate(sol.z_j)
    l = bi.body.ambient_dim
    n = bi.body.state_dim
    r_i = len(ev_i.values)
    r_j = len(ev_j.values)
    r = r_i + r_j

    values = np.concatenate([ev_i.values, ev_j.values])
    grad_zA = np.zeros((r, 2 * l))
    grad_zA[:r_i, :l] = ev_i.grad_z
    grad_zA[r_i:, l:] = ev_j.grad_z
    grad_xA = np.zeros((r, 2 * n))
    grad_xA[:r_i, :n] = ev_i.grad_x
    grad_xA[r_i:, n:] = ev_j.grad_x

    I = np.eye(l)
    hess_L = np.block([[2 * I, -2 * I], [-2 * I, 2 * I]])
    hess_L[:l, :l] += np.tensordot(sol.lam_i, ev_i.hess_z, axes=1)
    hess_L[l:, l:] += np.tensordot(sol.lam_j, ev_j.hess_z, axes=1)

    # d/dx of grad_z L; the distance term depends on x only through z
    mixed = np.zeros((2 * l, 2 * n))
    mixed[:l, :n] = np.tensordot(sol.lam_i, ev_i.mixed_xz, axes=1).T
    mixed[l:, n:] = np.tensordot(sol.lam_j, ev_j.mixed_xz, axes=1).T
    return values, grad_zA, grad_xA, hess_L, mixed


def assemble_qv(bi: BodyAtState, bj: BodyAtState,
                sol: KKTSolution) -> SensitivitySystem:
    """Assemble the sensitivity system at a strict-pair KKT solution."""
    values, grad_zA, grad_xA, hess_L, mixed = _pair_blocks(bi, bj, sol)
    lam = sol.lam
    l2 = hess_L.shape[0]
    r = len(lam)
    Q = np.zeros((l2 + r, l2 + r))
    Q[:l2, :l2] = hess_L
    Q[:l2, l2:] = grad_zA.T
    Q[l2:, :l2] = lam[:, None] * grad_zA
    Q[l2:, l2:] = np.diag(values)
    V = np.vstack([-mixed, -(lam[:, None] * grad_xA)])
    cond = float(np.linalg.cond(Q))
    return SensitivitySystem(Q=Q, V=V, hess_L=hess_L, grad_zA=grad_zA,
                             grad_xA=grad_xA, mixed_xzL=mixed, lam=lam,
                             values=values, cond=cond)


def grad_h_strict(sol: KKTSolution, sys: SensitivitySystem) -> np.ndarray:
    """Full gradient of h over both states; needs strict complementarity."""
    if not np.isfinite(sys.cond) or sys.cond > COND_LIMIT:
        raise np.linalg.LinAlgError(
            f"sensitivity system nearly singular (cond={sys.cond:.2e})")
    S = np.linalg.solve(sys.Q, sys.V)
    l = sys.l2 // 2
    dz_i = S[:l]
    dz_j = S[l:2 * l]
    return 2.0 * sol.s @ (dz_i - dz_j)


def directional_derivative(bi: BodyAtState, bj: BodyAtState,
                           sol: KKTSolution, idx: IndexSets,
                           x_dot: np.ndarray) -> DirectionalDerivative:
    """Unique (zdot, lamdot) rates of the KKT solution along x_dot.

    Solved as an auxiliary QP in zdot whose stationarity, feasibility and
    complementarity conditions coincide with the rate form of the KKT
    system; QP multipliers on the weakly/strictly active rows are lamdot.
    """
    values, grad_zA, grad_xA, hess_L, mixed = _pair_blocks(bi, bj, sol)
    x_dot = np.asarray(x_dot, dtype=float)
    r_i = len(sol.lam_i)
    r = len(sol.lam)
    l2 = hess_L.shape[0]

    def flat(key):
        return key[1] if key[0] == 0 else r_i + key[1]

    j1 = sorted(flat(k) for k in idx.J1)
    j2 = sorted(flat(k) for k in idx.J2)

    H = hess_L
    regularized = False
    if np.linalg.eigvalsh(H)[0] < HESS_REG:
        H = H + HESS_REG * np.eye(l2)
        regularized = True
        log.info("regularized degenerate Lagrangian Hessian")

    f = mixed @ x_dot
    rate_xA = grad_xA @ x_dot
    A_eq = grad_zA[j1] if j1 else None
    b_eq = -rate_xA[j1] if j1 else None
    A_in = grad_zA[j2] if j2 else None
    b_in = -rate_xA[j2] if j2 else None
    rep = solve_qp(QuadProgram(H=H, f=f, A_eq=A_eq, b_eq=b_eq,
                               A_in=A_in, b_in=b_in))
    if rep.status != "optimal":
        raise RuntimeError(f"directional derivative QP {rep.status}")

    z_dot = rep.x
    lam_dot = np.zeros(r)
    for pos, k in enumerate(j1):
        lam_dot[k] = rep.dual_eq[pos]
    for pos, k in enumerate(j2):
        lam_dot[k] = rep.dual_in[pos]

    residual = rate_residual(hess_L, grad_zA, rate_xA, mixed, x_dot,
                             z_dot, lam_dot, j1, j2)
    l = l2 // 2
    dh = float(2.0 * sol.s @ (z_dot[:l] - z_dot[l:]))
    return DirectionalDerivative(z_dot=z_dot, lam_dot=lam_dot, dh=dh,
                                 residual=residual, regularized=regularized)


def rate_residual(hess_L, grad_zA, rate_xA, mixed, x_dot, z_dot, lam_dot,
                  j1, j2) -> float:
    """Worst violation of the rate-form KKT conditions."""
    res = [np.max(np.abs(hess_L @ z_dot + mixed @ x_dot
                         + grad_zA.T @ lam_dot), initial=0.0)]
    cons_rate = grad_zA @ z_dot + rate_xA
    for k in j1:
        res.append(abs(cons_rate[k]))
    for k in j2:
        res.append(max(cons_rate[k], 0.0))
        res.append(max(-lam_dot[k], 0.0))
        res.append(abs(lam_dot[k] * cons_rate[k]))
    active = set(j1) | set(j2)
    for k in range(len(lam_dot)):
        if k not in active:
            res.append(abs(lam_dot[k]))
    return float(max(res))


# ---------------------------------------------------------------------------
# polytope path: dual-function rate and its LP lower bound
# ---------------------------------------------------------------------------


def lambda_dot_lagrangian(lam_i, lam_dot_i, A_i, Adot_i, b_i, bdot_i,
                          lam_j, lam_dot_j, b_j, bdot_j) -> float:
    """Rate of the dual objective along multiplier and geometry rates."""
    w = A_i.T @ lam_i              # separating direction scaled by 2
    return float(
        -0.5 * w @ (A_i.T @ lam_dot_i)
        - 0.5 * w @ (Adot_i.T @ lam_i)
        - lam_dot_i @ b_i - lam_i @ bdot_i
        - lam_dot_j @ b_j - lam_j @ bdot_j)


def polytope_hdot_lp(lam_i, lam_j, A_i, b_i, A_j, b_j,
                     Adot_i, bdot_i, Adot_j, bdot_j,
                     M: float = DEFAULT_M,
                     zero_tol: float = 1e-6) -> DirectionalDerivative:
    """Lower bound g on hdot for a polytope pair, via an LP in lamdot.

    Maximizes the dual-objective rate subject to the differentiated dual
    equality constraint, sign constraints on rates of inactive
    multipliers, and a box |lamdot| <= M.  zero_tol must dominate the
    dual solver's roundoff on inactive multipliers; a component wrongly
    treated as active gets a two-sided rate box and inflates the bound.
    """
    r_i, l = A_i.shape
    r_j = A_j.shape[0]
    n = r_i + r_j
    lam = np.concatenate([lam_i, lam_j])

    w = A_i.T @ lam_i
    c = np.concatenate([-0.5 * (A_i @ w) - b_i, -b_j])
    const = float(-0.5 * w @ (Adot_i.T @ lam_i)
                  - lam_i @ bdot_i - lam_j @ bdot_j)

    A_eq = np.hstack([A_i.T, A_j.T])
    b_eq = -(Adot_i.T @ lam_i + Adot_j.T @ lam_j)

    lb = np.full(n, -M)
    lb[lam <= zero_tol] = 0.0
    ub = np.full(n, M)
    rep = solve_lp(c, A_eq=A_eq, b_eq=b_eq, bounds=(lb, ub), maximize=True)
    if rep.status == "infeasible":
        raise RuntimeError("hdot lower-bound LP infeasible")
    lam_dot = rep.x
    g = float(rep.objective) + const
    return DirectionalDerivative(
        z_dot=np.zeros(2 * l), lam_dot=lam_dot, dh=g,
        residual=max(rep.residuals.values()), lam_dot_value=g)
