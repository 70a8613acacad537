"""Barrier-function safety filters over pairwise minimum distances.

Each control step solves one QP that minimally perturbs the nominal
inputs of all robots subject to, per enforced pair, a rate condition
keeping the squared separation h above the margin:

* strictly convex pairs couple the input to h through the rates of the
  closest points (auxiliary variables zdot, lamdot), or through the plain
  gradient of h when strict complementarity allows it;
* polytope pairs couple the input to h through the rate of the dual
  objective, which is affine in the multiplier rates and the input.
"""

from __future__ import annotations

import itertools
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .distance import IndexSets, KKTSolution
from .geometry import BodyAtState, PolytopeRates
from .qp import QuadProgram, solve_qp
from .sensitivity import (DEFAULT_M, _pair_blocks, assemble_qv,
                          directional_derivative, grad_h_strict,
                          polytope_hdot_lp)

log = logging.getLogger(__name__)

MAX_BRANCHES = 16


@dataclass
class NCBFParams:
    """Safety-filter tuning knobs."""

    alpha: float = 1.0
    eps: float = 1e-3                  # almost-active threshold on (lam, A)
    eps1_sq: float = 0.1               # distance margin, length^2
    M: float = DEFAULT_M               # box bound on auxiliary rates
    enforcement_radius_sq: float = np.inf
    fast_path: bool = True             # use grad h row when regular
    class_k = None                     # optional scalar function of h-margin

    def barrier_rhs(self, h: float) -> float:
        """-RHS of the rate condition: rate >= -barrier_rhs(h)."""
        margin = h - self.eps1_sq
        if self.class_k is not None:
            return float(self.class_k(margin))
        return self.alpha * margin

    def validate(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.eps1_sq <= 0:
            raise ValueError("eps1_sq must be positive")
        if self.enforcement_radius_sq <= self.eps1_sq:
            raise ValueError("enforcement radius must exceed the margin")


@dataclass
class RobotControlData:
    """Control-affine data of one robot at the current state."""

    f: np.ndarray                      # (3,)
    g: np.ndarray                      # (3, m)
    u_nom: np.ndarray                  # (m,)
    u_lb: np.ndarray
    u_ub: np.ndarray

    @property
    def m(self) -> int:
        return self.g.shape[1]


@dataclass
class StrictPairData:
    i: int
    j: int
    body_i: BodyAtState
    body_j: BodyAtState
    sol: KKTSolution
    idx: IndexSets


@dataclass
class PolytopePairData:
    i: int
    j: int
    h: float
    lam_i: np.ndarray
    lam_j: np.ndarray
    A_i: np.ndarray
    b_i: np.ndarray
    A_j: np.ndarray
    b_j: np.ndarray
    rates_i: PolytopeRates
    rates_j: PolytopeRates
    # nearby contact sites as (h_site, lam_i, lam_j), for ridge-aware rows
    alt_duals: list = field(default_factory=list)


@dataclass
class SafetyFilterResult:
    u: list                            # per-robot filtered inputs
    status: str                        # optimal | infeasible | max-iter
    margins: dict = field(default_factory=dict)   # (i,j) -> row slack
    aux: dict = field(default_factory=dict)       # (i,j) -> (zdot, lamdot)
    fast_path_pairs: set = field(default_factory=set)
    branches_tried: int = 1
    solve_time: float = 0.0
    fallback: bool = False


def select_enforced_pairs(pair_h: dict, params: NCBFParams) -> list:
    """Pairs whose current h is inside the enforcement region."""
    keep = []
    for key, h in pair_h.items():
        if h <= params.enforcement_radius_sq:
            keep.append(key)
        else:
            log.debug("pair %s skipped: h=%.3f beyond enforcement radius",
                      key, h)
    return keep


# ---------------------------------------------------------------------------
# row assembly
# ---------------------------------------------------------------------------


@dataclass
class _Rows:
    """Constraint rows over the global variable vector."""

    A_eq: list = field(default_factory=list)
    b_eq: list = field(default_factory=list)
    A_in: list = field(default_factory=list)
    b_in: list = field(default_factory=list)

    def eq(self, row, rhs):
        self.A_eq.append(row)
        self.b_eq.append(rhs)

    def le(self, row, rhs):
        self.A_in.append(row)
        self.b_in.append(rhs)


class _Layout:
    """Offsets of the robot inputs and per-pair auxiliaries."""

    def __init__(self, robots: list[RobotControlData]):
        self.u_off = []
        off = 0
        for r in robots:
            self.u_off.append(off)
            off += r.m
        self.nu = off
        self.total = off

    def add_aux(self, count: int) -> int:
        start = self.total
        self.total += count
        return start


def _strict_pair_rows(rows: _Rows, layout, robots, pair: StrictPairData,
                      params: NCBFParams, aux_off: int, lam_rows: list,
                      branch: dict, width: int):
    """Emit one strict pair's constraint rows for a given branch.

    Aux layout: zdot (2l) then lamdot over `lam_rows` (flat constraint
    indices); branch maps a flat index to True (rate row pinned to zero)
    or False (lamdot pinned to zero).
    """
    sol, idx = pair.sol, pair.idx
    values, grad_zA, grad_xA, hess_L, mixed = _pair_blocks(
        pair.body_i, pair.body_j, sol)
    l2 = hess_L.shape[0]
    l = l2 // 2
    n = 3
    r_i = len(sol.lam_i)
    ri_rob, rj_rob = robots[pair.i], robots[pair.j]
    z_off = aux_off
    lam_pos = {k: aux_off + l2 + p for p, k in enumerate(lam_rows)}

    def flat(key):
        return key[1] if key[0] == 0 else r_i + key[1]

    j1 = {flat(k) for k in idx.J1}
    j2eps = {flat(k) for k in idx.J2eps}

    # barrier row: 2 s (zdot_i - zdot_j) >= -alpha (h - margin)
    row = np.zeros(width)
    row[z_off:z_off + l] = -2.0 * sol.s
    row[z_off + l:z_off + l2] = 2.0 * sol.s
    rows.le(row, params.barrier_rhs(sol.h))

    # stationarity rate (2l equality rows), xdot eliminated via f + g u
    u_coef_i = mixed[:, :n] @ ri_rob.g
    u_coef_j = mixed[:, n:] @ rj_rob.g
    const = mixed[:, :n] @ ri_rob.f + mixed[:, n:] @ rj_rob.f
    for a in range(l2):
        row = np.zeros(width)
        row[z_off:z_off + l2] = hess_L[a]
        row[layout.u_off[pair.i]:layout.u_off[pair.i] + ri_rob.m] = u_coef_i[a]
        row[layout.u_off[pair.j]:layout.u_off[pair.j] + rj_rob.m] = u_coef_j[a]
        for k, pos in lam_pos.items():
            row[pos] = grad_zA[k, a]
        rows.eq(row, -const[a])

    # constraint-rate rows
    gx_u_i = grad_xA[:, :n] @ ri_rob.g
    gx_u_j = grad_xA[:, n:] @ rj_rob.g
    gx_const = grad_xA[:, :n] @ ri_rob.f + grad_xA[:, n:] @ rj_rob.f
    for k in sorted(j1 | j2eps):
        row = np.zeros(width)
        row[z_off:z_off + l2] = grad_zA[k]
        row[layout.u_off[pair.i]:layout.u_off[pair.i] + ri_rob.m] = gx_u_i[k]
        row[layout.u_off[pair.j]:layout.u_off[pair.j] + rj_rob.m] = gx_u_j[k]
        if k in j1 or branch.get(k, False):
            rows.eq(row, -gx_const[k])
        else:
            rows.le(row, -gx_const[k])


def _strict_pair_aux_bounds(pair: StrictPairData, params, lam_rows, branch):
    """(lb, ub) of one pair's aux block for a given branch."""
    l2 = 2 * pair.body_i.body.ambient_dim
    r_i = len(pair.sol.lam_i)

    def flat(key):
        return key[1] if key[0] == 0 else r_i + key[1]

    j1 = {flat(k) for k in pair.idx.J1}
    lb = np.full(l2 + len(lam_rows), -params.M)
    ub = np.full(l2 + len(lam_rows), params.M)
    for p, k in enumerate(lam_rows):
        if k in j1:
            continue                   # strictly active: free sign
        if branch.get(k, False):
            lb[l2 + p] = 0.0           # rate row pinned, lamdot >= 0
        else:
            lb[l2 + p] = 0.0
            ub[l2 + p] = 0.0           # lamdot pinned to zero
    return lb, ub


def _polytope_pair_rows(rows: _Rows, layout, robots, pair: PolytopePairData,
                        h_site: float, lam_i: np.ndarray, lam_j: np.ndarray,
                        params: NCBFParams, aux_off: int, width: int):
    """Emit rows for one dual support; aux block is its lamdot vector."""
    r_i = len(lam_i)
    r_j = len(lam_j)
    ri_rob, rj_rob = robots[pair.i], robots[pair.j]
    ui, uj = layout.u_off[pair.i], layout.u_off[pair.j]

    w = pair.A_i.T @ lam_i
    # dual-rate row coefficients: affine in (lamdot, u_i, u_j)
    c_lam = np.concatenate([-0.5 * (pair.A_i @ w) - pair.b_i, -pair.b_j])
    lgA_w_i = np.einsum("klm,l->km", pair.rates_i.lg_A, w)
    c_ui = -0.5 * (lam_i @ lgA_w_i) - lam_i @ pair.rates_i.lg_b
    c_uj = -lam_j @ pair.rates_j.lg_b
    const = float(-0.5 * w @ (pair.rates_i.lf_A.T @ lam_i)
                  - lam_i @ pair.rates_i.lf_b
                  - lam_j @ pair.rates_j.lf_b)

    row = np.zeros(width)
    row[aux_off:aux_off + r_i + r_j] = -c_lam
    row[ui:ui + ri_rob.m] = -c_ui
    row[uj:uj + rj_rob.m] = -c_uj
    rows.le(row, const + params.barrier_rhs(h_site))

    # plane-consistency equalities (l rows)
    lam_lgA_i = np.tensordot(lam_i, pair.rates_i.lg_A, axes=1)
    lam_lgA_j = np.tensordot(lam_j, pair.rates_j.lg_A, axes=1)
    b_eq = -(pair.rates_i.lf_A.T @ lam_i
             + pair.rates_j.lf_A.T @ lam_j)
    l = pair.A_i.shape[1]
    for a in range(l):
        row = np.zeros(width)
        row[aux_off:aux_off + r_i] = pair.A_i[:, a]
        row[aux_off + r_i:aux_off + r_i + r_j] = pair.A_j[:, a]
        row[ui:ui + ri_rob.m] = lam_lgA_i[a]
        row[uj:uj + rj_rob.m] = lam_lgA_j[a]
        rows.eq(row, b_eq[a])


def _polytope_pair_aux_bounds(lam_i, lam_j, params):
    lam = np.concatenate([lam_i, lam_j])
    lb = np.full(len(lam), -params.M)
    lb[lam < params.eps] = 0.0
    ub = np.full(len(lam), params.M)
    return lb, ub


def aggregate_multi_robot(robots: list[RobotControlData], rows: _Rows,
                          aux_lb: np.ndarray, aux_ub: np.ndarray,
                          width: int) -> QuadProgram:
    """Single QP over (all inputs, all pair auxiliaries)."""
    nu = sum(r.m for r in robots)
    if width != nu + len(aux_lb):
        raise ValueError("variable layout mismatch")
    H = np.zeros((width, width))
    H[:nu, :nu] = 2.0 * np.eye(nu)
    u_nom = np.concatenate([r.u_nom for r in robots]) if robots else np.zeros(0)
    f = np.zeros(width)
    f[:nu] = -2.0 * u_nom
    lb = np.concatenate([np.concatenate([r.u_lb for r in robots])
                         if robots else np.zeros(0), aux_lb])
    ub = np.concatenate([np.concatenate([r.u_ub for r in robots])
                         if robots else np.zeros(0), aux_ub])
    return QuadProgram(
        H=H, f=f,
        A_eq=np.array(rows.A_eq) if rows.A_eq else None,
        b_eq=np.array(rows.b_eq) if rows.b_eq else None,
        A_in=np.array(rows.A_in) if rows.A_in else None,
        b_in=np.array(rows.b_in) if rows.b_in else None,
        lb=lb, ub=ub)


# ---------------------------------------------------------------------------
# filters
# ---------------------------------------------------------------------------


def _split_u(x, robots, layout):
    return [x[layout.u_off[i]:layout.u_off[i] + r.m].copy()
            for i, r in enumerate(robots)]


def _fallback(robots, layout, t0, reason) -> SafetyFilterResult:
    log.warning("safety filter fallback (%s): commanding zero input", reason)
    u = [np.clip(np.zeros(r.m), r.u_lb, r.u_ub) for r in robots]
    return SafetyFilterResult(u=u, status="infeasible", fallback=True,
                              solve_time=time.perf_counter() - t0)


# any positive slack certifies nominal feasibility; the guard only
# absorbs the rate solvers' own numerical error
NOMINAL_GUARD = 1e-8


def _nominal_shortcut_strict(robots, pairs, params, t0):
    """u_nom unchanged when it already satisfies every barrier row.

    The realized rates of each pair's KKT solution under the nominal
    inputs are admissible for the aggregated program, so nominal-input
    feasibility makes u_nom the exact minimizer.
    """
    margins = {}
    for pair in pairs:
        ri, rj = robots[pair.i], robots[pair.j]
        x_dot = np.concatenate([ri.f + ri.g @ ri.u_nom,
                                rj.f + rj.g @ rj.u_nom])
        try:
            dd = directional_derivative(pair.body_i, pair.body_j,
                                        pair.sol, pair.idx, x_dot)
        except (RuntimeError, np.linalg.LinAlgError):
            return None
        margin = dd.dh + params.barrier_rhs(pair.sol.h)
        if margin < NOMINAL_GUARD:
            return None
        margins[(pair.i, pair.j)] = float(margin)
    return SafetyFilterResult(
        u=[r.u_nom.copy() for r in robots], status="optimal",
        margins=margins, solve_time=time.perf_counter() - t0)


def filter_strict(robots: list[RobotControlData],
                  pairs: list[StrictPairData],
                  params: NCBFParams) -> SafetyFilterResult:
    """Minimally perturb nominal inputs subject to strict-pair barriers."""
    t0 = time.perf_counter()
    params.validate()

    shortcut = _nominal_shortcut_strict(robots, pairs, params, t0)
    if shortcut is not None:
        return shortcut

    # fast-path pairs contribute one gradient row in u only
    fast_rows = []
    full_pairs = []
    fast_set = set()
    for pair in pairs:
        if params.fast_path and pair.sol.strict_complementarity:
            try:
                sys = assemble_qv(pair.body_i, pair.body_j, pair.sol)
                grad = grad_h_strict(pair.sol, sys)
                fast_rows.append((pair, grad))
                fast_set.add((pair.i, pair.j))
                continue
            except np.linalg.LinAlgError:
                log.info("pair (%d,%d): singular sensitivity system, "
                         "using rate formulation", pair.i, pair.j)
        full_pairs.append(pair)

    # lamdot variables exist for J1 and the almost-active set
    pair_lam_rows = []
    bilinear = []                      # (pair position, flat row)
    for pos, pair in enumerate(full_pairs):
        r_i = len(pair.sol.lam_i)

        def flat(key, r_i=r_i):
            return key[1] if key[0] == 0 else r_i + key[1]

        j1 = {flat(k) for k in pair.idx.J1}
        j2eps = {flat(k) for k in pair.idx.J2eps}
        lam_rows = sorted(j1 | j2eps)
        pair_lam_rows.append(lam_rows)
        for k in sorted(j2eps - j1):
            bilinear.append((pos, k))

    if len(bilinear) > 4:              # 2^b branches, capped
        log.warning("%d bilinear rows exceed branch cap; "
                    "using conservative zero-rate branch", len(bilinear))
        assignments = [tuple(False for _ in bilinear)]
    elif bilinear:
        assignments = list(itertools.product((False, True),
                                             repeat=len(bilinear)))
    else:
        assignments = [()]

    best = None
    tried = 0
    for assign in assignments[:MAX_BRANCHES]:
        branch_by_pair = [dict() for _ in full_pairs]
        for (pos, k), choice in zip(bilinear, assign):
            branch_by_pair[pos][k] = choice

        layout = _Layout(robots)
        width_offs = []
        aux_bounds = []
        for pair, lam_rows, branch in zip(full_pairs, pair_lam_rows,
                                          branch_by_pair):
            l2 = 2 * pair.body_i.body.ambient_dim
            off = layout.add_aux(l2 + len(lam_rows))
            width_offs.append(off)
            lb, ub = _strict_pair_aux_bounds(pair, params, lam_rows, branch)
            aux_bounds.append((lb, ub))
        width = layout.total

        rows = _Rows()
        for pair, grad in fast_rows:
            row = np.zeros(width)
            ri_rob, rj_rob = robots[pair.i], robots[pair.j]
            row[layout.u_off[pair.i]:layout.u_off[pair.i] + ri_rob.m] = \
                -grad[:3] @ ri_rob.g
            row[layout.u_off[pair.j]:layout.u_off[pair.j] + rj_rob.m] = \
                -grad[3:] @ rj_rob.g
            rhs = (params.barrier_rhs(pair.sol.h)
                   + grad[:3] @ ri_rob.f + grad[3:] @ rj_rob.f)
            rows.le(row, rhs)
        for pair, lam_rows, branch, off in zip(full_pairs, pair_lam_rows,
                                               branch_by_pair, width_offs):
            _strict_pair_rows(rows, layout, robots, pair, params, off,
                              lam_rows, branch, width)

        aux_lb = (np.concatenate([b[0] for b in aux_bounds])
                  if aux_bounds else np.zeros(0))
        aux_ub = (np.concatenate([b[1] for b in aux_bounds])
                  if aux_bounds else np.zeros(0))
        prog = aggregate_multi_robot(robots, rows, aux_lb, aux_ub, width)
        rep = solve_qp(prog)
        tried += 1
        if rep.status == "optimal" and (best is None
                                        or rep.objective < best[0].objective):
            best = (rep, layout, width_offs, branch_by_pair)

    if best is None:
        return _fallback(robots, layout, t0, "all branches infeasible")

    rep, layout, width_offs, _ = best
    result = SafetyFilterResult(
        u=_split_u(rep.x, robots, layout), status=rep.status,
        fast_path_pairs=fast_set, branches_tried=tried,
        solve_time=time.perf_counter() - t0)

    for pair, grad in fast_rows:
        ri_rob, rj_rob = robots[pair.i], robots[pair.j]
        xdot_i = ri_rob.f + ri_rob.g @ result.u[pair.i]
        xdot_j = rj_rob.f + rj_rob.g @ result.u[pair.j]
        hdot = grad[:3] @ xdot_i + grad[3:] @ xdot_j
        result.margins[(pair.i, pair.j)] = float(
            hdot + params.barrier_rhs(pair.sol.h))
    for pair, lam_rows, off in zip(full_pairs, pair_lam_rows, width_offs):
        l2 = 2 * pair.body_i.body.ambient_dim
        z_dot = rep.x[off:off + l2]
        lam_dot = np.zeros(len(pair.sol.lam))
        for p, k in enumerate(lam_rows):
            lam_dot[k] = rep.x[off + l2 + p]
        result.aux[(pair.i, pair.j)] = (z_dot, lam_dot)
        l = l2 // 2
        hdot = 2.0 * pair.sol.s @ (z_dot[:l] - z_dot[l:])
        result.margins[(pair.i, pair.j)] = float(
            hdot + params.barrier_rhs(pair.sol.h))
    return result


def _nominal_shortcut_polytope(robots, pairs, params, t0):
    """u_nom unchanged when every contact site's rate bound is slack."""
    margins = {}
    for pair in pairs:
        ri, rj = robots[pair.i], robots[pair.j]
        Ad_i, bd_i = pair.rates_i.at_input(ri.u_nom)
        Ad_j, bd_j = pair.rates_j.at_input(rj.u_nom)
        supports = ([(pair.h, pair.lam_i, pair.lam_j)]
                    + list(pair.alt_duals))
        for k, (hs, li, lj) in enumerate(supports):
            try:
                dd = polytope_hdot_lp(li, lj, pair.A_i, pair.b_i,
                                      pair.A_j, pair.b_j,
                                      Ad_i, bd_i, Ad_j, bd_j, M=params.M)
            except RuntimeError:
                return None
            margin = dd.dh + params.barrier_rhs(hs)
            if margin < NOMINAL_GUARD:
                return None
            if k == 0:
                margins[(pair.i, pair.j)] = float(margin)
    return SafetyFilterResult(
        u=[r.u_nom.copy() for r in robots], status="optimal",
        margins=margins, solve_time=time.perf_counter() - t0)


def filter_polytope(robots: list[RobotControlData],
                    pairs: list[PolytopePairData],
                    params: NCBFParams) -> SafetyFilterResult:
    """Minimally perturb nominal inputs subject to polytope-pair barriers."""
    t0 = time.perf_counter()
    params.validate()

    shortcut = _nominal_shortcut_polytope(robots, pairs, params, t0)
    if shortcut is not None:
        return shortcut

    layout = _Layout(robots)
    blocks = []      # (pair, lam_i, lam_j, aux offset); first per pair is primary
    offs = []        # primary aux offset per pair
    aux_bounds = []
    for pair in pairs:
        supports = ([(pair.h, pair.lam_i, pair.lam_j)]
                    + list(pair.alt_duals))
        for k, (hs, li, lj) in enumerate(supports):
            off = layout.add_aux(len(li) + len(lj))
            blocks.append((pair, hs, li, lj, off))
            aux_bounds.append(_polytope_pair_aux_bounds(li, lj, params))
            if k == 0:
                offs.append(off)
    width = layout.total

    rows = _Rows()
    for pair, hs, li, lj, off in blocks:
        _polytope_pair_rows(rows, layout, robots, pair, hs, li, lj,
                            params, off, width)

    aux_lb = (np.concatenate([b[0] for b in aux_bounds])
              if aux_bounds else np.zeros(0))
    aux_ub = (np.concatenate([b[1] for b in aux_bounds])
              if aux_bounds else np.zeros(0))
    prog = aggregate_multi_robot(robots, rows, aux_lb, aux_ub, width)
    # degenerate near-parallel contacts stall the interior point slightly
    # above oracle accuracy; accept control-grade residuals here
    rep = solve_qp(prog, tol=1e-6)
    if rep.status != "optimal":
        return _fallback(robots, layout, t0, f"polytope QP {rep.status}")

    result = SafetyFilterResult(
        u=_split_u(rep.x, robots, layout), status=rep.status,
        solve_time=time.perf_counter() - t0)
    for pair, off in zip(pairs, offs):
        r = len(pair.lam_i) + len(pair.lam_j)
        lam_dot = rep.x[off:off + r]
        result.aux[(pair.i, pair.j)] = (np.zeros(0), lam_dot)
        # recompute the dual-rate row slack at the solution
        from .sensitivity import lambda_dot_lagrangian
        u_i, u_j = result.u[pair.i], result.u[pair.j]
        Ad_i, bd_i = pair.rates_i.at_input(u_i)
        Ad_j, bd_j = pair.rates_j.at_input(u_j)
        val = lambda_dot_lagrangian(
            pair.lam_i, lam_dot[:len(pair.lam_i)], pair.A_i, Ad_i,
            pair.b_i, bd_i, pair.lam_j, lam_dot[len(pair.lam_i):],
            pair.b_j, bd_j)
        result.margins[(pair.i, pair.j)] = float(
            val + params.barrier_rhs(pair.h))
    return result
