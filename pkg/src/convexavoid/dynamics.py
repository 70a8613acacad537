"""Robot models, nominal controllers, and the closed-loop simulation.

States are (x1, x2, heading) for every robot; inputs are held constant
over each control period (sample-and-hold) and integrated with RK4.
"""

from __future__ import annotations

import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .controller import (NCBFParams, PolytopePairData, RobotControlData,
                         StrictPairData, filter_polytope, filter_strict,
                         select_enforced_pairs)
from .distance import (min_dist_polytope_dual, min_dist_strict,
                       polytope_contact_sites)
from .geometry import BodyAtState

log = logging.getLogger(__name__)

WORKERS_ENV = "CONVEXAVOID_WORKERS"


def wrap_angle(a: float) -> float:
    """Wrap to (-pi, pi]."""
    w = (a + np.pi) % (2 * np.pi) - np.pi
    return np.pi if w == -np.pi else float(w)


# ---------------------------------------------------------------------------
# control-affine models
# ---------------------------------------------------------------------------


def integrator_dynamics(x: np.ndarray, u: np.ndarray) -> np.ndarray:
    """xdot = u with u = (v1, v2, omega)."""
    return np.asarray(u, dtype=float).copy()


def unicycle_dynamics(x: np.ndarray, u: np.ndarray) -> np.ndarray:
    """xdot = (v cos th, v sin th, omega) with u = (v, omega)."""
    v, om = u
    return np.array([v * np.cos(x[2]), v * np.sin(x[2]), om])


_MODELS = {
    "integrator": dict(
        input_dim=3,
        xdot=integrator_dynamics,
        f=lambda x: np.zeros(3),
        g=lambda x: np.eye(3)),
    "unicycle": dict(
        input_dim=2,
        xdot=unicycle_dynamics,
        f=lambda x: np.zeros(3),
        g=lambda x: np.array([[np.cos(x[2]), 0.0],
                              [np.sin(x[2]), 0.0],
                              [0.0, 1.0]])),
}


# ---------------------------------------------------------------------------
# nominal controllers
# ---------------------------------------------------------------------------


def nominal_proportional(x, goal, k_p, u_lb, u_ub) -> np.ndarray:
    """Componentwise proportional law with heading wrap, saturated."""
    err = np.asarray(goal, dtype=float) - np.asarray(x, dtype=float)
    err[2] = wrap_angle(err[2])
    return np.clip(k_p * err, u_lb, u_ub)


def nominal_unicycle_clf(x, goal, gains, u_lb, u_ub,
                         goal_tol: float = 0.05) -> np.ndarray:
    """Polar-coordinate goal-steering law for the unicycle.

    rho is the distance to the goal position, alpha the bearing error,
    beta the goal-heading error; stops inside goal_tol.
    """
    k_rho, k_alpha, k_beta = gains
    dx = goal[0] - x[0]
    dy = goal[1] - x[1]
    rho = float(np.hypot(dx, dy))
    if rho < goal_tol:
        return np.zeros(2)
    bearing = np.arctan2(dy, dx)
    alpha = wrap_angle(bearing - x[2])
    beta = wrap_angle(goal[2] - bearing)
    v = k_rho * rho * np.cos(alpha)
    if abs(alpha) < 1e-6:
        om = k_alpha * alpha + k_rho * (alpha + k_beta * beta)
    else:
        om = (k_alpha * alpha
              + k_rho * np.sin(alpha) * np.cos(alpha)
              * (alpha + k_beta * beta) / alpha)
    return np.clip(np.array([v, om]), u_lb, u_ub)


# ---------------------------------------------------------------------------
# robots and world
# ---------------------------------------------------------------------------


@dataclass
class RobotModel:
    name: str
    dynamics: str                     # integrator | unicycle
    body: object
    state: np.ndarray
    goal: np.ndarray
    u_lb: np.ndarray
    u_ub: np.ndarray
    gains: dict = field(default_factory=dict)
    goal_tol: float = 0.05

    def __post_init__(self):
        if self.dynamics not in _MODELS:
            raise ValueError(f"unknown dynamics kind {self.dynamics!r}")
        self.state = np.asarray(self.state, dtype=float).copy()
        self.goal = np.asarray(self.goal, dtype=float).copy()
        self.u_lb = np.asarray(self.u_lb, dtype=float)
        self.u_ub = np.asarray(self.u_ub, dtype=float)
        m = _MODELS[self.dynamics]["input_dim"]
        if self.u_lb.shape != (m,) or self.u_ub.shape != (m,):
            raise ValueError("input bound dimension mismatch")
        if np.any(self.u_lb > self.u_ub):
            raise ValueError("empty input box")
        self.state[2] = wrap_angle(self.state[2])

    @property
    def input_dim(self) -> int:
        return _MODELS[self.dynamics]["input_dim"]

    def f(self, x) -> np.ndarray:
        return _MODELS[self.dynamics]["f"](x)

    def g(self, x) -> np.ndarray:
        return _MODELS[self.dynamics]["g"](x)

    def xdot(self, x, u) -> np.ndarray:
        return _MODELS[self.dynamics]["xdot"](x, u)

    def nominal_input(self, x) -> np.ndarray:
        if self.dynamics == "unicycle":
            gains = (self.gains.get("k_rho", 0.5),
                     self.gains.get("k_alpha", 1.5),
                     self.gains.get("k_beta", -0.3))
            return nominal_unicycle_clf(x, self.goal, gains,
                                        self.u_lb, self.u_ub, self.goal_tol)
        k_p = self.gains.get("k_p", 0.5)
        return nominal_proportional(x, self.goal, k_p, self.u_lb, self.u_ub)

    def rk4_step(self, u, dt) -> None:
        x = self.state
        k1 = self.xdot(x, u)
        k2 = self.xdot(x + 0.5 * dt * k1, u)
        k3 = self.xdot(x + 0.5 * dt * k2, u)
        k4 = self.xdot(x + dt * k3, u)
        self.state = x + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        self.state[2] = wrap_angle(self.state[2])

    def distance_to_goal(self) -> float:
        return float(np.linalg.norm(self.state[:2] - self.goal[:2]))


@dataclass
class StepRecord:
    t: float
    states: np.ndarray                 # (N, 3)
    u_nom: list
    u: list
    pair_h: dict                       # (i, j) -> h
    margins: dict
    filter_status: str
    fallback: bool
    dist_time: float
    filter_time: float


@dataclass
class TrajectoryLog:
    records: list = field(default_factory=list)
    breach: bool = False
    solver_failures: int = 0

    def min_pair_h(self) -> float:
        vals = [h for rec in self.records for h in rec.pair_h.values()]
        return float(min(vals)) if vals else np.inf

    def timing_summary(self) -> dict:
        out = {}
        for key in ("dist_time", "filter_time"):
            samples = np.array([getattr(r, key) for r in self.records])
            if len(samples) == 0:
                samples = np.zeros(1)
            out[key.replace("_time", "")] = _timing_stats(samples)
        totals = np.array([r.dist_time + r.filter_time
                           for r in self.records]) if self.records else np.zeros(1)
        out["total"] = _timing_stats(totals)
        return out


def _timing_stats(samples_s: np.ndarray) -> dict:
    ms = 1e3 * np.asarray(samples_s, dtype=float)
    return {
        "mean_ms": float(np.mean(ms)),
        "std_ms": float(np.std(ms)),
        "p50_ms": float(np.percentile(ms, 50)),
        "p99_ms": float(np.percentile(ms, 99)),
        "max_ms": float(np.max(ms)),
    }


class World:
    """All robots plus the pairwise distance cache for warm starting."""

    def __init__(self, robots: list[RobotModel], params: NCBFParams):
        self.robots = robots
        self.params = params
        kinds = {r.body.kind for r in robots}
        if len(kinds) > 1:
            raise ValueError("mixed body kinds in one scenario")
        self.kind = kinds.pop() if kinds else "strict"
        self._warm = {}
        n_workers = int(os.environ.get(WORKERS_ENV, "1"))
        self._pool = (ThreadPoolExecutor(max_workers=n_workers)
                      if n_workers > 1 else None)

    def pair_keys(self):
        n = len(self.robots)
        return [(i, j) for i in range(n) for j in range(i + 1, n)]

    def _solve_pair_strict(self, key, states):
        i, j = key
        bi = BodyAtState.of(self.robots[i].body, states[i])
        bj = BodyAtState.of(self.robots[j].body, states[j])
        sol = min_dist_strict(bi, bj, warm=self._warm.get(key))
        return key, (bi, bj, sol)

    def solve_distances(self) -> tuple[dict, float]:
        """All pairwise solutions; returns (by-pair data, wall time)."""
        t0 = time.perf_counter()
        states = [r.state for r in self.robots]
        keys = self.pair_keys()
        out = {}
        if self.kind == "strict":
            if self._pool is not None:
                futs = [self._pool.submit(self._solve_pair_strict, k, states)
                        for k in keys]
                for fut in futs:
                    key, data = fut.result()
                    out[key] = data
            else:
                for key in keys:
                    out[key] = self._solve_pair_strict(key, states)[1]
            for key, (bi, bj, sol) in out.items():
                self._warm[key] = sol
        else:
            for i, j in keys:
                bi = BodyAtState.of(self.robots[i].body, states[i])
                bj = BodyAtState.of(self.robots[j].body, states[j])
                h, lam_i, lam_j, rep = min_dist_polytope_dual(bi, bj)
                # nearby contact sites, for ridge-aware barrier rows;
                # skip any site with the same support as the main dual
                alts = []
                if 0 < h <= self.params.enforcement_radius_sq:
                    def support(li, lj):
                        return (frozenset(np.flatnonzero(li > 1e-6)),
                                frozenset(np.flatnonzero(lj > 1e-6)))
                    main = support(lam_i, lam_j)
                    alts = [(hs, li, lj) for hs, li, lj
                            in polytope_contact_sites(bi, bj, h)
                            if support(li, lj) != main][:2]
                out[(i, j)] = (bi, bj, h, lam_i, lam_j, alts)
        return out, time.perf_counter() - t0

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()


def step(world: World, t: float, dt: float) -> StepRecord:
    """One sample-and-hold control period."""
    robots = world.robots
    params = world.params
    pair_data, dist_time = world.solve_distances()

    if world.kind == "strict":
        pair_h = {k: v[2].h for k, v in pair_data.items()}
    else:
        pair_h = {k: v[2] for k, v in pair_data.items()}

    ctrl = [RobotControlData(
        f=r.f(r.state), g=r.g(r.state), u_nom=r.nominal_input(r.state),
        u_lb=r.u_lb, u_ub=r.u_ub) for r in robots]
    u_nom = [c.u_nom.copy() for c in ctrl]

    enforced = select_enforced_pairs(pair_h, params)
    if enforced:
        if world.kind == "strict":
            pairs = []
            for (i, j) in enforced:
                bi, bj, sol = pair_data[(i, j)]
                pairs.append(StrictPairData(i, j, bi, bj, sol,
                                            sol.index_sets))
            res = filter_strict(ctrl, pairs, params)
        else:
            pairs = []
            for (i, j) in enforced:
                bi, bj, h, lam_i, lam_j, alts = pair_data[(i, j)]
                ri = robots[i].body.rates(robots[i].state,
                                          ctrl[i].f, ctrl[i].g)
                rj = robots[j].body.rates(robots[j].state,
                                          ctrl[j].f, ctrl[j].g)
                pairs.append(PolytopePairData(i, j, h, lam_i, lam_j,
                                              bi.A, bi.b, bj.A, bj.b,
                                              ri, rj, alts))
            res = filter_polytope(ctrl, pairs, params)
        u = res.u
        margins = res.margins
        status = res.status
        fallback = res.fallback
        filter_time = res.solve_time
    else:
        u = u_nom
        margins = {}
        status = "optimal"
        fallback = False
        filter_time = 0.0

    rec = StepRecord(
        t=t, states=np.array([r.state.copy() for r in robots]),
        u_nom=u_nom, u=[v.copy() for v in u], pair_h=dict(pair_h),
        margins=margins, filter_status=status, fallback=fallback,
        dist_time=dist_time, filter_time=filter_time)

    for r, ui in zip(robots, u):
        r.rk4_step(ui, dt)
    return rec


def run(world: World, dt: float, horizon: float,
        abort_on_breach: bool = True) -> TrajectoryLog:
    """Simulate the closed loop over [0, horizon]."""
    log_out = TrajectoryLog()
    if not world.robots:
        return log_out
    n_steps = int(round(horizon / dt))
    for k in range(n_steps):
        rec = step(world, k * dt, dt)
        log_out.records.append(rec)
        if rec.fallback:
            log_out.solver_failures += 1
        if rec.pair_h and min(rec.pair_h.values()) < world.params.eps1_sq:
            log_out.breach = True
            log.error("safety margin violated at t=%.3f (h=%.4f)",
                      rec.t, min(rec.pair_h.values()))
            if abort_on_breach:
                break
    world.close()
    return log_out
