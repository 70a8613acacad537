"""Randomized property suites over the distance and sensitivity layers.

Each suite draws a fixed number of random configurations, checks a
quantitative property at a stated tolerance, and reports the worst case.
The CLI exposes them via `convexavoid verify <suite>`; the test suite
reuses the same functions.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .controller import (NCBFParams, PolytopePairData, RobotControlData,
                         StrictPairData, filter_polytope, filter_strict)
from .distance import (min_dist_polytope_dual, min_dist_polytope_primal,
                       min_dist_strict)
from .dynamics import run
from .geometry import (BodyAtState, PolytopeBody, make_circle,
                       make_circle_intersection, make_ellipse,
                       make_superellipse)
from .scenario import (build_world, shipped_polytope_scenario,
                       shipped_strict_scenario)
from .sensitivity import directional_derivative, polytope_hdot_lp


@dataclass
class SuiteResult:
    name: str
    passed: bool
    cases: int
    details: dict = field(default_factory=dict)
    elapsed_s: float = 0.0

    def summary(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        extras = ", ".join(f"{k}={v:.3g}" if isinstance(v, float)
                           else f"{k}={v}" for k, v in self.details.items())
        return (f"[{verdict}] {self.name}: {self.cases} cases, "
                f"{self.elapsed_s:.2f} s ({extras})")


# ---------------------------------------------------------------------------
# random configuration generators
# ---------------------------------------------------------------------------


def random_polygon(rng: np.random.Generator,
                   max_faces: int = 8) -> PolytopeBody:
    """Random convex polygon with 3..max_faces faces, centered near 0.

    Near-degenerate shapes (almost-parallel faces, very short edges) are
    rejected: their distance duals are nearly non-unique and numerically
    meaningless, which the theory excludes by assumption.
    """
    while True:
        n_pts = int(rng.integers(3, max_faces + 1))
        pts = rng.uniform(-1.5, 1.5, size=(n_pts, 2))
        try:
            body = PolytopeBody.from_vertices(pts)
        except Exception:
            continue
        if not 3 <= body.num_constraints <= max_faces:
            continue
        normals = body.A0 / np.linalg.norm(body.A0, axis=1, keepdims=True)
        dots = normals @ normals.T
        np.fill_diagonal(dots, -1.0)
        if np.max(dots) > np.cos(np.radians(5.0)):
            continue
        verts = body.vertices()
        gaps = np.linalg.norm(verts[:, None] - verts[None, :], axis=-1)
        np.fill_diagonal(gaps, np.inf)
        if np.min(gaps) < 0.15:
            continue
        return body


def random_strict_body(rng: np.random.Generator):
    kind = int(rng.integers(0, 4))
    if kind == 0:
        return make_circle(float(rng.uniform(0.5, 1.5)))
    if kind == 1:
        return make_ellipse(float(rng.uniform(0.8, 2.0)),
                            float(rng.uniform(0.5, 1.2)))
    if kind == 2:
        return make_superellipse(float(rng.uniform(0.8, 2.0)),
                                 float(rng.uniform(0.5, 1.2)),
                                 int(rng.choice([4, 6])))
    n = int(rng.integers(2, 4))
    ang = rng.uniform(0, 2 * np.pi)
    centers = [0.5 * np.array([np.cos(ang + 2 * np.pi * k / n),
                               np.sin(ang + 2 * np.pi * k / n)])
               for k in range(n)]
    return make_circle_intersection(centers, [float(rng.uniform(1.0, 1.6))] * n)


def random_disjoint_pair(rng: np.random.Generator, make_body,
                         solver, min_h: float = 0.05,
                         max_tries: int = 200):
    """Two bodies at random poses with squared distance above min_h."""
    for _ in range(max_tries):
        body_i, body_j = make_body(rng), make_body(rng)
        x_i = np.array([*rng.uniform(-4, 4, size=2),
                        rng.uniform(-np.pi, np.pi)])
        x_j = np.array([*rng.uniform(-4, 4, size=2),
                        rng.uniform(-np.pi, np.pi)])
        bi = BodyAtState.of(body_i, x_i)
        bj = BodyAtState.of(body_j, x_j)
        try:
            h = solver(bi, bj)
        except Exception:
            continue
        if h > min_h:
            return bi, bj
    raise RuntimeError("could not sample a disjoint pair")


def _strict_h(bi, bj) -> float:
    return min_dist_strict(bi, bj).h


def _polytope_h(bi, bj) -> float:
    return min_dist_polytope_dual(bi, bj)[0]


# ---------------------------------------------------------------------------
# suites
# ---------------------------------------------------------------------------


def suite_duality(cases: int = 200, seed: int = 0,
                  tol: float = 1e-6) -> SuiteResult:
    """Primal and dual polytope distance programs agree on h."""
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(cases):
        bi, bj = random_disjoint_pair(rng, random_polygon, _polytope_h)
        h_primal = min_dist_polytope_primal(bi, bj).h
        h_dual = min_dist_polytope_dual(bi, bj)[0]
        worst = max(worst, abs(h_primal - h_dual))
    elapsed = time.perf_counter() - t0
    return SuiteResult("duality", worst <= tol, cases,
                       {"worst_gap": worst, "tol": tol}, elapsed)


def suite_gradients(cases: int = 100, seed: int = 1,
                    rel_tol: float = 1e-3,
                    res_tol: float = 1e-8) -> SuiteResult:
    """Directional derivative of h matches a central finite difference."""
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    worst_rel = 0.0
    worst_res = 0.0
    step = 1e-5
    for _ in range(cases):
        bi, bj = random_disjoint_pair(rng, random_strict_body, _strict_h)
        sol = min_dist_strict(bi, bj)
        x_dot = rng.standard_normal(6)
        dd = directional_derivative(bi, bj, sol, sol.index_sets, x_dot)
        h_plus = min_dist_strict(
            BodyAtState.of(bi.body, bi.x + step * x_dot[:3]),
            BodyAtState.of(bj.body, bj.x + step * x_dot[3:])).h
        h_minus = min_dist_strict(
            BodyAtState.of(bi.body, bi.x - step * x_dot[:3]),
            BodyAtState.of(bj.body, bj.x - step * x_dot[3:])).h
        fd = (h_plus - h_minus) / (2 * step)
        rel = abs(dd.dh - fd) / max(1.0, abs(fd))
        worst_rel = max(worst_rel, rel)
        worst_res = max(worst_res, dd.residual)
    elapsed = time.perf_counter() - t0
    return SuiteResult(
        "gradients", worst_rel <= rel_tol and worst_res <= res_tol, cases,
        {"worst_rel_err": worst_rel, "worst_residual": worst_res}, elapsed)


def suite_polytope_rate(cases: int = 100, seed: int = 2,
                        bound_tol: float = 1e-4,
                        eq_tol: float = 1e-3) -> SuiteResult:
    """LP lower bound g never exceeds the realized forward difference of h.

    On configurations where the active faces do not change across the
    probe step, the bound is tight.
    """
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    worst_excess = -np.inf
    worst_eq = 0.0
    eq_cases = 0
    dt = 1e-6
    for _ in range(cases):
        bi, bj = random_disjoint_pair(rng, random_polygon, _polytope_h)
        h0, lam_i, lam_j, _ = min_dist_polytope_dual(bi, bj)
        x_dot_i = rng.uniform(-1, 1, size=3)
        x_dot_j = rng.uniform(-1, 1, size=3)
        # rigid-velocity face rates through the integrator channel
        rates_i = bi.body.rates(bi.x, np.zeros(3), np.eye(3))
        rates_j = bj.body.rates(bj.x, np.zeros(3), np.eye(3))
        Ad_i, bd_i = rates_i.at_input(x_dot_i)
        Ad_j, bd_j = rates_j.at_input(x_dot_j)
        dd = polytope_hdot_lp(lam_i, lam_j, bi.A, bi.b, bj.A, bj.b,
                              Ad_i, bd_i, Ad_j, bd_j)
        bi2 = BodyAtState.of(bi.body, bi.x + dt * x_dot_i)
        bj2 = BodyAtState.of(bj.body, bj.x + dt * x_dot_j)
        h1, lam_i2, lam_j2, _ = min_dist_polytope_dual(bi2, bj2)
        fd = (h1 - h0) / dt
        worst_excess = max(worst_excess, dd.dh - fd)
        same_support = (
            np.array_equal(lam_i > 1e-6, lam_i2 > 1e-6)
            and np.array_equal(lam_j > 1e-6, lam_j2 > 1e-6))
        if same_support:
            eq_cases += 1
            worst_eq = max(worst_eq, abs(dd.dh - fd) / max(1.0, abs(fd)))
    elapsed = time.perf_counter() - t0
    return SuiteResult(
        "polytope-rate",
        worst_excess <= bound_tol and worst_eq <= eq_tol, cases,
        {"worst_excess": float(worst_excess), "worst_eq_err": worst_eq,
         "tight_cases": eq_cases}, elapsed)


def suite_filter_projection(cases: int = 50, seed: int = 3,
                            tol: float = 1e-7) -> SuiteResult:
    """Filters leave already-safe nominal inputs untouched.

    Robots are placed far apart with goals pulling them further apart, so
    every barrier row is slack at the nominal input.
    """
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    params = NCBFParams()
    worst = 0.0
    for case in range(cases):
        polytope = case % 2 == 1
        sep = rng.uniform(8.0, 15.0)
        ang = rng.uniform(0, 2 * np.pi)
        offs = [sep * np.array([np.cos(ang), np.sin(ang)]),
                -sep * np.array([np.cos(ang), np.sin(ang)])]
        ctrl = []
        pair_args = []
        for off in offs:
            x = np.array([*off, rng.uniform(-np.pi, np.pi)])
            u_nom = rng.uniform(-0.5, 0.5, size=3)
            # outward nominal motion keeps every barrier row slack
            u_nom[:2] += 0.5 * off / np.linalg.norm(off)
            ctrl.append(RobotControlData(
                f=np.zeros(3), g=np.eye(3), u_nom=u_nom,
                u_lb=np.full(3, -2.0), u_ub=np.full(3, 2.0)))
            body = (random_polygon(rng) if polytope
                    else random_strict_body(rng))
            pair_args.append((body, x))
        bi = BodyAtState.of(*pair_args[0])
        bj = BodyAtState.of(*pair_args[1])
        if polytope:
            h, lam_i, lam_j, _ = min_dist_polytope_dual(bi, bj)
            rates_i = bi.body.rates(bi.x, np.zeros(3), np.eye(3))
            rates_j = bj.body.rates(bj.x, np.zeros(3), np.eye(3))
            pair = PolytopePairData(0, 1, h, lam_i, lam_j, bi.A, bi.b,
                                    bj.A, bj.b, rates_i, rates_j)
            res = filter_polytope(ctrl, [pair], params)
        else:
            sol = min_dist_strict(bi, bj)
            pair = StrictPairData(0, 1, bi, bj, sol, sol.index_sets)
            res = filter_strict(ctrl, [pair], params)
        if res.fallback:
            worst = np.inf
            continue
        for k in range(2):
            worst = max(worst, float(np.linalg.norm(
                res.u[k] - ctrl[k].u_nom)))
    elapsed = time.perf_counter() - t0
    return SuiteResult("filter-projection", worst <= tol, cases,
                       {"worst_perturbation": worst, "tol": tol}, elapsed)


def _safety_metrics(scn) -> dict:
    world = build_world(scn)
    log = run(world, scn.dt, scn.horizon)
    goal_dists = {r.name: r.distance_to_goal() for r in world.robots}
    h0 = dict(log.records[0].pair_h) if log.records else {}
    margin = world.params.eps1_sq
    alpha = world.params.alpha
    slack = 1e-3 * scn.dt * len(log.records)
    worst_envelope = 0.0
    for rec in log.records:
        for key, h in rec.pair_h.items():
            envelope = (h0[key] - margin) * np.exp(-alpha * rec.t)
            worst_envelope = max(worst_envelope, envelope - (h - margin))
    return {
        "breach": log.breach,
        "solver_failures": log.solver_failures,
        "min_h": log.min_pair_h(),
        "max_goal_dist": max(goal_dists.values()),
        "goal_dists": goal_dists,
        "worst_envelope_deficit": worst_envelope,
        "envelope_slack": slack,
        "timing": log.timing_summary(),
        "steps": len(log.records),
    }


def suite_safety(seed: int = 0) -> SuiteResult:
    """Full closed-loop regression on both shipped 5-robot scenarios."""
    t0 = time.perf_counter()
    details = {}
    ok = True
    for scn in (shipped_strict_scenario(), shipped_polytope_scenario()):
        m = _safety_metrics(scn)
        scenario_ok = (not m["breach"]
                       and m["min_h"] >= scn.params.eps1_sq
                       and m["max_goal_dist"] <= 0.5
                       and m["worst_envelope_deficit"] <= m["envelope_slack"])
        ok = ok and scenario_ok
        details[f"{scn.name}_min_h"] = m["min_h"]
        details[f"{scn.name}_max_goal_dist"] = m["max_goal_dist"]
        details[f"{scn.name}_p50_ms"] = m["timing"]["total"]["p50_ms"]
    elapsed = time.perf_counter() - t0
    return SuiteResult("safety", ok, 2, details, elapsed)


SUITES = {
    "duality": suite_duality,
    "gradients": suite_gradients,
    "polytope-rate": suite_polytope_rate,
    "filter-projection": suite_filter_projection,
    "safety": suite_safety,
}
