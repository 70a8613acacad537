"""Scenario files: parsing, validation, serialization, world construction.

A scenario is a TOML document with a versioned schema describing the
robots (body, dynamics, initial state, goal, gains, input box), the
safety-filter parameters, and the simulation parameters.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .controller import NCBFParams
from .distance import min_dist_polytope_dual, min_dist_strict
from .dynamics import RobotModel, World
from .geometry import (BodyAtState, PolytopeBody, make_circle,
                       make_circle_intersection, make_ellipse,
                       make_superellipse, verify_licq_vertices)

SCHEMA_VERSION = 1

_INPUT_DIM = {"integrator": 3, "unicycle": 2}


@dataclass
class RobotSpec:
    """One robot as written in the scenario file."""

    name: str
    dynamics: str
    body: dict                       # kind + shape parameters
    state: list
    goal: list
    u_lb: list
    u_ub: list
    gains: dict = field(default_factory=dict)
    goal_tol: float = 0.05


@dataclass
class Scenario:
    name: str
    robots: list
    params: NCBFParams
    dt: float = 0.01
    horizon: float = 60.0
    seed: int = 0
    schema_version: int = SCHEMA_VERSION
    source_path: str | None = None


# ---------------------------------------------------------------------------
# body construction
# ---------------------------------------------------------------------------


def make_body(spec: dict):
    """Build a geometry body from its scenario table."""
    kind = spec.get("kind")
    if kind == "circle":
        return make_circle(float(spec["radius"]))
    if kind == "ellipse":
        return make_ellipse(float(spec["a"]), float(spec["b"]))
    if kind == "superellipse":
        return make_superellipse(float(spec["a"]), float(spec["b"]),
                                 int(spec["power"]))
    if kind == "circle_intersection":
        return make_circle_intersection(spec["centers"], spec["radii"])
    if kind == "polygon":
        return PolytopeBody.from_vertices(np.asarray(spec["vertices"],
                                                     dtype=float))
    if kind == "regular_polygon":
        n = int(spec["sides"])
        rad = float(spec["radius"])
        rot = float(spec.get("rotation", 0.0))
        ang = rot + 2.0 * np.pi * np.arange(n) / n
        verts = np.column_stack([rad * np.cos(ang), rad * np.sin(ang)])
        return PolytopeBody.from_vertices(verts)
    raise ValueError(f"unknown body kind {kind!r}")


# ---------------------------------------------------------------------------
# parsing and serialization
# ---------------------------------------------------------------------------


def parse_scenario(doc: dict, source_path: str | None = None) -> Scenario:
    version = int(doc.get("schema_version", -1))
    if version != SCHEMA_VERSION:
        raise ValueError(f"unsupported schema_version {version}; "
                         f"expected {SCHEMA_VERSION}")

    ctrl = doc.get("controller", {})
    params = NCBFParams(
        alpha=float(ctrl.get("alpha", 1.0)),
        eps=float(ctrl.get("eps", 1e-3)),
        eps1_sq=float(ctrl.get("eps1_sq", 0.1)),
        M=float(ctrl.get("M", 1e4)),
        enforcement_radius_sq=float(ctrl.get("enforcement_radius_sq",
                                             np.inf)),
        fast_path=bool(ctrl.get("fast_path", True)))

    sim = doc.get("sim", {})
    robots = []
    for tab in doc.get("robots", []):
        robots.append(RobotSpec(
            name=str(tab["name"]),
            dynamics=str(tab["dynamics"]),
            body=dict(tab["body"]),
            state=[float(v) for v in tab["state"]],
            goal=[float(v) for v in tab["goal"]],
            u_lb=[float(v) for v in tab["u_lb"]],
            u_ub=[float(v) for v in tab["u_ub"]],
            gains={k: float(v) for k, v in tab.get("gains", {}).items()},
            goal_tol=float(tab.get("goal_tol", 0.05))))

    return Scenario(
        name=str(doc.get("name", "unnamed")),
        robots=robots,
        params=params,
        dt=float(sim.get("dt", 0.01)),
        horizon=float(sim.get("horizon", 60.0)),
        seed=int(sim.get("seed", 0)),
        schema_version=version,
        source_path=source_path)


def load_scenario(path) -> Scenario:
    path = Path(path)
    with open(path, "rb") as fh:
        doc = tomllib.load(fh)
    return parse_scenario(doc, source_path=str(path.resolve()))


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        f = float(v)
        if np.isinf(f):
            return "inf" if f > 0 else "-inf"
        return repr(f)
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    raise TypeError(f"cannot serialize {type(v).__name__}")


def dump_scenario(scn: Scenario) -> str:
    """Serialize a scenario back to TOML text (round-trips all fields)."""
    lines = [
        f"schema_version = {scn.schema_version}",
        f"name = {_toml_value(scn.name)}",
        "",
        "[controller]",
        f"alpha = {_toml_value(scn.params.alpha)}",
        f"eps = {_toml_value(scn.params.eps)}",
        f"eps1_sq = {_toml_value(scn.params.eps1_sq)}",
        f"M = {_toml_value(scn.params.M)}",
        f"enforcement_radius_sq = "
        f"{_toml_value(scn.params.enforcement_radius_sq)}",
        f"fast_path = {_toml_value(scn.params.fast_path)}",
        "",
        "[sim]",
        f"dt = {_toml_value(scn.dt)}",
        f"horizon = {_toml_value(scn.horizon)}",
        f"seed = {_toml_value(scn.seed)}",
    ]
    for r in scn.robots:
        lines += [
            "",
            "[[robots]]",
            f"name = {_toml_value(r.name)}",
            f"dynamics = {_toml_value(r.dynamics)}",
            f"state = {_toml_value(r.state)}",
            f"goal = {_toml_value(r.goal)}",
            f"u_lb = {_toml_value(r.u_lb)}",
            f"u_ub = {_toml_value(r.u_ub)}",
            f"goal_tol = {_toml_value(r.goal_tol)}",
        ]
        if r.gains:
            pairs = ", ".join(f"{k} = {_toml_value(v)}"
                              for k, v in sorted(r.gains.items()))
            lines.append(f"gains = {{ {pairs} }}")
        lines.append("")
        lines.append("[robots.body]")
        for k, v in r.body.items():
            lines.append(f"{k} = {_toml_value(v)}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# validation and world construction
# ---------------------------------------------------------------------------


def _body_kind_class(kind: str) -> str:
    return ("polytope" if kind in ("polygon", "regular_polygon")
            else "strict")


def validate_scenario(scn: Scenario) -> list:
    """All invariant violations as human-readable strings (empty = valid)."""
    issues = []
    try:
        scn.params.validate()
    except ValueError as exc:
        issues.append(f"controller params: {exc}")
    if scn.dt <= 0 or scn.horizon <= 0:
        issues.append("sim: dt and horizon must be positive")

    names = [r.name for r in scn.robots]
    if len(set(names)) != len(names):
        issues.append("robots: duplicate names")

    classes = set()
    bodies = []
    for r in scn.robots:
        if r.dynamics not in _INPUT_DIM:
            issues.append(f"{r.name}: unknown dynamics {r.dynamics!r}")
            bodies.append(None)
            continue
        m = _INPUT_DIM[r.dynamics]
        if len(r.u_lb) != m or len(r.u_ub) != m:
            issues.append(f"{r.name}: input bounds must have length {m}")
        elif any(lo > hi for lo, hi in zip(r.u_lb, r.u_ub)):
            issues.append(f"{r.name}: empty input box")
        if len(r.state) != 3 or len(r.goal) != 3:
            issues.append(f"{r.name}: state and goal must have length 3")
        try:
            body = make_body(r.body)
        except (KeyError, ValueError, TypeError) as exc:
            issues.append(f"{r.name}: bad body spec ({exc})")
            bodies.append(None)
            continue
        bodies.append(body)
        classes.add(_body_kind_class(r.body["kind"]))
        if body.kind == "polytope":
            rep = verify_licq_vertices(body)
            if not rep.ok:
                issues.append(f"{r.name}: face normals linearly dependent "
                              f"at {len(rep.offending_vertices)} vertices")
    if len(classes) > 1:
        issues.append("robots: mixed strict and polytopic bodies "
                      "in one scenario")

    # every pair must start strictly outside the distance margin
    if not issues:
        for i in range(len(scn.robots)):
            for j in range(i + 1, len(scn.robots)):
                bi = BodyAtState.of(bodies[i],
                                    np.asarray(scn.robots[i].state))
                bj = BodyAtState.of(bodies[j],
                                    np.asarray(scn.robots[j].state))
                if bodies[i].kind == "polytope":
                    h = min_dist_polytope_dual(bi, bj)[0]
                else:
                    h = min_dist_strict(bi, bj).h
                if h <= scn.params.eps1_sq:
                    issues.append(
                        f"initial state unsafe: pair "
                        f"({scn.robots[i].name}, {scn.robots[j].name}) "
                        f"has h = {h:.4f} <= {scn.params.eps1_sq}")
    return issues


# ---------------------------------------------------------------------------
# shipped scenarios
# ---------------------------------------------------------------------------


def _ellipse_start_goal(k: int, n: int = 5):
    """Even angular spacing on the 15 m x 7.5 m ellipse, diametric goals."""
    a = np.pi / 2 + 2 * np.pi * k / n
    start = np.array([15.0 * np.cos(a), 7.5 * np.sin(a)])
    return start, -start


def shipped_strict_scenario() -> Scenario:
    """Five strictly convex robots: three integrators, two unicycles."""
    bodies = [
        {"kind": "superellipse", "a": 1.5, "b": 1.0, "power": 4},
        {"kind": "circle_intersection",
         "centers": [[0.6 * float(np.cos(np.pi / 2 + 2 * np.pi * k / 3)),
                      0.6 * float(np.sin(np.pi / 2 + 2 * np.pi * k / 3))]
                     for k in range(3)],
         "radii": [1.2, 1.2, 1.2]},
        {"kind": "circle_intersection",
         "centers": [[-0.75, 0.0], [0.75, 0.0]], "radii": [1.5, 1.5]},
        {"kind": "ellipse", "a": 1.5, "b": 1.0},
        {"kind": "superellipse", "a": 2.0, "b": 1.0, "power": 6},
    ]
    dyn = ["integrator"] * 3 + ["unicycle"] * 2
    robots = []
    for k in range(5):
        start, goal = _ellipse_start_goal(k)
        heading = float(np.arctan2(goal[1] - start[1], goal[0] - start[0]))
        if dyn[k] == "integrator":
            lb, ub = [-2.0, -2.0, -1.0], [2.0, 2.0, 1.0]
            gains = {"k_p": 0.5}
        else:
            lb, ub = [-2.0, -1.0], [2.0, 1.0]
            gains = {"k_alpha": 1.5, "k_beta": -0.3, "k_rho": 0.5}
        robots.append(RobotSpec(
            name=f"r{k}", dynamics=dyn[k], body=bodies[k],
            state=[float(start[0]), float(start[1]), heading],
            goal=[float(goal[0]), float(goal[1]), 0.0],
            u_lb=lb, u_ub=ub, gains=gains))
    return Scenario(name="strict-ellipse-5", robots=robots,
                    params=NCBFParams())


def shipped_polytope_scenario() -> Scenario:
    """Five convex polygons on integrator dynamics."""
    bodies = [
        {"kind": "regular_polygon", "sides": 4, "radius": 1.3,
         "rotation": float(np.pi / 4)},
        {"kind": "regular_polygon", "sides": 3, "radius": 1.2},
        {"kind": "regular_polygon", "sides": 5, "radius": 1.1},
        {"kind": "regular_polygon", "sides": 6, "radius": 1.0},
        {"kind": "polygon",
         "vertices": [[1.5, 0.8], [-1.5, 0.8], [-1.5, -0.8], [1.5, -0.8]]},
    ]
    robots = []
    for k in range(5):
        start, goal = _ellipse_start_goal(k)
        robots.append(RobotSpec(
            name=f"r{k}", dynamics="integrator", body=bodies[k],
            state=[float(start[0]), float(start[1]), 0.0],
            goal=[float(goal[0]), float(goal[1]), 0.0],
            u_lb=[-2.0, -2.0, -1.0], u_ub=[2.0, 2.0, 1.0],
            gains={"k_p": 0.5}))
    return Scenario(name="polytope-ellipse-5", robots=robots,
                    params=NCBFParams())


def build_world(scn: Scenario) -> World:
    """Instantiate the simulation world from a (validated) scenario."""
    robots = [RobotModel(
        name=r.name, dynamics=r.dynamics, body=make_body(r.body),
        state=np.asarray(r.state, dtype=float),
        goal=np.asarray(r.goal, dtype=float),
        u_lb=np.asarray(r.u_lb, dtype=float),
        u_ub=np.asarray(r.u_ub, dtype=float),
        gains=dict(r.gains), goal_tol=r.goal_tol) for r in scn.robots]
    return World(robots, scn.params)
