"""Scenario parsing, validation, and serialization round-trips."""

from pathlib import Path

import numpy as np
import pytest

from convexavoid.scenario import (RobotSpec, Scenario, build_world,
                                  dump_scenario, load_scenario, make_body,
                                  parse_scenario, shipped_polytope_scenario,
                                  shipped_strict_scenario, validate_scenario)
from convexavoid.controller import NCBFParams

SCENARIO_DIR = Path(__file__).resolve().parent.parent / "scenarios"

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib


def two_squares(offset):
    body = {"kind": "polygon",
            "vertices": [[1.0, 1.0], [-1.0, 1.0], [-1.0, -1.0], [1.0, -1.0]]}
    robots = [
        RobotSpec("a", "integrator", dict(body), [0.0, 0.0, 0.0],
                  [5.0, 0.0, 0.0], [-2.0] * 3, [2.0] * 3, {"k_p": 0.5}),
        RobotSpec("b", "integrator", dict(body), [offset, 0.0, 0.0],
                  [-5.0, 0.0, 0.0], [-2.0] * 3, [2.0] * 3, {"k_p": 0.5}),
    ]
    return Scenario("squares", robots, NCBFParams())


def test_shipped_files_match_builders():
    for builder, fname in [(shipped_strict_scenario, "strict_ellipse.toml"),
                           (shipped_polytope_scenario,
                            "polytope_ellipse.toml")]:
        loaded = load_scenario(SCENARIO_DIR / fname)
        loaded.source_path = None
        assert loaded == builder()


def test_shipped_scenarios_valid():
    assert validate_scenario(shipped_strict_scenario()) == []
    assert validate_scenario(shipped_polytope_scenario()) == []


def test_round_trip_identity():
    for scn in (shipped_strict_scenario(), shipped_polytope_scenario(),
                two_squares(5.0)):
        again = parse_scenario(tomllib.loads(dump_scenario(scn)))
        assert again == scn


def test_unknown_schema_version_rejected():
    with pytest.raises(ValueError, match="schema_version"):
        parse_scenario({"schema_version": 99, "robots": []})


def test_overlapping_initial_squares_invalid():
    issues = validate_scenario(two_squares(1.0))
    assert any("initial state unsafe" in s for s in issues)


def test_duplicated_polytope_face_fails_licq():
    scn = two_squares(6.0)
    # a duplicated vertex row is fine, but a repeated face is not
    body = make_body(scn.robots[0].body)
    import convexavoid.scenario as scenario_mod

    orig = scenario_mod.make_body

    def degenerate(spec):
        b = orig(spec)
        if spec["kind"] == "polygon":
            b = type(b)(np.vstack([b.A0, b.A0[0]]),
                        np.concatenate([b.b0, [b.b0[0]]]))
        return b

    scenario_mod.make_body = degenerate
    try:
        issues = validate_scenario(scn)
    finally:
        scenario_mod.make_body = orig
    assert any("linearly dependent" in s for s in issues)
    assert body.num_constraints == 4


def test_mixed_body_kinds_invalid():
    scn = two_squares(6.0)
    scn.robots[1].body = {"kind": "circle", "radius": 0.8}
    issues = validate_scenario(scn)
    assert any("mixed" in s for s in issues)


def test_bad_dynamics_and_bounds_reported():
    scn = two_squares(6.0)
    scn.robots[0].dynamics = "hovercraft"
    scn.robots[1].u_lb = [1.0, 1.0, 1.0]
    scn.robots[1].u_ub = [-1.0, -1.0, -1.0]
    issues = validate_scenario(scn)
    assert any("unknown dynamics" in s for s in issues)
    assert any("empty input box" in s for s in issues)


def test_regular_polygon_builder():
    body = make_body({"kind": "regular_polygon", "sides": 6, "radius": 1.0})
    assert body.num_constraints == 6
    verts = body.vertices()
    assert np.allclose(np.linalg.norm(verts, axis=1), 1.0, atol=1e-9)


def test_build_world_matches_specs():
    world = build_world(shipped_strict_scenario())
    assert [r.name for r in world.robots] == [f"r{k}" for k in range(5)]
    assert world.kind == "strict"
    world_p = build_world(shipped_polytope_scenario())
    assert world_p.kind == "polytope"
