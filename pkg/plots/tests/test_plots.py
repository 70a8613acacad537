"""Plots package: outlines, artifact loading, and figure rendering."""

import json
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

from convexavoid_plots.artifacts import load_artifacts
from convexavoid_plots.bodies import body_outline, transform_outline
from convexavoid_plots.cli import main
from convexavoid_plots.figures import plot_ncbf, plot_snapshots

TRAJ_HEADER = ("step,t,robot,x,y,theta,"
               "u_nom_0,u_nom_1,u_nom_2,u_0,u_1,u_2\n")
PAIR_HEADER = "step,t,robot_i,robot_j,h,margin\n"


def write_artifacts(tmp_path, n_steps=5, with_pairs=True):
    """Two-robot synthetic run with constant pairwise h."""
    scenario = """\
schema_version = 1
name = "synthetic"

[[robots]]
name = "a"
dynamics = "integrator"
state = [0.0, 0.0, 0.0]
goal = [4.0, 0.0, 0.0]
u_lb = [-2.0, -2.0, -1.0]
u_ub = [2.0, 2.0, 1.0]

[robots.body]
kind = "circle"
radius = 0.5

[[robots]]
name = "b"
dynamics = "integrator"
state = [6.0, 0.0, 0.0]
goal = [2.0, 0.0, 0.0]
u_lb = [-2.0, -2.0, -1.0]
u_ub = [2.0, 2.0, 1.0]

[robots.body]
kind = "ellipse"
a = 1.0
b = 0.5
"""
    scenario_file = tmp_path / "scenario.toml"
    scenario_file.write_text(scenario)

    traj = [TRAJ_HEADER]
    pairs = [PAIR_HEADER]
    for k in range(n_steps):
        t = 0.01 * k
        traj.append(f"{k},{t},a,{0.1 * k},0.0,0.0,1,0,0,1,0,0\n")
        traj.append(f"{k},{t},b,{6.0 - 0.1 * k},0.0,0.0,-1,0,0,-1,0,0\n")
        if with_pairs:
            pairs.append(f"{k},{t},a,b,9.0,\n")
    (tmp_path / "trajectory.csv").write_text("".join(traj))
    (tmp_path / "pairs.csv").write_text("".join(pairs))

    summary = {
        "schema_version": 1,
        "scenario": {"name": "synthetic", "file": str(scenario_file)},
        "params": {"eps1_sq": 0.1},
        "robots": [
            {"name": "a", "state0": [0.0, 0.0, 0.0],
             "goal": [4.0, 0.0, 0.0]},
            {"name": "b", "state0": [6.0, 0.0, 0.0],
             "goal": [2.0, 0.0, 0.0]},
        ],
        "artifacts": {
            "trajectory_csv": str(tmp_path / "trajectory.csv"),
            "pairs_csv": str(tmp_path / "pairs.csv"),
        },
    }
    summary_file = tmp_path / "summary.json"
    summary_file.write_text(json.dumps(summary))
    return summary_file


@pytest.mark.parametrize("body,check", [
    ({"kind": "circle", "radius": 0.7},
     lambda p: np.allclose(np.linalg.norm(p, axis=1), 0.7, atol=1e-9)),
    ({"kind": "ellipse", "a": 1.5, "b": 1.0},
     lambda p: np.allclose((p[:, 0] / 1.5) ** 2 + p[:, 1] ** 2, 1.0,
                           atol=1e-9)),
    ({"kind": "superellipse", "a": 1.5, "b": 1.0, "power": 4},
     lambda p: np.allclose(np.abs(p[:, 0] / 1.5) ** 4
                           + np.abs(p[:, 1]) ** 4, 1.0, atol=1e-9)),
])
def test_outline_points_on_level_set(body, check):
    outline = body_outline(body, n=64)
    assert check(outline[:-1])
    assert np.allclose(outline[0], outline[-1])


def test_circle_intersection_outline_inside_both_circles():
    body = {"kind": "circle_intersection",
            "centers": [[-0.5, 0.0], [0.5, 0.0]], "radii": [1.0, 1.0]}
    outline = body_outline(body, n=64)[:-1]
    d_left = np.linalg.norm(outline - [-0.5, 0.0], axis=1)
    d_right = np.linalg.norm(outline - [0.5, 0.0], axis=1)
    assert np.all(np.maximum(d_left, d_right) <= 1.0 + 1e-8)
    assert np.allclose(np.minimum.reduce([d_left, d_right]) <= 1.0, True)


def test_polygon_outline_closed_and_ordered():
    body = {"kind": "polygon",
            "vertices": [[1, 1], [-1, 1], [1, -1], [-1, -1]]}
    outline = body_outline(body)
    assert outline.shape == (5, 2)
    assert np.allclose(outline[0], outline[-1])
    # shoelace area of the ordered outline must match the square
    x, y = outline[:-1, 0], outline[:-1, 1]
    area = 0.5 * abs(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))
    assert np.isclose(area, 4.0)


def test_transform_outline_rotates_and_translates():
    outline = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]])
    moved = transform_outline(outline, (2.0, 3.0, np.pi / 2))
    assert np.allclose(moved[0], [2.0, 4.0])
    assert np.allclose(moved[1], [1.0, 3.0])


def test_load_artifacts_and_series(tmp_path):
    artifacts = load_artifacts(write_artifacts(tmp_path))
    assert artifacts.eps1_sq == 0.1
    assert artifacts.robot_names == ["a", "b"]
    series = artifacts.pair_series()
    t, h = series[("a", "b")]
    assert len(t) == 5
    assert np.allclose(h, 9.0)
    poses = artifacts.poses_at(0.02)
    assert np.isclose(poses["a"][0], 0.2)


def test_missing_columns_rejected(tmp_path):
    summary_file = write_artifacts(tmp_path)
    (tmp_path / "trajectory.csv").write_text("step,t,robot\n")
    with pytest.raises(ValueError, match="missing columns"):
        load_artifacts(summary_file)


def test_constant_h_renders_flat_line(tmp_path):
    artifacts = load_artifacts(write_artifacts(tmp_path))
    out = plot_ncbf(artifacts, tmp_path / "ncbf.png")
    assert out.exists() and out.stat().st_size > 0


def test_empty_pair_set_renders_margin_only(tmp_path):
    artifacts = load_artifacts(write_artifacts(tmp_path, with_pairs=False))
    out = plot_ncbf(artifacts, tmp_path / "ncbf.png")
    assert out.exists()


def test_snapshot_panels(tmp_path):
    artifacts = load_artifacts(write_artifacts(tmp_path))
    out = plot_snapshots(artifacts, [0.0, 0.02, 0.04],
                         tmp_path / "snap.png")
    assert out.exists() and out.stat().st_size > 0


def test_cli_end_to_end(tmp_path):
    summary_file = write_artifacts(tmp_path)
    runner = CliRunner()
    res = runner.invoke(main, [str(summary_file),
                               "--snapshots", "0.0,0.04",
                               "--out", str(tmp_path / "figs")])
    assert res.exit_code == 0, res.output
    assert (tmp_path / "figs" / "snapshots.png").exists()
    assert (tmp_path / "figs" / "ncbf.png").exists()


def test_cli_rejects_bad_snapshot_list(tmp_path):
    summary_file = write_artifacts(tmp_path)
    res = CliRunner().invoke(main, [str(summary_file),
                                    "--snapshots", "zero,one"])
    assert res.exit_code != 0
