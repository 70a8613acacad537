"""Command-line interface: validate scenarios, run simulations, verify.

Exit codes: 0 success, 2 validation failure, 3 safety breach,
4 solver failure.  Artifact schemas:

trajectory.csv  one row per step per robot:
    step,t,robot,x,y,theta,u_nom_0,u_nom_1,u_nom_2,u_0,u_1,u_2
    (input columns beyond the robot's input dimension are empty)
pairs.csv       one row per step per pair:
    step,t,robot_i,robot_j,h,margin   (margin empty when not enforced)
summary.json    run metadata, results, and per-step timing statistics.
"""

from __future__ import annotations

import csv
import json
import sys
from pathlib import Path

import click
import numpy as np

from . import __version__
from .dynamics import step as world_step
from .scenario import (Scenario, build_world, dump_scenario, load_scenario,
                       validate_scenario)
from .verify import SUITES

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_BREACH = 3
EXIT_SOLVER = 4

TRAJECTORY_COLUMNS = ["step", "t", "robot", "x", "y", "theta",
                      "u_nom_0", "u_nom_1", "u_nom_2", "u_0", "u_1", "u_2"]
PAIR_COLUMNS = ["step", "t", "robot_i", "robot_j", "h", "margin"]


@click.group()
@click.version_option(__version__)
def main():
    """Collision-avoidance simulation with barrier-function safety filters."""


def _load(path: str) -> Scenario:
    try:
        return load_scenario(path)
    except Exception as exc:
        click.echo(f"error: cannot parse scenario: {exc}", err=True)
        sys.exit(EXIT_VALIDATION)


def _validate_or_exit(scn: Scenario) -> None:
    issues = validate_scenario(scn)
    if issues:
        click.echo(f"scenario {scn.name!r}: INVALID")
        for issue in issues:
            click.echo(f"  - {issue}")
        sys.exit(EXIT_VALIDATION)
    click.echo(f"scenario {scn.name!r}: OK "
               f"({len(scn.robots)} robots, dt={scn.dt}, "
               f"horizon={scn.horizon})")


@main.command()
@click.argument("path", type=click.Path(exists=True))
def validate(path):
    """Parse a scenario file and check its invariants."""
    _validate_or_exit(_load(path))


def _pad(values, width: int) -> list:
    out = [repr(float(v)) for v in values]
    return out + [""] * (width - len(out))


def _write_logs(scn: Scenario, world, records, out_dir: Path) -> dict:
    traj_path = out_dir / "trajectory.csv"
    pairs_path = out_dir / "pairs.csv"
    names = [r.name for r in world.robots]
    with open(traj_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRAJECTORY_COLUMNS)
        for k, rec in enumerate(records):
            for idx, name in enumerate(names):
                x, y, th = rec.states[idx]
                w.writerow([k, repr(float(rec.t)), name,
                            repr(float(x)), repr(float(y)), repr(float(th)),
                            *_pad(rec.u_nom[idx], 3), *_pad(rec.u[idx], 3)])
    with open(pairs_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(PAIR_COLUMNS)
        for k, rec in enumerate(records):
            for (i, j), h in sorted(rec.pair_h.items()):
                margin = rec.margins.get((i, j))
                w.writerow([k, repr(float(rec.t)), names[i], names[j],
                            repr(float(h)),
                            "" if margin is None else repr(float(margin))])
    return {"trajectory_csv": str(traj_path), "pairs_csv": str(pairs_path)}


@main.command()
@click.argument("path", type=click.Path(exists=True))
@click.option("--alpha", type=float, default=None,
              help="Override the barrier rate coefficient.")
@click.option("--dt", type=float, default=None,
              help="Override the control period [s].")
@click.option("--seed", type=int, default=None, help="Override the seed.")
@click.option("--out", "out_dir", type=click.Path(), default="out",
              help="Artifact directory.")
@click.option("--dry-run", is_flag=True, help="Validate only, do not run.")
def run(path, alpha, dt, seed, out_dir, dry_run):
    """Simulate a scenario and write trajectory/pair logs and a summary."""
    scn = _load(path)
    overrides = {}
    if alpha is not None:
        scn.params.alpha = alpha
        overrides["alpha"] = alpha
    if dt is not None:
        scn.dt = dt
        overrides["dt"] = dt
    if seed is not None:
        scn.seed = seed
        overrides["seed"] = seed
    _validate_or_exit(scn)
    if dry_run:
        return

    out_path = Path(out_dir)
    out_path.mkdir(parents=True, exist_ok=True)

    world = build_world(scn)
    n_steps = int(round(scn.horizon / scn.dt))
    records = []
    breach = False
    failures = 0
    for k in range(n_steps):
        rec = world_step(world, k * scn.dt, scn.dt)
        records.append(rec)
        if rec.fallback:
            failures += 1
        if rec.pair_h and min(rec.pair_h.values()) < scn.params.eps1_sq:
            breach = True
            click.echo(f"safety breach at t={rec.t:.3f}: "
                       f"h={min(rec.pair_h.values()):.4f}", err=True)
            break
    world.close()

    artifacts = _write_logs(scn, world, records, out_path)

    from .dynamics import TrajectoryLog
    log = TrajectoryLog(records=records, breach=breach,
                        solver_failures=failures)
    goal_dists = {r.name: r.distance_to_goal() for r in world.robots}
    summary = {
        "schema_version": 1,
        "scenario": {"name": scn.name, "file": scn.source_path},
        "overrides": overrides,
        "params": {
            "alpha": scn.params.alpha,
            "eps": scn.params.eps,
            "eps1_sq": scn.params.eps1_sq,
            "M": scn.params.M,
            "enforcement_radius_sq": scn.params.enforcement_radius_sq,
            "fast_path": scn.params.fast_path,
        },
        "sim": {"dt": scn.dt, "horizon": scn.horizon, "seed": scn.seed,
                "steps": len(records)},
        "robots": [{"name": r.name, "dynamics": r.dynamics,
                    "body": r.body, "state0": r.state, "goal": r.goal}
                   for r in scn.robots],
        "results": {
            "breach": breach,
            "solver_failures": failures,
            "min_pair_h": log.min_pair_h(),
            "goal_distances": goal_dists,
        },
        "timing": log.timing_summary(),
        "artifacts": artifacts,
    }
    summary_path = out_path / "summary.json"
    with open(summary_path, "w") as fh:
        json.dump(summary, fh, indent=2, default=float)
        fh.write("\n")

    t = summary["timing"]["total"]
    click.echo(f"{len(records)} steps, min h = {log.min_pair_h():.4f}, "
               f"failures = {failures}")
    click.echo(f"timing total: mean {t['mean_ms']:.1f} ms, "
               f"p50 {t['p50_ms']:.1f} ms, p99 {t['p99_ms']:.1f} ms, "
               f"max {t['max_ms']:.1f} ms")
    click.echo(f"artifacts in {out_path}/")
    if breach:
        sys.exit(EXIT_BREACH)
    if failures:
        sys.exit(EXIT_SOLVER)


@main.command()
@click.argument("suite", type=click.Choice(sorted(SUITES)))
def verify(suite):
    """Run a randomized property suite and report pass/fail."""
    result = SUITES[suite]()
    click.echo(result.summary())
    if not result.passed:
        sys.exit(EXIT_VALIDATION)


@main.command("dump-qp")
@click.argument("path", type=click.Path(exists=True))
@click.option("--step", "step_k", type=int, default=0,
              help="Step index whose filter programs to print.")
def dump_qp(path, step_k):
    """Print the aggregated filter QP(s) solved at one simulation step."""
    scn = _load(path)
    _validate_or_exit(scn)
    world = build_world(scn)

    captured = []
    from . import controller, qp

    def capture(prog, *args, **kwargs):
        captured.append(prog)
        return qp.solve_qp(prog, *args, **kwargs)

    original = controller.solve_qp
    controller.solve_qp = capture
    try:
        for k in range(step_k + 1):
            if k == step_k:
                captured.clear()
            world_step(world, k * scn.dt, scn.dt)
    finally:
        controller.solve_qp = original
        world.close()

    if not captured:
        click.echo(f"step {step_k}: no filter QP was solved "
                   "(nominal inputs already safe or no pairs enforced)")
        return
    with np.printoptions(precision=4, suppress=True, linewidth=120):
        for pos, prog in enumerate(captured):
            n = len(prog.f)
            n_eq = 0 if prog.A_eq is None else prog.A_eq.shape[0]
            n_in = 0 if prog.A_in is None else prog.A_in.shape[0]
            click.echo(f"step {step_k}, program {pos}: "
                       f"{n} variables, {n_eq} equalities, "
                       f"{n_in} inequalities")
            click.echo(f"H =\n{prog.H}")
            click.echo(f"f = {prog.f}")
            if n_eq:
                click.echo(f"A_eq =\n{prog.A_eq}\nb_eq = {prog.b_eq}")
            if n_in:
                click.echo(f"A_in =\n{prog.A_in}\nb_in = {prog.b_in}")
            if prog.lb is not None:
                click.echo(f"lb = {prog.lb}")
            if prog.ub is not None:
                click.echo(f"ub = {prog.ub}")


@main.command("dump-scenario")
@click.argument("path", type=click.Path(exists=True))
def dump_scenario_cmd(path):
    """Re-serialize a scenario (round-trip check and normalization)."""
    click.echo(dump_scenario(_load(path)), nl=False)


if __name__ == "__main__":
    main()
