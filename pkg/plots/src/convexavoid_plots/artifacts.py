"""Loading and indexing of one simulation run's output files."""

from __future__ import annotations

import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


@dataclass
class RunArtifacts:
    """One run: summary metadata, per-step logs, and the scenario."""

    summary: dict
    trajectory: pd.DataFrame
    pairs: pd.DataFrame
    scenario: dict

    @property
    def eps1_sq(self) -> float:
        return float(self.summary["params"]["eps1_sq"])

    @property
    def robot_names(self) -> list:
        return [r["name"] for r in self.summary["robots"]]

    def robot_spec(self, name: str) -> dict:
        for r in self.scenario.get("robots", []):
            if r["name"] == name:
                return r
        raise KeyError(f"robot {name!r} not in scenario file")

    def times(self) -> np.ndarray:
        return np.sort(self.trajectory["t"].unique())

    def poses_at(self, t: float) -> dict:
        """name -> (x, y, theta) at the log step closest to t."""
        times = self.times()
        nearest = float(times[np.argmin(np.abs(times - t))])
        rows = self.trajectory[self.trajectory["t"] == nearest]
        return {row["robot"]: (row["x"], row["y"], row["theta"])
                for _, row in rows.iterrows()}

    def pair_series(self) -> dict:
        """(name_i, name_j) -> (t, h) arrays."""
        out = {}
        if self.pairs.empty:
            return out
        for (ri, rj), grp in self.pairs.groupby(["robot_i", "robot_j"]):
            out[(ri, rj)] = (grp["t"].to_numpy(), grp["h"].to_numpy())
        return out


def _resolve(path_str: str, base: Path) -> Path:
    path = Path(path_str)
    if path.exists():
        return path
    candidate = base / path.name
    if candidate.exists():
        return candidate
    raise FileNotFoundError(path_str)


def load_artifacts(summary_path) -> RunArtifacts:
    summary_path = Path(summary_path)
    with open(summary_path) as fh:
        summary = json.load(fh)
    base = summary_path.parent
    traj = pd.read_csv(_resolve(summary["artifacts"]["trajectory_csv"],
                                base))
    pairs = pd.read_csv(_resolve(summary["artifacts"]["pairs_csv"], base))
    required = {"step", "t", "robot", "x", "y", "theta"}
    missing = required - set(traj.columns)
    if missing:
        raise ValueError(f"trajectory CSV missing columns {sorted(missing)}")
    required = {"step", "t", "robot_i", "robot_j", "h"}
    missing = required - set(pairs.columns)
    if missing:
        raise ValueError(f"pairs CSV missing columns {sorted(missing)}")

    scenario_file = summary.get("scenario", {}).get("file")
    scenario = {}
    if scenario_file:
        try:
            with open(_resolve(scenario_file, base), "rb") as fh:
                scenario = tomllib.load(fh)
        except FileNotFoundError:
            scenario = {}
    return RunArtifacts(summary=summary, trajectory=traj, pairs=pairs,
                        scenario=scenario)
