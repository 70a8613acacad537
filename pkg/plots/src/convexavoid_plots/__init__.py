"""Post-processing figures for convexavoid simulation runs.

Reads the CLI's CSV/JSON artifacts plus the scenario file and renders
trajectory snapshots with body outlines and pairwise squared-distance
curves against the safety margin.
"""

__version__ = "0.1.0"
