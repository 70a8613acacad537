"""Collision avoidance between convex robot bodies.

Distance QPs with full KKT data, sensitivity of the minimum distance to
robot states, and barrier-function safety filters built on top of them.
"""

__version__ = "0.1.0"
