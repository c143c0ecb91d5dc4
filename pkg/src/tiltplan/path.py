"""Path discretization and prescribed flight-path-angle geometry.

A maneuver is planned along a prescribed planar path given as waypoints in
the vertical plane, with z positive downward.  The path is arc-length
parameterized and resampled on a uniform grid; every optimization stage
works on that grid.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import DegeneratePathError, DomainError, UnsupportedPathError


@dataclass(frozen=True)
class PathGrid:
    """Uniform arc-length discretization of a planar path.

    s, x, z have length N+1 and delta length N.  The prescribed angle and
    its rate are filled by with_angles; geometry-only grids carry None so
    that paths with degenerate segments can still be measured.
    """

    s: np.ndarray
    x: np.ndarray
    z: np.ndarray
    delta: np.ndarray
    gamma_star: np.ndarray | None = None       # length N+1, last entry repeated
    gamma_star_rate: np.ndarray | None = None  # length N

    @property
    def N(self) -> int:
        return len(self.delta)

    @property
    def length(self) -> float:
        return float(self.s[-1])


def discretize_path(waypoints, N: int) -> PathGrid:
    """Resample a piecewise-linear waypoint path at N+1 uniform abscissae.

    Returns a geometry-only grid; combine with with_angles for the full
    planning grid.
    """
    pts = np.asarray(waypoints, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
        raise DegeneratePathError("need at least two (x, z) waypoints")
    if N < 1:
        raise DomainError("N must be at least 1")
    seg = np.hypot(np.diff(pts[:, 0]), np.diff(pts[:, 1]))
    if np.any(seg <= 0.0):
        raise DegeneratePathError("coincident consecutive waypoints")
    cum = np.concatenate(([0.0], np.cumsum(seg)))
    s = np.linspace(0.0, cum[-1], N + 1)
    # linear interpolation in arc length is exact on a piecewise-linear path
    x = np.interp(s, cum, pts[:, 0])
    z = np.interp(s, cum, pts[:, 1])
    return PathGrid(s=s, x=x, z=z, delta=np.diff(s))


def flight_path_angle(x, z) -> np.ndarray:
    """Prescribed flight-path angle per grid segment, extended to N+1.

    Climb is positive while z grows downward, so each segment contributes
    arctan(-dz/dx).  The last value is repeated so the array indexes like
    the node arrays.
    """
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    dx = np.diff(x)
    dz = np.diff(z)
    if np.any(dx <= 0.0):
        raise UnsupportedPathError(
            "path must progress forward in x; vertical or reversing segments "
            "put the prescribed angle outside (-pi/2, pi/2)"
        )
    gamma = np.arctan2(-dz, dx)
    return np.concatenate((gamma, gamma[-1:]))


def flight_path_rate(gamma_star_seg, delta) -> np.ndarray:
    """Forward-difference rate of the per-segment prescribed angle.

    The final entry copies the previous one, so the result has the same
    length as the input angle sequence.
    """
    g = np.asarray(gamma_star_seg, dtype=float)
    d = np.asarray(delta, dtype=float)
    if len(g) < 2:
        return np.zeros_like(g)
    if len(d) < len(g) - 1:
        raise DomainError("need a spacing for every angle difference")
    rate = np.diff(g) / d[: len(g) - 1]
    return np.concatenate((rate, rate[-1:]))


def with_angles(grid: PathGrid) -> PathGrid:
    """Fill gamma_star and gamma_star_rate on a geometry-only grid."""
    gamma = flight_path_angle(grid.x, grid.z)
    rate = flight_path_rate(gamma[:-1], grid.delta)
    return replace(grid, gamma_star=gamma, gamma_star_rate=rate)


def build_grid(waypoints, N: int) -> PathGrid:
    """Discretize a waypoint path and attach the prescribed-angle fields."""
    return with_angles(discretize_path(waypoints, N))
