"""Energy allocation along the path, solved as a linear program.

The speed dynamics become affine in the squared speed E = V^2 once thrust
enters through the virtual input, so the minimum-energy profile over the
prescribed path is a plain LP: march E with the affine drag model, bound
acceleration and inputs, pin the endpoints.

An optional reachability row keeps the LP away from profiles whose virtual
input is too small to balance gravity at low energy.  The LP itself would
happily glide at tiny tau where no force equilibrium exists and the later
stages would inherit a guess that cannot hover; the secant row is a sound
outer bound on the minimum balancing input (see tests for the certificate).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import cvxpy as cp
import numpy as np

from .conic import (
    STATUS_INFEASIBLE,
    STATUS_OPTIMAL,
    ConeProgram,
    SolverSettings,
    solve,
)
from .dc import ALPHA_FIT_DOMAIN
from .errors import ScenarioError, StageError
from .path import PathGrid
from .vehicle import AircraftParams, f_dynamics

#: Multiplier on the sampled minimum balancing input when building the
#: reachability secant; covers sampling slack.
REACHABILITY_MARGIN = 1.05


@dataclass(frozen=True)
class EnergyProfile:
    """Squared-speed profile and virtual input along the grid."""

    E: np.ndarray          # length N+1 [m^2/s^2]
    tau: np.ndarray        # length N [N]
    objective: float       # normalized energy cost [-]


def coefficients_c_d(gamma_star, gamma_star_rate, p: AircraftParams, drag_offset: float = 0.0):
    """Affine drag-model coefficients: tau = c E + d holds E constant.

    c carries the parasitic drag slope plus the prescribed-rate coupling;
    d is the gravity component along the path.  drag_offset models an
    auxiliary drag device as a constant addition to c.
    """
    gamma_star = np.asarray(gamma_star, dtype=float)
    gamma_star_rate = np.asarray(gamma_star_rate, dtype=float)
    c = (
        p.lam * p.m * gamma_star_rate
        + 0.5 * p.rho * p.S * (p.a0 - p.lam * p.b0)
        + drag_offset
    )
    d = p.weight * (np.sin(gamma_star) + p.lam * np.cos(gamma_star))
    return c, d


def reachability_floor(
    E: float,
    target: float,
    p: AircraftParams,
    alpha_domain: tuple[float, float] = ALPHA_FIT_DOMAIN,
    n_alpha: int = 241,
) -> float:
    """Smallest virtual input whose best-alpha normal force reaches target."""
    alphas = np.linspace(alpha_domain[0], alpha_domain[1], n_alpha)

    def best(tau: float) -> float:
        return max(f_dynamics(float(a), E, tau, p) for a in alphas)

    if best(0.0) >= target:
        return 0.0
    hi = p.T_max
    while best(hi) < target:
        hi *= 2.0
        if hi > 1e7:
            return hi
    lo = 0.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if best(mid) >= target:
            hi = mid
        else:
            lo = mid
    return hi


def zero_thrust_balance_energy(p: AircraftParams, alpha_domain=ALPHA_FIT_DOMAIN) -> float:
    """Energy above which gravity balances on lift alone somewhere in the
    alpha window; the unpowered force is linear in E so this is closed form."""
    lift_slope = 0.5 * p.rho * p.S * (p.b1 * alpha_domain[1] + p.b0)
    return p.weight / lift_slope


def reachability_cut_lines(E_lb: float, p: AircraftParams, n_knots: int = 13):
    """Facets of the least convex majorant of the margin-scaled floor.

    Rows must be affine, so their pointwise max is convex; the floor is
    convex at low energy but drops off a cliff near the unpowered balance
    energy, where any chord would dip under it.  Sample the floor at knots
    clustered toward the cliff and keep consecutive chords only while their
    slopes are non-decreasing: that prefix is the convex part, and the last
    facet extended majorizes the cliff on its own.  Returns an (L, 2) array
    of (intercept, slope) for rows tau >= intercept + slope * E, or None
    when the floor vanishes over the whole window.
    """
    E_star = zero_thrust_balance_energy(p)
    if E_lb >= E_star:
        return None
    knots = E_star - (E_star - E_lb) * np.linspace(1.0, 0.0, n_knots) ** 2
    vals = np.array(
        [REACHABILITY_MARGIN * reachability_floor(float(E), p.weight, p) for E in knots]
    )
    if vals[0] <= 0.0:
        return None
    lines: list[tuple[float, float]] = []
    prev = -np.inf
    for j in range(n_knots - 1):
        slope = (vals[j + 1] - vals[j]) / (knots[j + 1] - knots[j])
        if slope < prev:
            break
        slope = min(slope, 0.0)
        lines.append((vals[j] - slope * knots[j], slope))
        prev = slope
    return np.array(lines)


def assemble_p1(
    grid: PathGrid,
    p: AircraftParams,
    V0: float,
    Vf: float,
    drag_offset: float = 0.0,
    reachability_cut: bool = True,
) -> ConeProgram:
    """Pose the energy LP on the given grid.

    Row counts: N dynamics equalities, 2N acceleration, 2N input box,
    2(N+1) energy box, 2 boundary pins, plus N reachability rows when the
    cut is enabled and the energy floor sits below the unpowered-balance
    energy.
    """
    if grid.gamma_star is None or grid.gamma_star_rate is None:
        raise ScenarioError("grid is missing prescribed-angle fields")
    for name, V in (("V0", V0), ("Vf", Vf)):
        if not p.V_min <= V <= p.V_max:
            raise ScenarioError(f"{name}={V} outside speed box [{p.V_min}, {p.V_max}]")

    N = grid.N
    delta = grid.delta
    c, d = coefficients_c_d(grid.gamma_star[:-1], grid.gamma_star_rate, p, drag_offset)
    E_lb = min(V0**2, Vf**2)
    P_bar = p.T_max * p.V_max

    prog = ConeProgram("energy-stage")
    E = prog.variable("E", N + 1)
    tau = prog.variable("tau", N)

    # minimize sum tau_k delta_k; the P_bar normalization is applied to the
    # reported objective afterwards, keeping the solved cost O(1) per row
    # (the normalized coefficients are small enough to stall the solver in
    # the near-degenerate interior of this LP)
    prog.minimize(delta @ tau)
    step = 2.0 * delta / p.m
    prog.subject_to(
        E[1:] == E[:-1] + cp.multiply(step, tau - cp.multiply(c, E[:-1]) - d),
        E[1:] - E[:-1] >= 2.0 * delta * p.a_min,
        E[1:] - E[:-1] <= 2.0 * delta * p.a_max,
        tau >= 0.0,
        tau <= p.T_max,
        E >= E_lb,
        E <= p.V_max**2,
        E[0] == V0**2,
        E[N] == Vf**2,
    )
    rows = {
        "dynamics": N,
        "acceleration": 2 * N,
        "input_box": 2 * N,
        "energy_box": 2 * (N + 1),
        "boundary": 2,
    }

    lines = reachability_cut_lines(E_lb, p) if reachability_cut else None
    if lines is not None:
        scale = np.cos(grid.gamma_star[:-1])
        for intercept, slope in lines:
            prog.subject_to(tau >= cp.multiply(scale, intercept + slope * E[:-1]))
        rows["reachability"] = len(lines) * N

    prog.rows = rows
    prog.meta = {
        "grid": grid, "p": p, "V0": V0, "Vf": Vf,
        "c": c, "d": d, "E_lb": E_lb, "drag_offset": drag_offset,
        "P_bar": P_bar,
    }
    return prog


def solve_p1(program: ConeProgram, settings: SolverSettings | None = None) -> EnergyProfile:
    """Solve the energy LP; infeasibility reports the closed-form length need."""
    meta = program.meta
    p: AircraftParams = meta["p"]
    grid: PathGrid = meta["grid"]
    report = solve(program, settings)
    if report.status == STATUS_INFEASIBLE:
        need = max(
            (meta["Vf"] ** 2 - meta["V0"] ** 2) / (2.0 * p.a_max),
            (meta["V0"] ** 2 - meta["Vf"] ** 2) / (-2.0 * p.a_min),
        )
        if need > grid.length:
            detail = (
                f"the acceleration bound needs at least {need:.1f} m of "
                f"path, got {grid.length:.1f} m"
            )
        else:
            detail = "no speed profile satisfies the input and acceleration bounds"
        raise StageError("energy", f"no feasible speed profile: {detail}")
    if report.status != STATUS_OPTIMAL:
        raise StageError("energy", f"solver returned {report.status}")

    E = np.clip(report.primal["E"], 0.0, p.V_max**2)
    tau = np.clip(report.primal["tau"], 0.0, p.T_max)
    objective = float(report.objective_value) / meta["P_bar"]
    return EnergyProfile(E=E, tau=tau, objective=objective)


def profile_residual(profile: EnergyProfile, grid: PathGrid, p: AircraftParams,
                     c: np.ndarray, d: np.ndarray) -> np.ndarray:
    """Per-step defect of the E recursion, for validation."""
    E, tau, delta = profile.E, profile.tau, grid.delta
    return E[1:] - E[:-1] - (2.0 * delta / p.m) * (tau - c * E[:-1] - d)


def dump_profile(profile: EnergyProfile, grid: PathGrid, path) -> None:
    """Write s, E, tau columns as delimited text."""
    with open(path, "w") as handle:
        handle.write("s\tE\ttau\n")
        for k in range(grid.N):
            handle.write(f"{grid.s[k]:.9g}\t{profile.E[k]:.9g}\t{profile.tau[k]:.9g}\n")
        handle.write(f"{grid.s[-1]:.9g}\t{profile.E[-1]:.9g}\t\n")
