"""End-to-end transition planning: the flight-path-angle fixed point.

The path geometry prescribes an angle profile, but the closed-loop vehicle
achieves a slightly different one.  Each outer pass re-targets the profile
at the previously achieved angles, re-solves the energy allocation and the
tube stage against the updated targets, and stops when the achieved profile
reproduces its own target.  The maneuver is then read off the tube
midpoints, thrust is recovered from the virtual input, and the time axis
follows from integrating inverse speed along the path.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

from .conic import SolverSettings
from .dc import DCLookupTable, TableConfig, get_table
from .energy import EnergyProfile, assemble_p1, solve_p1
from .errors import DomainError, PlannerError, ScenarioError
from .path import PathGrid, build_grid
from .tube import (
    DEFAULT_REFIT_WINDOW,
    ConvergenceTrace,
    GuessTrajectory,
    TubeSolution,
    assemble_p2,
    initial_guess,
    lqr_gains,
    model_error_bound,
    model_rollout,
    propagate_energy,
    refit_steps,
    solve_p2,
    true_rollout,
    update_guess,
)
from .vehicle import (
    DEG,
    E_FLOOR,
    AircraftParams,
    effective_alpha,
    effective_velocity,
    params_from_mapping,
    reconstruct_thrust,
)

log = logging.getLogger(__name__)

# Speeds below this make the time integral along the path blow up.
V_FLOOR = math.sqrt(E_FLOOR)

# Effective angle of attack beyond which the wing is assumed stalled and the
# linear lift model no longer speaks for the vehicle.
ALPHA_E_LIMIT = 15.0 * DEG

# Allowed rollout exceedance beyond the tube (after inflating by the model
# error bound where that applies).
CONTAINMENT_TOL = 1e-6


@dataclass(frozen=True)
class BoundaryConditions:
    """Maneuver endpoints, all angles in radians."""

    V0: float
    Vf: float
    i0: float
    gamma0: float = 0.0
    Omega0: float = 0.0
    i_f: float | None = None


@dataclass(frozen=True)
class PlannerConfig:
    eps_outer: float = 1e-2
    max_outer: int = 3
    eps_inner: float = 1e-3
    max_inner: int = 3
    q_i: float = 1.0
    q_zeta: float = 1.0
    r: float = 1e-2
    refit_window: float = DEFAULT_REFIT_WINDOW
    table: TableConfig = TableConfig()


@dataclass(frozen=True)
class Scenario:
    """A fully resolved planning problem."""

    params: AircraftParams
    waypoints: np.ndarray
    N: int
    bc: BoundaryConditions
    drag_offset: float = 0.0
    cfg: PlannerConfig = PlannerConfig()

    def __post_init__(self):
        p = self.params
        bc = self.bc
        wp = np.asarray(self.waypoints, dtype=float)
        if wp.ndim != 2 or wp.shape[0] < 2 or wp.shape[1] != 2:
            raise ScenarioError("waypoints must be at least two (x, z) rows")
        object.__setattr__(self, "waypoints", wp)
        if self.N < 1:
            raise ScenarioError(f"N must be at least 1, got {self.N}")
        for name, V in (("V0", bc.V0), ("Vf", bc.Vf)):
            # zero speed would stop the march along the path entirely
            if not 0.0 < V <= p.V_max:
                raise ScenarioError(
                    f"{name} = {V} m/s outside (0, {p.V_max}] m/s"
                )
        if not p.iw_min <= bc.i0 <= p.iw_max:
            raise ScenarioError(f"i0 = {bc.i0} rad outside the tilt range")
        if bc.i_f is not None and not p.iw_min <= bc.i_f <= p.iw_max:
            raise ScenarioError(f"i_f = {bc.i_f} rad outside the tilt range")
        if not p.gamma_min <= bc.gamma0 <= p.gamma_max:
            raise ScenarioError(
                f"gamma0 = {bc.gamma0} rad outside the flight-path range"
            )
        if self.drag_offset < 0.0:
            raise ScenarioError("drag_offset must be nonnegative")


@dataclass(frozen=True)
class IterationCheck:
    """Containment audit for one inner iteration.

    model_excess is the worst exceedance of the decomposition-model rollout
    beyond the raw tube; true_excess is the worst exceedance of the exact
    rollout after crediting the tube with the accumulated model error
    bound.  Nonpositive values mean contained."""

    outer: int
    inner: int
    gamma_width: float
    iw_width: float
    objective: float
    model_excess: float
    true_excess: float
    inflation: float


@dataclass
class ValidationReport:
    """What the a-posteriori audit saw.

    The rollout excesses are measured against the raw stored tube and
    compared to containment_allowance: the accumulated model error bound
    plus half the widest tube row, since the stored columns are the tube
    midpoints rather than the solved program's linearization point."""

    max_alpha_e: float
    alpha_e_limit: float
    thrust_min: float
    thrust_max: float
    thrust_limit: float
    model_excess: float | None
    true_excess: float | None
    inflation: float | None
    containment_allowance: float | None
    altitude_excursion: float
    energy_gap: float
    warnings: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.warnings

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class Trajectory:
    """The planned maneuver sampled at the N+1 grid nodes.

    Node arrays all have length N+1; per-step quantities (tau, M) repeat
    their last entry so every column lines up.  The tube bound columns are
    None when the trajectory was loaded from storage without them."""

    t: np.ndarray
    s: np.ndarray
    x: np.ndarray
    z: np.ndarray
    V: np.ndarray
    E: np.ndarray
    gamma: np.ndarray
    gamma_star: np.ndarray
    i_w: np.ndarray
    zeta: np.ndarray
    alpha: np.ndarray
    alpha_e: np.ndarray
    T: np.ndarray
    tau: np.ndarray
    M: np.ndarray
    gamma_lo: np.ndarray | None = None
    gamma_hi: np.ndarray | None = None
    iw_lo: np.ndarray | None = None
    iw_hi: np.ndarray | None = None
    converged: bool = False
    outer_iterations: int = 0
    outer_residuals: list = field(default_factory=list)
    p1_objectives: list = field(default_factory=list)
    tube_objectives: list = field(default_factory=list)
    traces: list = field(default_factory=list)
    checks: list = field(default_factory=list)
    stalled: bool = False
    validation: ValidationReport | None = None

    @property
    def N(self) -> int:
        return len(self.t) - 1

    @property
    def has_tube(self) -> bool:
        return self.gamma_lo is not None


def map_to_time(V: np.ndarray, delta: np.ndarray) -> np.ndarray:
    """Arrival times at the grid nodes, t_k = sum of delta_j / V_j for j < k.

    The speed at the last node never enters (no step starts there)."""
    V = np.asarray(V, dtype=float)
    delta = np.asarray(delta, dtype=float)
    if len(V) != len(delta) + 1:
        raise DomainError(
            f"need {len(delta) + 1} node speeds for {len(delta)} spacings, "
            f"got {len(V)}"
        )
    if np.any(V[:-1] < V_FLOOR):
        k = int(np.argmax(V[:-1] < V_FLOOR))
        raise DomainError(
            f"speed {V[k]:.4g} m/s at node {k} is below the {V_FLOOR:g} m/s "
            "floor; the time integral diverges"
        )
    return np.concatenate(([0.0], np.cumsum(delta / V[:-1])))


def _exceedance(values: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> float:
    """Worst violation of lo <= values <= hi; nonpositive means contained."""
    return float(max(np.max(lo - values), np.max(values - hi)))


def _tube_excess(
    roll: GuessTrajectory,
    gamma_lo: np.ndarray,
    gamma_hi: np.ndarray,
    iw_lo: np.ndarray,
    iw_hi: np.ndarray,
) -> float:
    """Worst containment violation of a rollout against the raw tube."""
    return max(
        _exceedance(roll.gamma, gamma_lo, gamma_hi),
        _exceedance(roll.i_w, iw_lo, iw_hi),
    )


def _inner_loop(
    profile: EnergyProfile,
    grid: PathGrid,
    table: DCLookupTable,
    p: AircraftParams,
    cfg: PlannerConfig,
    bc: BoundaryConditions,
    settings: SolverSettings | None,
    outer: int,
    max_inner: int,
):
    """One tube stage with per-iteration containment audits."""
    guess = initial_guess(profile, grid, p, bc.i0, bc.gamma0, bc.Omega0)
    gains = lqr_gains(profile.E, grid.delta, p, cfg.q_i, cfg.q_zeta, cfg.r)
    trace = ConvergenceTrace()
    checks: list[IterationCheck] = []
    sol: TubeSolution | None = None
    stalled = False
    prev_widths = (math.inf, math.inf)
    for i in range(max_inner):
        program = assemble_p2(
            guess, profile, grid, table, gains, p,
            refit_window=cfg.refit_window, i_f=bc.i_f,
        )
        sol = solve_p2(program, settings)
        widths = (sol.gamma_width, sol.iw_width)
        trace.append(i, widths[0], widths[1], sol.objective, "optimal")
        refits = program.meta["refits"]
        roll = model_rollout(sol.M, guess, refits, profile, grid, p, gains)
        inflation = model_error_bound(refits, profile, grid, p)
        new_guess = update_guess(sol, guess, profile, grid, p, gains)
        checks.append(IterationCheck(
            outer=outer, inner=i,
            gamma_width=widths[0], iw_width=widths[1],
            objective=sol.objective,
            model_excess=_tube_excess(
                roll, sol.gamma_lo, sol.gamma_hi, sol.iw_lo, sol.iw_hi),
            true_excess=_tube_excess(
                new_guess, sol.gamma_lo, sol.gamma_hi,
                sol.iw_lo, sol.iw_hi) - inflation,
            inflation=inflation,
        ))
        if i > 0 and widths[0] >= prev_widths[0] and widths[1] >= prev_widths[1]:
            stalled = True
            log.warning(
                "tube widths stopped shrinking at outer %d inner %d "
                "(gamma %.3e, tilt %.3e)", outer, i, widths[0], widths[1])
        prev_widths = widths
        guess = new_guess
        if widths[0] <= cfg.eps_inner and widths[1] <= cfg.eps_inner:
            break
    return sol, guess, trace, checks, stalled


def run_algorithm1(
    scn: Scenario,
    table: DCLookupTable | None = None,
    settings: SolverSettings | None = None,
    cache: str | None = None,
) -> Trajectory:
    """Plan the maneuver: alternate energy allocation and tube refinement
    until the achieved flight-path angles reproduce their own target.

    With max_outer = 0 the energy stage still runs once and the initial
    guess is reconstructed as-is (collapsed tube, converged False)."""
    p = scn.params
    cfg = scn.cfg
    bc = scn.bc
    if table is None:
        table = get_table(p, cfg.table, cache)
    grid = build_grid(scn.waypoints, scn.N)
    gamma_target = grid.gamma_star.copy()
    rate_target = grid.gamma_star_rate.copy()

    converged = False
    stalled = False
    residuals: list[float] = []
    p1_objectives: list[float] = []
    tube_objectives: list[float] = []
    traces: list[ConvergenceTrace] = []
    checks: list[IterationCheck] = []
    outer = 0
    while True:
        grid_j = dataclasses.replace(
            grid, gamma_star=gamma_target, gamma_star_rate=rate_target)
        profile = solve_p1(
            assemble_p1(grid_j, p, bc.V0, bc.Vf, scn.drag_offset), settings)
        p1_objectives.append(profile.objective)
        max_inner = cfg.max_inner if cfg.max_outer > 0 else 0
        sol, guess, trace, its, st = _inner_loop(
            profile, grid_j, table, p, cfg, bc, settings, outer, max_inner)
        traces.append(trace)
        checks.extend(its)
        stalled = stalled or st
        if sol is not None:
            tube_objectives.append(sol.objective)
        if cfg.max_outer == 0:
            break
        outer += 1
        residual = float(np.max(np.abs(grid_j.gamma_star - guess.gamma)))
        residuals.append(residual)
        log.info("outer iteration %d: angle residual %.3e", outer, residual)
        if residual <= cfg.eps_outer:
            converged = True
            break
        if outer >= cfg.max_outer:
            log.warning(
                "outer loop stopped at the %d-iteration cap with residual "
                "%.3e", cfg.max_outer, residual)
            break
        gamma_target = guess.gamma.copy()
        rate_target = np.diff(guess.gamma) / grid.delta

    traj = _reconstruct(grid_j, profile, sol, guess, p)
    traj.converged = converged
    traj.outer_iterations = outer
    traj.outer_residuals = residuals
    traj.p1_objectives = p1_objectives
    traj.tube_objectives = tube_objectives
    traj.traces = traces
    traj.checks = checks
    traj.stalled = stalled
    traj.validation = validate(traj, scn, table)
    return traj


def _reconstruct(
    grid: PathGrid,
    profile: EnergyProfile,
    sol: TubeSolution | None,
    guess: GuessTrajectory,
    p: AircraftParams,
) -> Trajectory:
    """Read the maneuver off the tube midpoints and recover the physical
    inputs.  Midpoint angles keep alpha = i_w - gamma exact per node."""
    N = grid.N
    if sol is None:
        gamma_lo = gamma_hi = guess.gamma.copy()
        iw_lo = iw_hi = guess.i_w.copy()
        zeta = guess.zeta.copy()
        M_steps = guess.M
    else:
        # the solver honors the lo <= hi ordering only to feasibility
        # tolerance; publish ordered bounds so the midpoint sits inside
        gamma_lo = np.minimum(sol.gamma_lo, sol.gamma_hi)
        gamma_hi = np.maximum(sol.gamma_lo, sol.gamma_hi)
        iw_lo = np.minimum(sol.iw_lo, sol.iw_hi)
        iw_hi = np.maximum(sol.iw_lo, sol.iw_hi)
        zeta = sol.zeta
        M_steps = sol.M
    gamma = 0.5 * (gamma_lo + gamma_hi)
    i_w = 0.5 * (iw_lo + iw_hi)
    alpha = i_w - gamma

    E = profile.E
    V = np.sqrt(E)
    tau = np.append(profile.tau, profile.tau[-1])
    M = np.append(M_steps, M_steps[-1])
    T = np.empty(N + 1)
    alpha_e = np.empty(N + 1)
    for k in range(N + 1):
        T[k] = reconstruct_thrust(float(tau[k]), float(alpha[k]), p)
        V_e = effective_velocity(float(V[k]), float(T[k]), p)
        alpha_e[k] = effective_alpha(float(V[k]), V_e, float(alpha[k]))

    z = np.empty(N + 1)
    z[0] = grid.z[0]
    z[1:] = grid.z[0] + np.cumsum(-grid.delta * np.sin(gamma[:-1]))

    return Trajectory(
        t=map_to_time(V, grid.delta),
        s=grid.s.copy(),
        x=grid.x.copy(),
        z=z,
        V=V,
        E=E.copy(),
        gamma=gamma,
        gamma_star=grid.gamma_star.copy(),
        i_w=i_w,
        zeta=zeta.copy(),
        alpha=alpha,
        alpha_e=alpha_e,
        T=T,
        tau=tau,
        M=M,
        gamma_lo=gamma_lo.copy(),
        gamma_hi=gamma_hi.copy(),
        iw_lo=iw_lo.copy(),
        iw_hi=iw_hi.copy(),
    )


def validate(
    traj: Trajectory,
    scn: Scenario,
    table: DCLookupTable | None = None,
    cache: str | None = None,
) -> ValidationReport:
    """Audit a finished trajectory against the nonlinear model.

    Works from the stored columns alone so a trajectory reloaded from disk
    re-validates to the identical report.  Never raises on a bad maneuver;
    everything questionable lands in the warnings list."""
    p = scn.params
    cfg = scn.cfg
    grid = build_grid(scn.waypoints, scn.N)
    warnings: list[str] = []

    max_alpha_e = float(np.max(np.abs(traj.alpha_e)))
    if max_alpha_e > ALPHA_E_LIMIT:
        warnings.append(
            f"effective angle of attack reaches {max_alpha_e / DEG:.2f} deg, "
            f"beyond the {ALPHA_E_LIMIT / DEG:.0f} deg stall margin")
    thrust_min = float(np.min(traj.T))
    thrust_max = float(np.max(traj.T))
    if thrust_min < -1e-9 or thrust_max > p.T_max * (1.0 + 1e-9):
        warnings.append(
            f"thrust range [{thrust_min:.1f}, {thrust_max:.1f}] N leaves "
            f"[0, {p.T_max:.0f}] N")

    profile = EnergyProfile(
        E=traj.V ** 2, tau=traj.tau[:-1].copy(), objective=0.0)
    # the tilt rows satisfy i_{k+1} = i_k + delta_k zeta_k exactly and the
    # file contract carries no tilt-rate column, so re-derive the reference;
    # inline and from-file validation then agree bit for bit
    dzeta = np.diff(traj.i_w) / grid.delta
    zeta_ref = np.append(dzeta, dzeta[-1])
    repr_guess = GuessTrajectory(
        gamma=traj.gamma, i_w=traj.i_w, zeta=zeta_ref, M=traj.M[:-1])

    model_excess: float | None = None
    true_excess: float | None = None
    inflation: float | None = None
    allowance: float | None = None
    if traj.has_tube:
        if table is None:
            table = get_table(p, cfg.table, cache)
        gains = lqr_gains(profile.E, grid.delta, p, cfg.q_i, cfg.q_zeta, cfg.r)
        refits = refit_steps(
            repr_guess, profile, table, grid.N, cfg.refit_window)
        inflation = model_error_bound(refits, profile, grid, p)
        half_width = 0.5 * max(
            float(np.max(traj.gamma_hi - traj.gamma_lo)),
            float(np.max(traj.iw_hi - traj.iw_lo)))
        allowance = inflation + half_width + CONTAINMENT_TOL
        roll = model_rollout(
            traj.M[:-1], repr_guess, refits, profile, grid, p, gains)
        model_excess = _tube_excess(
            roll, traj.gamma_lo, traj.gamma_hi, traj.iw_lo, traj.iw_hi)
        if model_excess > allowance:
            warnings.append(
                f"decomposition rollout leaves the tube by {model_excess:.3e} "
                f"rad, allowance {allowance:.3e}")
        try:
            exact = true_rollout(
                traj.M[:-1], repr_guess, profile, grid, p, gains)
        except PlannerError as exc:
            true_excess = math.inf
            warnings.append(f"nonlinear rollout left the flight envelope: {exc}")
        else:
            true_excess = _tube_excess(
                exact, traj.gamma_lo, traj.gamma_hi, traj.iw_lo, traj.iw_hi)
            if true_excess > allowance:
                warnings.append(
                    f"nonlinear rollout leaves the tube by {true_excess:.3e} "
                    f"rad, allowance {allowance:.3e}")
    else:
        log.warning("trajectory has no tube columns; containment not checked")

    altitude_excursion = float(np.max(np.abs(traj.z - grid.z)))
    try:
        E_true = propagate_energy(repr_guess, profile, grid, p)
        energy_gap = float(
            np.max(np.abs(E_true - profile.E)) / np.max(profile.E))
    except PlannerError as exc:
        energy_gap = math.inf
        warnings.append(f"energy re-propagation failed: {exc}")

    return ValidationReport(
        max_alpha_e=max_alpha_e,
        alpha_e_limit=ALPHA_E_LIMIT,
        thrust_min=thrust_min,
        thrust_max=thrust_max,
        thrust_limit=p.T_max,
        model_excess=model_excess,
        true_excess=true_excess,
        inflation=inflation,
        containment_allowance=allowance,
        altitude_excursion=altitude_excursion,
        energy_gap=energy_gap,
        warnings=warnings,
    )


# -- scenario files --------------------------------------------------------------

BOUNDARY_PRESETS = {
    # file units: speeds m/s, angles deg, tilt rate deg/s
    "forward": {"V0": 0.5, "Vf": 40.0, "i0": 75.0, "gamma0": 0.0, "Omega0": 0.0},
    "backward": {"V0": 40.0, "Vf": 0.1, "i0": 0.0, "i_f": 90.0,
                 "gamma0": 1.6, "Omega0": 0.0},
}

VEHICLE_PRESETS = {
    "vahana": AircraftParams.vahana,
}

_PLANNER_KEYS = {
    "eps_outer": float, "max_outer": int, "eps_inner": float,
    "max_inner": int, "q_i": float, "q_zeta": float, "r": float,
    "refit_window": float,
}

_TABLE_KEYS = {
    "n_E": int, "n_tau": int, "degree": int, "samples": int,
    "fit_tol_rel": float,
}


def load_scenario(path) -> Scenario:
    """Parse a scenario file (TOML) into a ready-to-run Scenario.

    Sections: [vehicle] (a preset name or the full parameter set, file
    units), [path] (waypoints, N), [boundary] (preset and/or V0, Vf, i0,
    gamma0, Omega0, i_f; angles in degrees, explicit keys override the
    preset), [planner], [table], and a top-level drag_offset in kg/m."""
    return scenario_from_mapping(read_scenario_mapping(path))


def read_scenario_mapping(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ScenarioError(f"scenario file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ScenarioError(f"scenario file {path} is not valid TOML: {exc}") from exc


def normalize_scenario_mapping(raw: dict) -> dict:
    """Validate a scenario mapping and materialize every default, keeping
    all values in file units.

    The result re-ingests to the bit-identical Scenario, so it is what run
    manifests embed.  Normalizing twice is a no-op."""
    known = {"vehicle", "path", "boundary", "planner", "table", "drag_offset"}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ScenarioError(f"unknown scenario section(s): {', '.join(unknown)}")

    vehicle = dict(raw.get("vehicle", {"preset": "vahana"}))
    preset = vehicle.get("preset")
    if preset is not None:
        if len(vehicle) > 1:
            raise ScenarioError(
                "the vehicle section takes a preset or the full parameter "
                "set, not both")
        if preset not in VEHICLE_PRESETS:
            raise ScenarioError(f"unknown vehicle preset {preset!r}")

    path_sec = raw.get("path")
    if not path_sec or "waypoints" not in path_sec or "N" not in path_sec:
        raise ScenarioError("the path section needs waypoints and N")

    bc_sec = dict(raw.get("boundary", {}))
    bc_preset = bc_sec.pop("preset", None)
    boundary: dict = {"i0": 0.0, "gamma0": 0.0, "Omega0": 0.0}
    if bc_preset is not None:
        if bc_preset not in BOUNDARY_PRESETS:
            raise ScenarioError(f"unknown boundary preset {bc_preset!r}")
        boundary.update(BOUNDARY_PRESETS[bc_preset])
    boundary.update(bc_sec)
    bad = sorted(set(boundary) - {"V0", "Vf", "i0", "gamma0", "Omega0", "i_f"})
    if bad:
        raise ScenarioError(f"unknown boundary key(s): {', '.join(bad)}")
    if "V0" not in boundary or "Vf" not in boundary:
        raise ScenarioError("the boundary section needs V0 and Vf")

    defaults = PlannerConfig()
    planner = {
        name: getattr(defaults, name) for name in _PLANNER_KEYS}
    planner_sec = dict(raw.get("planner", {}))
    bad = sorted(set(planner_sec) - set(_PLANNER_KEYS))
    if bad:
        raise ScenarioError(f"unknown planner option(s): {', '.join(bad)}")
    planner.update(planner_sec)

    table_defaults = TableConfig()
    table = {name: getattr(table_defaults, name) for name in _TABLE_KEYS}
    table_sec = dict(raw.get("table", {}))
    bad = sorted(set(table_sec) - set(_TABLE_KEYS) - {"E_range", "tau_range"})
    if bad:
        raise ScenarioError(f"unknown table option(s): {', '.join(bad)}")
    table.update(table_sec)
    # the grid ranges default to vehicle-derived values at build time, so
    # they appear only when set explicitly
    for rng in ("E_range", "tau_range"):
        if rng in table and table[rng] is not None:
            lo, hi = table[rng]
            table[rng] = [float(lo), float(hi)]
        else:
            table.pop(rng, None)

    return {
        "vehicle": vehicle,
        "path": {
            "waypoints": [[float(x), float(z)] for x, z in
                          path_sec["waypoints"]],
            "N": int(path_sec["N"]),
        },
        "boundary": boundary,
        "planner": planner,
        "table": table,
        "drag_offset": float(raw.get("drag_offset", 0.0)),
    }


def scenario_from_mapping(raw: dict) -> Scenario:
    norm = normalize_scenario_mapping(raw)

    vehicle = dict(norm["vehicle"])
    preset = vehicle.pop("preset", None)
    if preset is not None:
        params = VEHICLE_PRESETS[preset]()
    else:
        try:
            params = params_from_mapping(vehicle)
        except DomainError as exc:
            raise ScenarioError(f"bad vehicle section: {exc}") from exc

    boundary = norm["boundary"]
    bc = BoundaryConditions(
        V0=float(boundary["V0"]),
        Vf=float(boundary["Vf"]),
        i0=float(boundary["i0"]) * DEG,
        gamma0=float(boundary["gamma0"]) * DEG,
        Omega0=float(boundary["Omega0"]) * DEG,
        i_f=float(boundary["i_f"]) * DEG if "i_f" in boundary else None,
    )

    cfg_kwargs = {k: _PLANNER_KEYS[k](v) for k, v in norm["planner"].items()}
    table_kwargs = {
        k: _TABLE_KEYS[k](v) for k, v in norm["table"].items()
        if k in _TABLE_KEYS}
    for rng in ("E_range", "tau_range"):
        if rng in norm["table"]:
            lo, hi = norm["table"][rng]
            table_kwargs[rng] = (float(lo), float(hi))
    cfg = PlannerConfig(table=TableConfig(**table_kwargs), **cfg_kwargs)

    return Scenario(
        params=params,
        waypoints=np.asarray(norm["path"]["waypoints"], dtype=float),
        N=norm["path"]["N"],
        bc=bc,
        drag_offset=norm["drag_offset"],
        cfg=cfg,
    )
