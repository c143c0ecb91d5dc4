"""Vehicle parameters and longitudinal dynamics of a tilting-wing aircraft.

The aerodynamic model folds the propeller wake into an effective airspeed
seen by the wing, and folds thrust together with its induced lift and drag
projections into a single virtual input that keeps the speed dynamics
affine.  All angles are radians internally; parameter files use degrees at
the boundary, including the per-degree lift and drag slopes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from pathlib import Path

from .errors import (
    DegenerateEnergyError,
    DegenerateStateError,
    DomainError,
    SingularReconstructionError,
)

DEG = math.pi / 180.0

#: Kinetic-energy guard floor [m^2/s^2].  The path-domain dynamics divide by
#: E, so states at or below this floor are rejected rather than clamped.
E_FLOOR = 1e-2

#: Default guard on the thrust-reconstruction divisor.
EPS_DEN = 1e-6

# Fields stored as angles: degrees in files, radians in memory.
_ANGLE_FIELDS = ("alpha_min", "alpha_max", "gamma_min", "gamma_max", "iw_min", "iw_max")
# Aerodynamic slopes given per degree (per degree squared for a2).
_SLOPE_FIELDS = {"a1": 1, "b1": 1, "a2": 2}


@dataclass(frozen=True)
class AircraftParams:
    """Physical constants of the vehicle, SI units, angles in radians."""

    m: float            # mass [kg]
    g: float            # gravity [m/s^2]
    S: float            # wing reference area [m^2]
    A: float            # single propeller disk area [m^2]
    J_w: float          # wing tilt inertia [kg m^2]
    rho: float          # air density [kg/m^3]
    n: int              # number of propellers
    a0: float           # drag polar offset [-]
    a1: float           # drag slope [1/rad]
    a2: float           # quadratic drag curvature [1/rad^2]
    b0: float           # lift offset [-]
    b1: float           # lift slope [1/rad]
    T_max: float        # thrust ceiling [N]
    M_min: float        # tilt torque box [N m]
    M_max: float
    alpha_min: float    # angle-of-attack box [rad]
    alpha_max: float
    gamma_min: float    # flight-path-angle box [rad]
    gamma_max: float
    iw_min: float       # wing tilt box [rad]
    iw_max: float
    a_min: float        # longitudinal acceleration box [m/s^2]
    a_max: float
    V_min: float        # speed box [m/s]
    V_max: float

    def __post_init__(self):
        if min(self.m, self.S, self.A, self.J_w, self.rho, self.b1) <= 0 or self.n < 1:
            raise DomainError("nonphysical vehicle parameters")
        if not -math.pi / 2 <= self.gamma_min < self.gamma_max <= math.pi / 2:
            raise DomainError("flight-path-angle box must sit inside [-pi/2, pi/2]")
        if self.alpha_min >= self.alpha_max or self.iw_min >= self.iw_max:
            raise DomainError("empty angle box")

    @property
    def lam(self) -> float:
        """Drag-to-lift slope ratio a1/b1."""
        return self.a1 / self.b1

    @property
    def S_star(self) -> float:
        """Wing area over total propeller disk area, S/(A n)."""
        return self.S / (self.A * self.n)

    @property
    def weight(self) -> float:
        return self.m * self.g

    @classmethod
    def vahana(cls) -> "AircraftParams":
        """Tilt-wing demonstrator parameter set used by the bundled scenarios."""
        return cls(
            m=752.2, g=9.81, S=8.93, A=2.83, J_w=1100.0, rho=1.225, n=4,
            a0=0.02, a1=0.004 / DEG, a2=7.6e-5 / DEG**2,
            b0=0.43, b1=0.11 / DEG,
            T_max=8855.0, M_min=-50.0, M_max=50.0,
            alpha_min=-90.0 * DEG, alpha_max=90.0 * DEG,
            gamma_min=-90.0 * DEG, gamma_max=90.0 * DEG,
            iw_min=0.0, iw_max=100.0 * DEG,
            a_min=-0.3 * 9.81, a_max=0.3 * 9.81,
            V_min=0.0, V_max=40.0,
        )


@dataclass(frozen=True)
class FlightState:
    """Longitudinal state sample at one grid point along the path."""

    E: float        # specific kinetic energy V^2 [m^2/s^2]
    gamma: float    # flight-path angle [rad]
    i_w: float      # wing tilt [rad]
    zeta: float     # tilt rate over arc length [rad/m]


def effective_velocity(V: float, T: float, p: AircraftParams) -> float:
    """Airspeed seen by the wing once the propeller wake is mixed in.

    Momentum theory over the total disk area gives
    V_e = sqrt(V^2 + 2 T / (rho A n)).
    """
    if V < 0 or T < 0:
        raise DomainError("effective velocity needs V >= 0 and T >= 0")
    return math.sqrt(V * V + 2.0 * T / (p.rho * p.A * p.n))


def effective_alpha(V: float, V_e: float, alpha: float) -> float:
    """Angle of attack of the combined flow.

    A pure hover wake (V_e > 0, V = 0) sees the wing at zero incidence; a
    vanishing V_e is taken as zero by convention since no flow means no
    deflection to measure.
    """
    if V_e == 0.0:
        return 0.0
    ratio = V * math.sin(alpha) / V_e
    if abs(ratio) > 1.0:
        raise DomainError("flow deflection outside the wake cone")
    return math.asin(ratio)


def lift_drag(
    alpha_e: float, V_e: float, p: AircraftParams, full_drag: bool = False
) -> tuple[float, float]:
    """Wing lift and drag at effective flow conditions.

    The optimization stages use the linear drag polar; simulation and
    validation pass full_drag=True to include the quadratic term.  Keeping
    both in one place prevents the two polars from drifting apart.
    """
    q = 0.5 * p.rho * p.S * V_e * V_e
    drag_coeff = p.a1 * alpha_e + p.a0
    if full_drag:
        drag_coeff += p.a2 * alpha_e * alpha_e
    return q * (p.b1 * alpha_e + p.b0), q * drag_coeff


def kappa(alpha: float, p: AircraftParams) -> float:
    """Divisor mapping the virtual input back to thrust.

    kappa = cos(alpha) + lam sin(alpha) - S_star (a0 - lam b0).  Positive on
    the whole operating envelope; its root sits near alpha = -88 deg.
    """
    return math.cos(alpha) + p.lam * math.sin(alpha) - p.S_star * (p.a0 - p.lam * p.b0)


def virtual_input_tau(T: float, alpha: float, p: AircraftParams) -> float:
    """Fold thrust with its own lift and drag projections into one input."""
    if T < 0:
        raise DomainError("thrust must be nonnegative")
    return T * kappa(alpha, p)


def reconstruct_thrust(
    tau: float, alpha: float, p: AircraftParams, eps_den: float = EPS_DEN
) -> float:
    """Invert the virtual input for the physical thrust at fixed alpha."""
    den = kappa(alpha, p)
    if den <= eps_den:
        raise SingularReconstructionError(
            f"thrust divisor {den:.3e} at alpha={alpha:.4f} rad"
        )
    return tau / den


def f_dynamics(alpha: float, E: float, tau: float, p: AircraftParams) -> float:
    """Path-normal force produced by thrust projection plus wing lift.

    The flight-path-angle dynamics read m E gamma' = f - m g cos(gamma) in
    the arc-length domain; this is the f part.  Thrust is recovered exactly
    from the virtual input first, so the wake strength and the flow
    deflection both see the physical thrust rather than tau itself.
    """
    if E < 0 or tau < 0:
        raise DomainError("f_dynamics needs E >= 0 and tau >= 0")
    if E == 0.0 and tau == 0.0:
        raise DegenerateStateError("no airflow: zero energy and zero thrust")
    T = reconstruct_thrust(tau, alpha, p)
    V = math.sqrt(E)
    V_e = effective_velocity(V, T, p)
    if V_e <= 0.0:
        raise DegenerateStateError("vanishing effective velocity")
    alpha_e = effective_alpha(V, V_e, alpha)
    lift, _ = lift_drag(alpha_e, V_e, p)
    return T * math.sin(alpha) + lift


def propagate_guess(
    state: FlightState,
    M: float,
    E_k: float,
    E_k1: float,
    tau: float,
    delta: float,
    p: AircraftParams,
) -> FlightState:
    """March the guessed angles one grid step along the path.

    gamma integrates the normal force balance scaled by 1/(m E), the tilt
    integrates its rate, and the rate picks up the applied torque plus the
    correction for the change of independent variable as E varies.
    """
    if E_k <= E_FLOOR:
        raise DegenerateEnergyError(f"E={E_k:.6g} at or below floor {E_FLOOR}")
    alpha = state.i_w - state.gamma
    f = f_dynamics(alpha, E_k, tau, p)
    gamma_next = state.gamma + delta / (p.m * E_k) * (f - p.weight * math.cos(state.gamma))
    i_w_next = state.i_w + state.zeta * delta
    zeta_next = state.zeta * (1.0 - (E_k1 - E_k) / (2.0 * E_k)) + M * delta / (p.J_w * E_k)
    return FlightState(E=E_k1, gamma=gamma_next, i_w=i_w_next, zeta=zeta_next)


def params_from_mapping(raw: dict) -> AircraftParams:
    """Build params from a flat name-to-number mapping in file units."""
    names = [f.name for f in fields(AircraftParams)]
    unknown = sorted(set(raw) - set(names))
    if unknown:
        raise DomainError(f"unknown parameter(s): {', '.join(unknown)}")
    missing = sorted(set(names) - set(raw))
    if missing:
        raise DomainError(f"missing parameter(s): {', '.join(missing)}")
    conv = {name: float(raw[name]) for name in names}
    for name in _ANGLE_FIELDS:
        conv[name] *= DEG
    for name, power in _SLOPE_FIELDS.items():
        conv[name] /= DEG**power
    conv["n"] = int(raw["n"])
    return AircraftParams(**conv)


def load_params(path) -> AircraftParams:
    """Read a flat "name = value" parameter file, degrees at the boundary."""
    raw = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise DomainError(f"{path}:{lineno}: expected 'name = value'")
        key, _, value = body.partition("=")
        try:
            raw[key.strip()] = float(value)
        except ValueError as exc:
            raise DomainError(f"{path}:{lineno}: bad number {value.strip()!r}") from exc
    return params_from_mapping(raw)


def dump_params(p: AircraftParams, path) -> None:
    """Write the flat parameter file format read by load_params."""
    lines = ["# vehicle parameters, SI units, angles in degrees"]
    for f in fields(AircraftParams):
        value = getattr(p, f.name)
        if f.name in _ANGLE_FIELDS:
            value /= DEG
        elif f.name in _SLOPE_FIELDS:
            value *= DEG ** _SLOPE_FIELDS[f.name]
        lines.append(f"{f.name} = {value!r}")
    Path(path).write_text("\n".join(lines) + "\n")
