"""Robust inner stage: tube-bounded successive convexification.

Each iteration linearizes the split force model around a guessed trajectory
and treats the linearization error as a bounded disturbance.  Because the
split components are convex, those errors peak at the corners of the state
tube, so enumerating the four corner combinations per step turns the
uncertain dynamics into a finite set of convex inequalities.  Solving the
resulting program shrinks the tube; rolling the returned torque schedule
through the model produces the next guess.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

import cvxpy as cp
import numpy as np
from numpy.polynomial import polynomial as npoly

from .conic import (
    STATUS_INFEASIBLE,
    STATUS_OPTIMAL,
    ConeProgram,
    SolverSettings,
    solve,
)
from .dc import ALPHA_FIT_DOMAIN, DCLookupTable, DCPair, interpolate_coeffs, quadratic_refit
from .energy import EnergyProfile
from .errors import DomainError, PlannerError, ScenarioError, StageError
from .path import PathGrid
from .vehicle import (
    AircraftParams,
    E_FLOOR,
    FlightState,
    f_dynamics,
    lift_drag,
    effective_alpha,
    effective_velocity,
    propagate_guess,
    reconstruct_thrust,
)

log = logging.getLogger(__name__)

#: Guessed flight-path angles beyond this cannot be linearized (the cosine
#: bounds need |gamma| <= pi/2); small slack tolerates transients.
GAMMA_GUESS_LIMIT = math.pi / 2 + 0.1

#: Half-width of the least-squares window for the per-step quadratic refits.
DEFAULT_REFIT_WINDOW = 0.3

#: On well-tracked paths the deviations are milliradians and the raw
#: objective sits around 1e-5, where interior-point gap tolerances lose
#: meaning; the program is solved with the objective normalized to O(1)
#: (estimated from the guess) and the report divided back down.
OBJECTIVE_SCALE_CAP = 1e4


@dataclass(frozen=True)
class LqrGains:
    """Per-step feedback gains for the tilt subsystem, additive convention:
    the corrected torque is M + K_i * (i_w - i_w°) + K_zeta * (zeta - zeta°)."""

    K_i: np.ndarray
    K_zeta: np.ndarray


@dataclass(frozen=True)
class GuessTrajectory:
    """A rollout-consistent trajectory the next convex program linearizes
    around.  Angles and tilt rate have length N+1, torque length N."""

    gamma: np.ndarray
    i_w: np.ndarray
    zeta: np.ndarray
    M: np.ndarray

    @property
    def alpha(self) -> np.ndarray:
        return self.i_w - self.gamma


@dataclass(frozen=True)
class TubeSolution:
    gamma_lo: np.ndarray   # length N+1 [rad]
    gamma_hi: np.ndarray
    iw_lo: np.ndarray      # length N+1 [rad]
    iw_hi: np.ndarray
    zeta: np.ndarray       # length N+1 [rad/m]
    M: np.ndarray          # length N [N m]
    theta: np.ndarray      # length N [rad]
    objective: float

    @property
    def gamma_width(self) -> float:
        return float(np.max(self.gamma_hi - self.gamma_lo))

    @property
    def iw_width(self) -> float:
        return float(np.max(self.iw_hi - self.iw_lo))


@dataclass
class ConvergenceTrace:
    """Per-iteration progress of the inner loop."""

    records: list = field(default_factory=list)

    def append(self, iteration: int, gamma_width: float, iw_width: float,
               objective: float, status: str) -> None:
        self.records.append({
            "iteration": iteration,
            "gamma_width": gamma_width,
            "iw_width": iw_width,
            "objective": objective,
            "status": status,
        })

    def to_jsonl(self) -> str:
        return "".join(json.dumps(rec) + "\n" for rec in self.records)

    def write(self, path) -> None:
        with open(path, "w") as handle:
            handle.write(self.to_jsonl())


@dataclass(frozen=True)
class TubeConfig:
    """Inner-loop settings plus the initial attitude state."""

    i0: float
    gamma0: float
    Omega0: float = 0.0
    eps: float = 1e-3
    max_iters: int = 3
    q_i: float = 1.0
    q_zeta: float = 1.0
    r: float = 1e-2
    refit_window: float = DEFAULT_REFIT_WINDOW


# -- pre-stabilization --------------------------------------------------------

def lqr_gains(
    E: np.ndarray,
    delta: np.ndarray,
    p: AircraftParams,
    q_i: float = 1.0,
    q_zeta: float = 1.0,
    r: float = 1e-2,
) -> LqrGains:
    """Finite-horizon Riccati recursion on the tilt-rate pair (i_w, zeta).

    The step map follows the discrete tilt dynamics in the path domain; the
    terminal cost equals the stage cost.  Gains are returned in the additive
    convention (already negated), so stable closed loops come out directly.
    """
    E = np.asarray(E, dtype=float)
    delta = np.asarray(delta, dtype=float)
    N = len(delta)
    if np.any(E[:N] <= E_FLOOR):
        raise DomainError("energy at or below floor; gains undefined")
    Q = np.diag([q_i, q_zeta])
    P = Q.copy()
    K_i = np.empty(N)
    K_zeta = np.empty(N)
    for k in reversed(range(N)):
        A = np.array([
            [1.0, delta[k]],
            [0.0, 1.0 - (E[k + 1] - E[k]) / (2.0 * E[k])],
        ])
        B = np.array([[0.0], [delta[k] / (p.J_w * E[k])]])
        S = (r + B.T @ P @ B).item()
        K = (B.T @ P @ A) / S
        P = Q + A.T @ P @ A - A.T @ P @ B @ K
        K_i[k] = -K[0, 0]
        K_zeta[k] = -K[0, 1]
    return LqrGains(K_i=K_i, K_zeta=K_zeta)


# -- initial guess ------------------------------------------------------------

def _balance_alpha(E: float, tau: float, target: float, p: AircraftParams,
                   near: float | None, n_scan: int = 41) -> float:
    """Tilt angle at which the normal force balances target, by bisection.

    The force is scanned over the fit window first; if no sign change
    brackets a root the nearest-force endpoint is returned with a warning
    (transiently unbalanceable points are tolerated, the exact re-roll
    decides feasibility).  Among several brackets the one closest to `near`
    keeps the guess continuous.
    """
    alphas = np.linspace(ALPHA_FIT_DOMAIN[0], ALPHA_FIT_DOMAIN[1], n_scan)
    forces = np.array([f_dynamics(float(a), E, tau, p) for a in alphas])
    gaps = forces - target
    sign_change = np.nonzero(np.diff(np.sign(gaps)) != 0)[0]
    if len(sign_change) == 0:
        idx = int(np.argmin(np.abs(gaps)))
        log.warning(
            "no force balance at E=%.4g tau=%.4g (gap %.3g N); clamping "
            "alpha to %.4f", E, tau, gaps[idx], alphas[idx],
        )
        return float(alphas[idx])
    if near is not None and len(sign_change) > 1:
        mids = 0.5 * (alphas[sign_change] + alphas[sign_change + 1])
        j = int(sign_change[np.argmin(np.abs(mids - near))])
    else:
        j = int(sign_change[0])
    lo, hi = float(alphas[j]), float(alphas[j + 1])
    g_lo = float(gaps[j])
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        g_mid = f_dynamics(mid, E, tau, p) - target
        if (g_mid > 0) == (g_lo > 0):
            lo, g_lo = mid, g_mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _stable_delta_bound(E: float, gamma: float, p: AircraftParams) -> float:
    """Largest spacing for which the explicit gamma march stays contracting."""
    slope = p.weight * max(abs(math.sin(gamma)), 1e-3)
    return 2.0 * p.m * E / slope


def _roll(
    gamma0: float,
    i0: float,
    zeta0: float,
    M: np.ndarray,
    profile: EnergyProfile,
    grid: PathGrid,
    p: AircraftParams,
    stage: str,
    gains: LqrGains | None = None,
    ref_i: np.ndarray | None = None,
    ref_zeta: np.ndarray | None = None,
) -> GuessTrajectory:
    """March the angles through the exact step map, optionally closing the
    loop with the feedback gains around a reference; the applied torque is
    clamped to the actuator box and stored."""
    N = grid.N
    gamma = np.empty(N + 1)
    i_w = np.empty(N + 1)
    zeta = np.empty(N + 1)
    M_used = np.empty(N)
    gamma[0], i_w[0], zeta[0] = gamma0, i0, zeta0
    if abs(gamma0) > GAMMA_GUESS_LIMIT or not (
        ALPHA_FIT_DOMAIN[0] <= i0 - gamma0 <= ALPHA_FIT_DOMAIN[1]
    ):
        raise StageError(
            stage,
            f"initial angles outside the admissible envelope "
            f"(gamma={gamma0:.4g}, alpha={i0 - gamma0:.4g} rad)",
        )
    state = FlightState(E=profile.E[0], gamma=gamma0, i_w=i0, zeta=zeta0)
    for k in range(N):
        torque = float(M[k])
        if gains is not None:
            torque += float(
                gains.K_i[k] * (state.i_w - ref_i[k])
                + gains.K_zeta[k] * (state.zeta - ref_zeta[k])
            )
        torque = min(max(torque, p.M_min), p.M_max)
        M_used[k] = torque
        try:
            state = propagate_guess(
                state, torque, float(profile.E[k]), float(profile.E[k + 1]),
                float(profile.tau[k]), float(grid.delta[k]), p,
            )
        except PlannerError as exc:
            raise StageError(
                stage,
                f"rollout failed at k={k + 1}: {exc}; the explicit march is "
                f"unstable when delta exceeds 2mE/|df/dgamma| "
                f"(delta_k={grid.delta[k]:.4g} m, bound ~"
                f"{_stable_delta_bound(profile.E[k], state.gamma, p):.4g} m)",
            ) from exc
        gamma[k + 1], i_w[k + 1], zeta[k + 1] = state.gamma, state.i_w, state.zeta
        alpha = state.i_w - state.gamma
        if abs(state.gamma) > GAMMA_GUESS_LIMIT or not (
            ALPHA_FIT_DOMAIN[0] <= alpha <= ALPHA_FIT_DOMAIN[1]
        ):
            raise StageError(
                stage,
                f"angles left the admissible envelope at k={k + 1} "
                f"(gamma={state.gamma:.4g}, alpha={alpha:.4g} rad); the "
                f"explicit march is unstable when delta exceeds "
                f"2mE/|df/dgamma| (delta_k={grid.delta[k]:.4g} m, bound ~"
                f"{_stable_delta_bound(profile.E[k], state.gamma, p):.4g} m)",
            )
    return GuessTrajectory(gamma=gamma, i_w=i_w, zeta=zeta, M=M_used)


def initial_guess(
    profile: EnergyProfile,
    grid: PathGrid,
    p: AircraftParams,
    i0: float,
    gamma0: float,
    Omega0: float = 0.0,
) -> GuessTrajectory:
    """Construct a feasible linearization trajectory from the energy profile.

    Quasi-static force balance at every node gives a tilt schedule; it is
    smoothed, differentiated into a rate, converted to torques by inverse
    dynamics, and finally re-rolled through the exact step map so the result
    satisfies the discrete dynamics to machine precision.
    """
    if grid.gamma_star is None:
        raise ScenarioError("grid is missing prescribed-angle fields")
    N = grid.N
    tau_ext = np.append(profile.tau, profile.tau[-1])
    alpha = np.empty(N + 1)
    near = None
    for k in range(N + 1):
        target = p.weight * math.cos(float(grid.gamma_star[k]))
        alpha[k] = _balance_alpha(
            float(profile.E[k]), float(tau_ext[k]), target, p, near
        )
        near = alpha[k]

    i_raw = alpha + grid.gamma_star
    padded = np.pad(i_raw, 2, mode="edge")
    i_smooth = np.convolve(padded, np.full(5, 0.2), mode="valid")
    i_smooth = np.clip(i_smooth, p.iw_min, p.iw_max)

    zeta = np.empty(N + 1)
    zeta[:N] = np.diff(i_smooth) / grid.delta
    zeta[N] = zeta[N - 1]
    dE = np.diff(profile.E)
    M = (zeta[1:] - zeta[:-1] * (1.0 - dE / (2.0 * profile.E[:-1]))) \
        * p.J_w * profile.E[:-1] / grid.delta
    M = np.clip(M, p.M_min, p.M_max)

    zeta0 = Omega0 / math.sqrt(float(profile.E[0]))
    return _roll(gamma0, i0, zeta0, M, profile, grid, p, stage="guess")


# -- linearization error bounds ----------------------------------------------

def linearization_error_max(coeffs: np.ndarray, alpha0: float,
                            box: tuple[float, float]) -> float:
    """Peak Jacobian-linearization error of a convex polynomial over a box.

    Convexity puts the maximum at an endpoint, so two evaluations suffice.
    """
    lo, hi = box
    if hi < lo:
        raise DomainError("empty box")
    v0 = float(npoly.polyval(alpha0, coeffs))
    d0 = float(npoly.polyval(alpha0, npoly.polyder(coeffs)))

    def err(a: float) -> float:
        return float(npoly.polyval(a, coeffs)) - v0 - d0 * (a - alpha0)

    return max(err(lo), err(hi), 0.0)


def cos_error_max(gamma0: float, box: tuple[float, float], p: AircraftParams) -> float:
    """Peak linearization error of the gravity term -mg cos over a box."""
    lo, hi = box
    if hi < lo:
        raise DomainError("empty box")
    if lo < -math.pi / 2 - 1e-12 or hi > math.pi / 2 + 1e-12:
        raise DomainError("box must lie within [-pi/2, pi/2]")

    def err(g: float) -> float:
        return p.weight * (
            -math.cos(g) + math.cos(gamma0) - math.sin(gamma0) * (g - gamma0)
        )

    return max(err(lo), err(hi), 0.0)


# -- program assembly ----------------------------------------------------------

def refit_steps(
    guess: GuessTrajectory,
    profile: EnergyProfile,
    table: DCLookupTable,
    N: int,
    window: float,
) -> list[DCPair]:
    """Interpolate and quadratically refit the split pair at every step.

    The refit window is clipped so its samples stay inside the table's fit
    domain (the stored polynomials are meaningless beyond it).
    """
    lo_dom, hi_dom = table.alpha_domain
    pairs = []
    for k in range(N):
        pair = interpolate_coeffs(table, float(profile.E[k]), float(profile.tau[k]))
        center = float(guess.alpha[k])
        w = min(window, hi_dom - center, center - lo_dom)
        if w <= 0:
            raise StageError(
                "tube",
                f"linearization point alpha={center:.4f} at k={k} outside "
                f"the fitted window [{lo_dom:.3f}, {hi_dom:.3f}]",
            )
        try:
            refit = quadratic_refit(pair, center, max(w, 1e-3))
        except DomainError as exc:
            raise StageError("tube", f"refit failed at k={k}: {exc}") from exc
        pairs.append(_deflate(refit, center))
    return pairs


def _deflate(pair: DCPair, center: float) -> DCPair:
    """Drop the common curvature the split carries on both sides.

    It cancels in g - h, so removing it (centered, value and slope stay put)
    changes nothing the difference sees while it tightens the vertex bounds
    and keeps the row coefficients near the force scale.  Table nodes at
    extreme conditions otherwise leak curvature several orders above f''
    into every interpolated step.
    """
    r = min(float(pair.g[2]), float(pair.h[2]))
    if r <= 0.0:
        return pair
    shift = np.array([r * center**2, -2.0 * r * center, r])
    return DCPair(
        g=pair.g - shift, h=pair.h - shift,
        domain=pair.domain, fit_residual=pair.fit_residual,
    )


def _quad(c0, c1, c2, x):
    """Value of per-step quadratics at an affine vector expression."""
    return c0 + cp.multiply(c1, x) + cp.multiply(c2, cp.square(x))


def assemble_p2(
    guess: GuessTrajectory,
    profile: EnergyProfile,
    grid: PathGrid,
    table: DCLookupTable,
    gains: LqrGains,
    p: AircraftParams,
    refit_window: float = DEFAULT_REFIT_WINDOW,
    i_f: float | None = None,
) -> ConeProgram:
    """Pose one tube iteration as a conic program.

    Per step, the four corner combinations of the gamma and tilt intervals
    each yield one upper-tube and one lower-tube inequality: the upper side
    keeps the convex split component exact and majorizes the gravity term by
    its curvature-bounded quadratic, the lower side keeps the concave parts
    exact and minorizes gravity by its tangent.  The tilt-rate recursion is
    an equality with the feedback correction evaluated at the tube midpoint,
    which keeps the tilt subsystem deterministic.  An i_f pins both tilt
    bounds at the terminal node on top of the initial-state pins.
    """
    if grid.gamma_star is None:
        raise ScenarioError("grid is missing prescribed-angle fields")
    N = grid.N
    if len(guess.gamma) != N + 1 or len(profile.E) != N + 1:
        raise ScenarioError("guess, profile, and grid lengths disagree")

    refits = refit_steps(guess, profile, table, N, refit_window)
    cg = np.stack([pair.g for pair in refits])        # (N, 3)
    ch = np.stack([pair.h for pair in refits])
    alpha0 = guess.alpha[:-1]
    g0 = cg[:, 0] + cg[:, 1] * alpha0 + cg[:, 2] * alpha0**2
    dg0 = cg[:, 1] + 2.0 * cg[:, 2] * alpha0
    h0 = ch[:, 0] + ch[:, 1] * alpha0 + ch[:, 2] * alpha0**2
    dh0 = ch[:, 1] + 2.0 * ch[:, 2] * alpha0

    E = profile.E
    delta = grid.delta
    s = delta / (p.m * E[:-1])
    decay = 1.0 - np.diff(E) / (2.0 * E[:-1])
    gain = delta / (p.J_w * E[:-1])
    cos_g0 = np.cos(guess.gamma[:-1])
    sin_g0 = np.sin(guess.gamma[:-1])
    gs = grid.gamma_star

    prog = ConeProgram("tube-stage")
    gamma_lo = prog.variable("gamma_lo", N + 1)
    gamma_hi = prog.variable("gamma_hi", N + 1)
    iw_lo = prog.variable("iw_lo", N + 1)
    iw_hi = prog.variable("iw_hi", N + 1)
    zeta = prog.variable("zeta", N + 1)
    M = prog.variable("M", N)
    theta = prog.variable("theta", N)

    cons = []
    rows = {}

    # vertex-enumerated tube recursions
    for gv in (gamma_lo, gamma_hi):
        dgam = gv[:-1] - guess.gamma[:-1]
        grav_upper = p.weight * (
            -cos_g0 + cp.multiply(sin_g0, dgam) + 0.5 * cp.square(dgam)
        )
        grav_lower = p.weight * (-cos_g0 + cp.multiply(sin_g0, dgam))
        for iv in (iw_lo, iw_hi):
            arg = iv[:-1] - gv[:-1]
            upper = gv[:-1] + cp.multiply(
                s,
                _quad(cg[:, 0], cg[:, 1], cg[:, 2], arg)
                - h0 - cp.multiply(dh0, arg - alpha0) + grav_upper,
            )
            lower = gv[:-1] + cp.multiply(
                s,
                g0 + cp.multiply(dg0, arg - alpha0)
                - _quad(ch[:, 0], ch[:, 1], ch[:, 2], arg) + grav_lower,
            )
            cons.append(gamma_hi[1:] >= upper)
            cons.append(gamma_lo[1:] <= lower)
    rows["upper_tube"] = 4 * N
    rows["lower_tube"] = 4 * N

    # deterministic tilt subsystem
    mid = 0.5 * (iw_lo[:-1] + iw_hi[:-1])
    M_tilde = (
        M
        + cp.multiply(gains.K_i, mid - guess.i_w[:-1])
        + cp.multiply(gains.K_zeta, zeta[:-1] - guess.zeta[:-1])
    )
    cons.append(zeta[1:] == cp.multiply(decay, zeta[:-1]) + cp.multiply(gain, M_tilde))
    # the tilt chain carries no disturbance, so its reachable set is the
    # equality recursion itself; one-sided rows would leave the terminal
    # node's bounds dangling (nothing above drives them back together)
    cons.append(iw_hi[1:] == iw_hi[:-1] + cp.multiply(delta, zeta[:-1]))
    cons.append(iw_lo[1:] == iw_lo[:-1] + cp.multiply(delta, zeta[:-1]))
    rows["zeta_equality"] = N
    rows["tilt_tube"] = 2 * N

    # tracking epigraph on the driven points
    cons.append(theta >= gamma_hi[1:] - gs[1:])
    cons.append(theta >= -(gamma_hi[1:] - gs[1:]))
    cons.append(theta >= gamma_lo[1:] - gs[1:])
    cons.append(theta >= -(gamma_lo[1:] - gs[1:]))
    rows["tracking"] = 4 * N

    # boxes, ordering, cross coupling, boundary pins
    cons += [
        gamma_lo >= p.gamma_min, gamma_hi <= p.gamma_max,
        iw_lo >= p.iw_min, iw_hi <= p.iw_max,
        gamma_hi >= gamma_lo, iw_hi >= iw_lo,
        M >= p.M_min, M <= p.M_max,
        iw_lo - gamma_hi >= p.alpha_min,
        iw_hi - gamma_lo <= p.alpha_max,
    ]
    rows["state_box"] = 4 * (N + 1)
    rows["ordering"] = 2 * (N + 1)
    rows["input_box"] = 2 * N
    rows["alpha_cross"] = 2 * (N + 1)
    cons += [
        gamma_lo[0] == guess.gamma[0], gamma_hi[0] == guess.gamma[0],
        iw_lo[0] == guess.i_w[0], iw_hi[0] == guess.i_w[0],
        zeta[0] == guess.zeta[0],
    ]
    rows["boundary"] = 5
    if i_f is not None:
        cons += [iw_lo[N] == i_f, iw_hi[N] == i_f]
        rows["boundary"] += 2

    prog.subject_to(*cons)
    track_est = float(np.sum(
        (guess.gamma[1:] - gs[1:]) ** 2 * delta / np.sqrt(E[:-1])
    ))
    obj_scale = min(1.0 / max(track_est, 1e-8), OBJECTIVE_SCALE_CAP)
    prog.minimize(
        obj_scale
        * cp.sum(cp.multiply(delta / np.sqrt(E[:-1]), cp.square(theta)))
    )
    prog.rows = rows
    prog.meta = {
        "guess": guess, "profile": profile, "grid": grid, "gains": gains,
        "p": p, "refits": refits, "table": table, "refit_window": refit_window,
        "objective_scale": obj_scale,
    }
    return prog


def solve_p2(program: ConeProgram, settings: SolverSettings | None = None) -> TubeSolution:
    """Solve one tube iteration; infeasibility is localized by relaxation."""
    report = solve(program, settings)
    if report.status == STATUS_OPTIMAL:
        pr = report.primal
        scale = program.meta.get("objective_scale", 1.0)
        return TubeSolution(
            gamma_lo=pr["gamma_lo"], gamma_hi=pr["gamma_hi"],
            iw_lo=pr["iw_lo"], iw_hi=pr["iw_hi"],
            zeta=pr["zeta"], M=pr["M"], theta=pr["theta"],
            objective=float(report.objective_value) / scale,
        )
    if report.status == STATUS_INFEASIBLE:
        k = _first_infeasible_step(program, settings)
        where = f"; first conflicting step k={k}" if k is not None else ""
        raise StageError(
            "tube",
            "tube program infeasible (tilt box and angle-of-attack coupling "
            f"cannot hold simultaneously){where}",
        )
    raise StageError("tube", f"solver returned {report.status}")


def _first_infeasible_step(program: ConeProgram, settings) -> int | None:
    """Relax the cross/box rows with a slack vector and report the first
    step needing positive slack."""
    meta = program.meta
    guess, p = meta["guess"], meta["p"]
    grid, gains, profile = meta["grid"], meta["gains"], meta["profile"]
    N = grid.N
    relaxed = ConeProgram("tube-stage-relaxation")
    gamma_lo = relaxed.variable("gamma_lo", N + 1)
    gamma_hi = relaxed.variable("gamma_hi", N + 1)
    iw_lo = relaxed.variable("iw_lo", N + 1)
    iw_hi = relaxed.variable("iw_hi", N + 1)
    slack = relaxed.variable("slack", N + 1, nonneg=True)
    relaxed.subject_to(
        gamma_lo >= p.gamma_min, gamma_hi <= p.gamma_max,
        iw_lo >= p.iw_min - slack, iw_hi <= p.iw_max + slack,
        gamma_hi >= gamma_lo, iw_hi >= iw_lo,
        iw_lo - gamma_hi >= p.alpha_min - slack,
        iw_hi - gamma_lo <= p.alpha_max + slack,
        gamma_lo[0] == guess.gamma[0], gamma_hi[0] == guess.gamma[0],
        iw_lo[0] == guess.i_w[0], iw_hi[0] == guess.i_w[0],
    )
    relaxed.minimize(cp.sum(slack))
    report = solve(relaxed, settings)
    if not report.ok:
        return None
    positive = np.nonzero(report.primal["slack"] > 1e-9)[0]
    return int(positive[0]) if len(positive) else None


# -- guess update and model rollouts -------------------------------------------

def update_guess(
    sol: TubeSolution,
    guess: GuessTrajectory,
    profile: EnergyProfile,
    grid: PathGrid,
    p: AircraftParams,
    gains: LqrGains | None = None,
) -> GuessTrajectory:
    """Re-roll the exact step map under the returned torque schedule.

    The feedback correction is evaluated along the rolled state against the
    previous guess, matching the control law wired into the program."""
    return true_rollout(sol.M, guess, profile, grid, p, gains)


def true_rollout(
    M: np.ndarray,
    guess: GuessTrajectory,
    profile: EnergyProfile,
    grid: PathGrid,
    p: AircraftParams,
    gains: LqrGains | None = None,
) -> GuessTrajectory:
    """March the exact step map from the guess's initial state under the
    torque schedule M, closing the loop around the guess when gains are
    given.  This is the trajectory the tube must contain after inflation."""
    return _roll(
        guess.gamma[0], guess.i_w[0], guess.zeta[0], M,
        profile, grid, p, stage="tube",
        gains=gains, ref_i=guess.i_w, ref_zeta=guess.zeta,
    )


def model_rollout(
    M: np.ndarray,
    guess: GuessTrajectory,
    refits: list[DCPair],
    profile: EnergyProfile,
    grid: PathGrid,
    p: AircraftParams,
    gains: LqrGains | None = None,
) -> GuessTrajectory:
    """Roll the refitted split model (g - h in place of the true force).

    Containment of this rollout inside the returned tube is the soundness
    property the vertex constraints guarantee.
    """
    N = grid.N
    gamma = np.empty(N + 1)
    i_w = np.empty(N + 1)
    zeta = np.empty(N + 1)
    gamma[0], i_w[0], zeta[0] = guess.gamma[0], guess.i_w[0], guess.zeta[0]
    for k in range(N):
        torque = float(M[k])
        if gains is not None:
            torque += float(
                gains.K_i[k] * (i_w[k] - guess.i_w[k])
                + gains.K_zeta[k] * (zeta[k] - guess.zeta[k])
            )
        force = float(npoly.polyval(i_w[k] - gamma[k], refits[k].f_coeffs()))
        scale = grid.delta[k] / (p.m * profile.E[k])
        gamma[k + 1] = gamma[k] + scale * (force - p.weight * math.cos(gamma[k]))
        i_w[k + 1] = i_w[k] + zeta[k] * grid.delta[k]
        zeta[k + 1] = (
            zeta[k] * (1.0 - (profile.E[k + 1] - profile.E[k]) / (2.0 * profile.E[k]))
            + torque * grid.delta[k] / (p.J_w * profile.E[k])
        )
    return GuessTrajectory(gamma=gamma, i_w=i_w, zeta=zeta, M=np.asarray(M, dtype=float))


def model_error_bound(
    refits: list[DCPair],
    profile: EnergyProfile,
    grid: PathGrid,
    p: AircraftParams,
) -> float:
    """Accumulated gamma error [rad] between the refitted model and the true
    force: per step, the table fit plus refit residual scaled like the
    dynamics."""
    residuals = np.array([pair.fit_residual for pair in refits])
    return float(np.sum(grid.delta / (p.m * profile.E[:-1]) * residuals))


def propagate_energy(
    guess: GuessTrajectory,
    profile: EnergyProfile,
    grid: PathGrid,
    p: AircraftParams,
) -> np.ndarray:
    """March the true energy equation under the guessed angles, for
    validation against the profile the optimization assumed."""
    N = grid.N
    E = np.empty(N + 1)
    E[0] = profile.E[0]
    for k in range(N):
        alpha = float(guess.alpha[k])
        T = reconstruct_thrust(float(profile.tau[k]), alpha, p)
        V = math.sqrt(max(E[k], E_FLOOR))
        V_e = effective_velocity(V, T, p)
        a_e = effective_alpha(V, V_e, alpha)
        _, D = lift_drag(a_e, V_e, p, full_drag=True)
        step = (2.0 * grid.delta[k] / p.m) * (
            T * math.cos(alpha) - D - p.weight * math.sin(guess.gamma[k])
        )
        E[k + 1] = max(E[k] + step, E_FLOOR)
    return E


# -- inner loop ----------------------------------------------------------------

def run_tube_loop(
    profile: EnergyProfile,
    grid: PathGrid,
    table: DCLookupTable,
    p: AircraftParams,
    cfg: TubeConfig,
    settings: SolverSettings | None = None,
):
    """Iterate assemble, solve, and update until the tube widths converge.

    Returns (solution, guess, trace, program) where program is the last
    assembled instance (its meta keeps the guess it linearized around and
    the per-step refits, for a-posteriori containment checks); solution and
    program are None when max_iters is zero.  Iteration continues while
    either width exceeds eps, capped by max_iters; widths failing to shrink
    raise a warning, not an error.
    """
    guess = initial_guess(profile, grid, p, cfg.i0, cfg.gamma0, cfg.Omega0)
    trace = ConvergenceTrace()
    if cfg.max_iters == 0:
        return None, guess, trace, None
    gains = lqr_gains(profile.E, grid.delta, p, cfg.q_i, cfg.q_zeta, cfg.r)
    sol = None
    program = None
    prev_widths = (math.inf, math.inf)
    for iteration in range(cfg.max_iters):
        program = assemble_p2(
            guess, profile, grid, table, gains, p, cfg.refit_window
        )
        sol = solve_p2(program, settings)
        widths = (sol.gamma_width, sol.iw_width)
        trace.append(iteration, widths[0], widths[1], sol.objective, "optimal")
        if iteration > 0 and widths[0] >= prev_widths[0] and widths[1] >= prev_widths[1]:
            log.warning(
                "tube widths not decreasing at iteration %d "
                "(gamma %.3g -> %.3g, tilt %.3g -> %.3g)",
                iteration, prev_widths[0], widths[0], prev_widths[1], widths[1],
            )
        prev_widths = widths
        guess = update_guess(sol, guess, profile, grid, p, gains)
        if widths[0] <= cfg.eps and widths[1] <= cfg.eps:
            break
    return sol, guess, trace, program
