"""Difference-of-convex decomposition of the flight-path force term.

Offline, the normal-force function f(alpha; E, tau) is least-squares fitted
by an even-degree polynomial at each node of a coarse (E, tau) grid, and
each fit is split as f = g - h with g, h convex by a trace-minimizing
semidefinite program over Gram matrices of the second derivative.  Online,
coefficients are bilinearly interpolated between nodes (a convex combination,
so convexity survives) and optionally refitted by low-order quadratics
around the current linearization point.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import struct
from dataclasses import dataclass, replace
from pathlib import Path

import cvxpy as cp
import numpy as np
from numpy.polynomial import polynomial as npoly

from .conic import ConeProgram, SolverSettings, solve
from .errors import DomainError, TableBuildError
from .vehicle import E_FLOOR, AircraftParams, f_dynamics

log = logging.getLogger(__name__)

#: Angle-of-attack interval the polynomial fits cover.  The left end stays
#: clear of the root of the thrust-reconstruction divisor near -88 deg; the
#: right end reaches 89.5 deg so near-hover force balances stay inside.
ALPHA_FIT_DOMAIN = (-1.31, 1.5623)

CURVATURE_TOL_REL = 1e-7
REFIT_TOL_REL = 0.02

CACHE_ENV_VAR = "TILTPLAN_CACHE_DIR"
CACHE_MAGIC = b"DCTBL"
CACHE_VERSION = 1


@dataclass(frozen=True)
class DCPair:
    """Convex split g - h of one fitted force polynomial.

    Coefficients are ascending powers of alpha.  fit_residual is the largest
    absolute gap between the sampled force values and g - h; it is zero for
    a split of an exactly known polynomial.
    """

    g: np.ndarray
    h: np.ndarray
    domain: tuple[float, float]
    fit_residual: float = 0.0

    def f_coeffs(self) -> np.ndarray:
        return pad_to(self.g, len(self.h)) - pad_to(self.h, len(self.g))


@dataclass(frozen=True)
class DCLookupTable:
    """DC pairs on a coarse (E, tau) grid, one shared alpha domain."""

    E_grid: np.ndarray
    tau_grid: np.ndarray
    entries: list          # entries[i][j] pairs with (E_grid[i], tau_grid[j])
    alpha_domain: tuple[float, float]
    degree: int
    params_hash: str = ""

    def __post_init__(self):
        if np.any(np.diff(self.E_grid) <= 0) or np.any(np.diff(self.tau_grid) <= 0):
            raise DomainError("lookup grids must be strictly increasing")


@dataclass(frozen=True)
class TableConfig:
    """Grid layout for the offline build.

    Ranges default to the vehicle envelope ([E floor, V_max^2] and
    [0, T_max]).  Both axes use square-root spacing: the force term varies
    fastest near hover, where E and tau are small.
    """

    n_E: int = 9
    n_tau: int = 9
    E_range: tuple[float, float] | None = None
    tau_range: tuple[float, float] | None = None
    degree: int = 26
    alpha_domain: tuple[float, float] = ALPHA_FIT_DOMAIN
    samples: int = 161
    fit_tol_rel: float = 0.01


def pad_to(c, length: int) -> np.ndarray:
    c = np.asarray(c, dtype=float)
    if len(c) >= length:
        return c
    return np.concatenate((c, np.zeros(length - len(c))))


def fit_polynomial(alpha, values, degree: int) -> np.ndarray:
    """Least-squares polynomial fit, exact when sample count = degree + 1."""
    alpha = np.asarray(alpha, dtype=float)
    values = np.asarray(values, dtype=float)
    if len(alpha) < degree + 1:
        raise DomainError(f"need at least {degree + 1} samples for degree {degree}")
    vander = npoly.polyvander(alpha, degree)
    coeffs, _, rank, _ = np.linalg.lstsq(vander, values, rcond=None)
    if rank < degree + 1:
        raise DomainError("rank-deficient fit: sample abscissae are not distinct enough")
    return coeffs


def gram_matrix(p) -> np.ndarray:
    """Spread coefficients uniformly over anti-diagonals: y' P y = p(alpha)."""
    p = np.asarray(p, dtype=float)
    if len(p) % 2 == 0:
        raise DomainError("gram matrix needs an even-degree polynomial")
    n = (len(p) - 1) // 2
    P = np.zeros((n + 1, n + 1))
    for m, pm in enumerate(p):
        count = m + 1 if m <= n else 2 * n + 1 - m
        for i in range(max(0, m - n), min(n, m) + 1):
            P[i, m - i] = pm / count
    return P


def differentiation_matrix(n: int) -> np.ndarray:
    """D with d/d_alpha [1, a, ..., a^n]' = D [1, a, ..., a^n]'."""
    if n < 1:
        raise DomainError("need n >= 1")
    D = np.zeros((n + 1, n + 1))
    for i in range(1, n + 1):
        D[i, i - 1] = float(i)
    return D


def hessian_form(Q: np.ndarray) -> np.ndarray:
    """Matrix of the quadratic form d^2(y'Qy)/d_alpha^2."""
    n = Q.shape[0] - 1
    D = differentiation_matrix(n)
    return D.T @ D.T @ Q + Q @ D @ D + 2.0 * D.T @ Q @ D


def quad_form_coeffs(H: np.ndarray) -> np.ndarray:
    """Polynomial coefficients of y' H y."""
    n = H.shape[0] - 1
    out = np.zeros(2 * n + 1)
    for i in range(n + 1):
        for j in range(n + 1):
            out[i + j] += H[i, j]
    return out


def _double_integral(c: np.ndarray) -> np.ndarray:
    """Integrate twice, zero constant and linear terms."""
    out = np.zeros(len(c) + 2)
    for m, cm in enumerate(c):
        out[m + 2] = cm / ((m + 1) * (m + 2))
    return out


def dc_split(
    p,
    domain: tuple[float, float] = ALPHA_FIT_DOMAIN,
    settings: SolverSettings | None = None,
) -> DCPair:
    """Split an even-degree polynomial into convex g - h, minimal curvature.

    Minimizes tr H_g subject to H_g >= 0 and H_g - H_f >= 0, where H_f is
    the second-derivative form of the uniform-spread Gram matrix.  h takes
    zero constant and linear terms; g absorbs those of the input, so
    g - h reproduces the input coefficientwise.
    """
    p = np.asarray(p, dtype=float)
    # the split is positively homogeneous, so solve at unit scale: raw force
    # coefficients span ~8 orders of magnitude and stall the SDP solver
    scale = float(np.max(np.abs(p))) or 1.0
    H_f = hessian_form(gram_matrix(p / scale))
    m = H_f.shape[0]

    prog = ConeProgram("dc-split")
    H_g = prog.variable("H_g", (m, m), PSD=True)
    prog.minimize(cp.trace(H_g))
    prog.subject_to(H_g - H_f >> 0)
    report = solve(prog, settings)
    if not report.ok:
        raise TableBuildError(f"dc split SDP terminated with status {report.status!r}")

    H_g_val = report.primal["H_g"]
    H_g_val = 0.5 * (H_g_val + H_g_val.T)
    h = scale * _double_integral(quad_form_coeffs(H_g_val - H_f))
    g = pad_to(p, len(h)) + h

    # minimal-trace splits graze zero curvature (exactly so for affine
    # inputs), where fit and solver noise leave microscopic concave dips;
    # an identical quadratic ridge on both parts cancels in g - h and
    # restores certified convexity
    grid = np.linspace(domain[0], domain[1], 101)
    dip = min(
        float(np.min(npoly.polyval(grid, npoly.polyder(g, 2)))),
        float(np.min(npoly.polyval(grid, npoly.polyder(h, 2)))),
        0.0,
    )
    if dip < 0.0:
        ridge = 0.5 * (1.0 + 1e-6) * (-dip)
        g[2] += ridge
        h[2] += ridge

    pair = DCPair(g=g, h=h, domain=(float(domain[0]), float(domain[1])))
    _check_pair(pair, p)
    return pair


def _check_pair(pair: DCPair, p_expected: np.ndarray | None = None) -> None:
    """Certify convexity on a 101-point grid and exact g - h recovery."""
    grid = np.linspace(pair.domain[0], pair.domain[1], 101)
    g2 = npoly.polyval(grid, npoly.polyder(pair.g, 2))
    h2 = npoly.polyval(grid, npoly.polyder(pair.h, 2))
    scale = max(float(np.max(np.abs(g2))), float(np.max(np.abs(h2))), 1.0)
    tol = CURVATURE_TOL_REL * scale
    if g2.min() < -tol or h2.min() < -tol:
        raise TableBuildError(
            f"convexity certificate failed: min g''={g2.min():.3e}, "
            f"min h''={h2.min():.3e}, tol={tol:.3e}"
        )
    if p_expected is not None:
        diff = pad_to(pair.g, len(pair.h)) - pad_to(pair.h, len(pair.g))
        want = pad_to(p_expected, len(diff))
        err = np.abs(diff - want)
        if np.any(err > 1e-9 * np.maximum(1.0, np.abs(want))):
            raise TableBuildError("g - h does not reproduce the fitted polynomial")


def sqrt_spaced(lo: float, hi: float, n: int) -> np.ndarray:
    """Grid denser near lo, linear in sqrt of the offset."""
    return lo + (np.linspace(0.0, np.sqrt(hi - lo), n)) ** 2


def _chebyshev_nodes(lo: float, hi: float, n: int) -> np.ndarray:
    k = np.arange(n)
    u = np.cos(np.pi * (2 * k + 1) / (2 * n))[::-1]
    return 0.5 * (lo + hi) + 0.5 * (hi - lo) * u


def build_lookup_table(p: AircraftParams, cfg: TableConfig | None = None) -> DCLookupTable:
    """Fit and split the force term at every node of the (E, tau) grid."""
    cfg = cfg or TableConfig()
    E_lo, E_hi = cfg.E_range if cfg.E_range is not None else (E_FLOOR, p.V_max**2)
    t_lo, t_hi = cfg.tau_range if cfg.tau_range is not None else (0.0, p.T_max)
    E_grid = sqrt_spaced(E_lo, E_hi, cfg.n_E)
    tau_grid = sqrt_spaced(t_lo, t_hi, cfg.n_tau)
    alphas = _chebyshev_nodes(cfg.alpha_domain[0], cfg.alpha_domain[1], cfg.samples)
    check = np.linspace(cfg.alpha_domain[0], cfg.alpha_domain[1], 101)

    entries = []
    for E in E_grid:
        row = []
        for tau in tau_grid:
            f_fit = np.array([f_dynamics(a, float(E), float(tau), p) for a in alphas])
            coeffs = fit_polynomial(alphas, f_fit, cfg.degree)
            f_check = np.array([f_dynamics(a, float(E), float(tau), p) for a in check])
            residual = float(
                np.max(np.abs(f_check - npoly.polyval(check, coeffs)))
            )
            tol = cfg.fit_tol_rel * float(np.max(np.abs(f_check)))
            if residual > tol:
                raise TableBuildError(
                    f"fit residual {residual:.4g} above {tol:.4g} "
                    f"at grid point (E={E:.6g}, tau={tau:.6g})"
                )
            try:
                pair = dc_split(coeffs, cfg.alpha_domain)
            except TableBuildError as exc:
                raise TableBuildError(
                    f"split failed at grid point (E={E:.6g}, tau={tau:.6g}): {exc}"
                ) from exc
            row.append(replace(pair, fit_residual=residual))
        entries.append(row)

    return DCLookupTable(
        E_grid=E_grid,
        tau_grid=tau_grid,
        entries=entries,
        alpha_domain=cfg.alpha_domain,
        degree=cfg.degree,
        params_hash=content_hash(p, cfg),
    )


def _axis_weight(grid: np.ndarray, value: float, name: str) -> tuple[int, float]:
    """Cell index and right-node weight, clamping out-of-range queries."""
    if value < grid[0] or value > grid[-1]:
        log.warning(
            "%s=%.6g outside table range [%.6g, %.6g]; clamping",
            name, value, grid[0], grid[-1],
        )
        value = min(max(value, grid[0]), grid[-1])
    i = int(np.searchsorted(grid, value, side="right") - 1)
    i = min(max(i, 0), len(grid) - 2) if len(grid) > 1 else 0
    if value == grid[i]:
        return i, 0.0
    if len(grid) > 1 and value == grid[i + 1]:
        return i, 1.0
    return i, float((value - grid[i]) / (grid[i + 1] - grid[i]))


def interpolate_coeffs(table: DCLookupTable, E: float, tau: float) -> DCPair:
    """Bilinear blend of the four surrounding DC pairs.

    Weights are nonnegative and sum to one, so g and h stay convex.  Exact
    grid hits return the node's coefficients bit for bit.
    """
    if not table.entries:
        raise DomainError("empty lookup table")
    i, wE = _axis_weight(table.E_grid, float(E), "E")
    j, wt = _axis_weight(table.tau_grid, float(tau), "tau")

    if wE == 0.0 and wt == 0.0:
        node = table.entries[i][j]
        return replace(node, g=node.g.copy(), h=node.h.copy())
    if wE == 1.0 and wt == 1.0:
        node = table.entries[i + 1][j + 1]
        return replace(node, g=node.g.copy(), h=node.h.copy())

    corners = (
        (table.entries[i][j], (1 - wE) * (1 - wt)),
        (table.entries[i][j + 1], (1 - wE) * wt),
        (table.entries[i + 1][j], wE * (1 - wt)),
        (table.entries[i + 1][j + 1], wE * wt),
    )
    length = max(len(pair.g) for pair, _ in corners)
    g = np.zeros(length)
    h = np.zeros(length)
    residual = 0.0
    for pair, w in corners:
        g += w * pad_to(pair.g, length)
        h += w * pad_to(pair.h, length)
        residual += w * pair.fit_residual
    return DCPair(g=g, h=h, domain=table.alpha_domain, fit_residual=residual)


def quadratic_refit(pair: DCPair, center: float, window: float) -> DCPair:
    """Replace g and h by quadratics exact in value and slope at center.

    Only the curvature is fitted (least squares over 21 samples) and it is
    clamped to stay nonnegative, so the refitted pair is still convex and
    linearizations at the center are unbiased.
    """
    if window <= 0:
        raise DomainError("window must be positive")
    if not pair.domain[0] <= center <= pair.domain[1]:
        raise DomainError("center outside the pair's alpha domain")
    u = np.linspace(-window, window, 21)
    quads = []
    for q in (pair.g, pair.h):
        v0 = float(npoly.polyval(center, q))
        v1 = float(npoly.polyval(center, npoly.polyder(q)))
        r = npoly.polyval(center + u, q) - (v0 + v1 * u)
        a2 = max(float(np.dot(u * u, r) / np.dot(u * u, u * u)), 0.0)
        quads.append(
            np.array([v0 - v1 * center + a2 * center**2, v1 - 2.0 * a2 * center, a2])
        )
    g2, h2 = quads
    f_old = npoly.polyval(center + u, pair.f_coeffs())
    f_new = npoly.polyval(center + u, g2 - h2)
    residual = float(np.max(np.abs(f_new - f_old)))
    local_range = float(np.ptp(f_old))
    if local_range > 0 and residual > REFIT_TOL_REL * local_range:
        log.warning(
            "quadratic refit residual %.3g above %.3g (2%% of local range) "
            "at center %.4f", residual, REFIT_TOL_REL * local_range, center,
        )
    return DCPair(
        g=g2, h=h2,
        domain=(center - window, center + window),
        fit_residual=pair.fit_residual + residual,
    )


# -- cache -------------------------------------------------------------------

def content_hash(p: AircraftParams, cfg: TableConfig) -> str:
    """Hash of everything the table depends on, for cache keying."""
    from dataclasses import asdict

    payload = {
        "version": CACHE_VERSION,
        "params": {k: repr(v) for k, v in asdict(p).items()},
        "config": {k: repr(v) for k, v in asdict(cfg).items()},
    }
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


def save_table(table: DCLookupTable, path) -> None:
    """Cache file layout (little endian):

    magic b"DCTBL", uint16 version, uint32 header length, header JSON
    (utf-8: params_hash, n_E, n_tau, degree, alpha_domain, coeff_len),
    then float64 arrays back to back: E_grid, tau_grid, and per entry in
    row-major (E, tau) order: g coefficients, h coefficients, fit residual.
    """
    coeff_len = table.degree + 3
    header = json.dumps({
        "params_hash": table.params_hash,
        "n_E": len(table.E_grid),
        "n_tau": len(table.tau_grid),
        "degree": table.degree,
        "alpha_domain": list(table.alpha_domain),
        "coeff_len": coeff_len,
    }).encode()
    blob = bytearray()
    blob += CACHE_MAGIC
    blob += struct.pack("<HI", CACHE_VERSION, len(header))
    blob += header
    blob += np.asarray(table.E_grid, dtype="<f8").tobytes()
    blob += np.asarray(table.tau_grid, dtype="<f8").tobytes()
    for row in table.entries:
        for pair in row:
            blob += pad_to(pair.g, coeff_len).astype("<f8").tobytes()
            blob += pad_to(pair.h, coeff_len).astype("<f8").tobytes()
            blob += struct.pack("<d", pair.fit_residual)
    Path(path).write_bytes(bytes(blob))


def load_table(path) -> DCLookupTable:
    """Read a cache file written by save_table; raises TableBuildError."""
    raw = Path(path).read_bytes()
    try:
        if raw[: len(CACHE_MAGIC)] != CACHE_MAGIC:
            raise ValueError("bad magic")
        offset = len(CACHE_MAGIC)
        version, header_len = struct.unpack_from("<HI", raw, offset)
        if version != CACHE_VERSION:
            raise ValueError(f"unsupported cache version {version}")
        offset += struct.calcsize("<HI")
        header = json.loads(raw[offset : offset + header_len].decode())
        offset += header_len
        n_E, n_tau = header["n_E"], header["n_tau"]
        coeff_len = header["coeff_len"]
        domain = tuple(header["alpha_domain"])

        def take(count):
            nonlocal offset
            out = np.frombuffer(raw, dtype="<f8", count=count, offset=offset).copy()
            offset += 8 * count
            return out

        E_grid = take(n_E)
        tau_grid = take(n_tau)
        entries = []
        for _ in range(n_E):
            row = []
            for _ in range(n_tau):
                g = take(coeff_len)
                h = take(coeff_len)
                residual = float(take(1)[0])
                row.append(DCPair(g=g, h=h, domain=domain, fit_residual=residual))
            entries.append(row)
        if offset != len(raw):
            raise ValueError("trailing bytes")
        return DCLookupTable(
            E_grid=E_grid, tau_grid=tau_grid, entries=entries,
            alpha_domain=domain, degree=header["degree"],
            params_hash=header["params_hash"],
        )
    except (ValueError, KeyError, IndexError, struct.error, json.JSONDecodeError) as exc:
        raise TableBuildError(f"corrupted table cache {path}: {exc}") from exc


def cache_dir(explicit=None) -> Path:
    if explicit is not None:
        return Path(explicit)
    env = os.environ.get(CACHE_ENV_VAR)
    if env:
        return Path(env)
    return Path.home() / ".cache" / "tiltplan"


def table_cache_path(
    p: AircraftParams,
    cfg: TableConfig | None = None,
    cache: str | os.PathLike | None = None,
) -> Path:
    """Where get_table stores the table for these inputs."""
    key = content_hash(p, cfg or TableConfig())
    return cache_dir(cache) / f"dctable-{key[:16]}.bin"


def get_table(
    p: AircraftParams,
    cfg: TableConfig | None = None,
    cache: str | os.PathLike | None = None,
    rebuild: bool = False,
) -> DCLookupTable:
    """Load the cached table for (params, config), building it if needed.

    A corrupted or stale cache file is rebuilt with a logged warning, never
    an error.
    """
    cfg = cfg or TableConfig()
    key = content_hash(p, cfg)
    path = table_cache_path(p, cfg, cache)
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.exists() and not rebuild:
        try:
            table = load_table(path)
            if table.params_hash == key:
                return table
            log.warning("table cache %s was built from different inputs; rebuilding", path)
        except TableBuildError as exc:
            log.warning("%s; rebuilding", exc)
    table = build_lookup_table(p, cfg)
    save_table(table, path)
    return table


def table_to_text(table: DCLookupTable) -> str:
    """Readable dump of a table for offline inspection."""
    lines = [
        f"# dc lookup table: {len(table.E_grid)}x{len(table.tau_grid)} grid, "
        f"degree {table.degree}, alpha in [{table.alpha_domain[0]:.6g}, "
        f"{table.alpha_domain[1]:.6g}], params {table.params_hash[:16]}",
    ]
    for i, E in enumerate(table.E_grid):
        for j, tau in enumerate(table.tau_grid):
            pair = table.entries[i][j]
            lines.append(f"entry E={E:.9g} tau={tau:.9g} residual={pair.fit_residual:.6g}")
            lines.append("  g " + " ".join(repr(float(v)) for v in pair.g))
            lines.append("  h " + " ".join(repr(float(v)) for v in pair.h))
    return "\n".join(lines) + "\n"
