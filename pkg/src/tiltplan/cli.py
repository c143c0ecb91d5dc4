"""Command line front end: table builds, planning runs, re-validation.

Trajectories are emitted as plot-ready delimited text (or an equivalent
structured document) with a fixed 17-column contract, alongside the
validation report and a run manifest that reproduces the run."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .dc import get_table, table_cache_path
from .errors import PlannerError, ScenarioError
from .planner import (
    Trajectory,
    load_scenario,
    normalize_scenario_mapping,
    read_scenario_mapping,
    run_algorithm1,
    scenario_from_mapping,
    validate,
)

log = logging.getLogger(__name__)

# Column order is a contract for downstream plotting scripts.
TUBE_COLUMNS = ("gamma_lo", "gamma_hi", "iw_lo", "iw_hi")
CORE_COLUMNS = ("t", "s", "x", "z", "V", "gamma", "gamma_star", "iw",
                "alpha", "alpha_e", "T", "tau", "M")
COLUMNS = CORE_COLUMNS + TUBE_COLUMNS

_COLUMN_ATTR = {"iw": "i_w"}

EXIT_CODES = {
    "0": "converged and validated",
    "2": "completed with warnings",
    "3": "stage failure",
}

TRAJECTORY_FORMAT = "tiltplan-trajectory"


@dataclass(frozen=True)
class RunManifest:
    """Everything needed to reproduce a planning run byte for byte."""

    scenario_path: str
    scenario: dict
    table_key: str
    table_cache: str
    output_dir: str
    output_format: str
    emit_trace: bool
    fail_on_stall: bool
    exit_codes: dict
    package_version: str


def _format_float(v: float) -> str:
    return repr(float(v))


def _columns_of(traj: Trajectory) -> dict:
    cols = {}
    names = COLUMNS if traj.has_tube else CORE_COLUMNS
    for name in names:
        cols[name] = getattr(traj, _COLUMN_ATTR.get(name, name))
    return cols


def write_trajectory_csv(traj: Trajectory, path: Path) -> None:
    cols = _columns_of(traj)
    names = list(cols)
    lines = [",".join(names)]
    for k in range(traj.N + 1):
        lines.append(",".join(_format_float(cols[name][k]) for name in names))
    path.write_text("\n".join(lines) + "\n")


def write_trajectory_structured(traj: Trajectory, path: Path) -> None:
    cols = {name: [float(v) for v in arr]
            for name, arr in _columns_of(traj).items()}
    # not part of the column contract, but handy for programmatic readers
    cols["zeta"] = [float(v) for v in traj.zeta]
    cols["E"] = [float(v) for v in traj.E]
    doc = {
        "format": TRAJECTORY_FORMAT,
        "version": 1,
        "n": traj.N,
        "columns": cols,
    }
    path.write_text(json.dumps(doc, indent=2) + "\n")


def _trajectory_from_columns(cols: dict) -> Trajectory:
    missing = [name for name in CORE_COLUMNS if name not in cols]
    if missing:
        raise ScenarioError(
            f"trajectory file is missing column(s): {', '.join(missing)}")
    present_tube = [name for name in TUBE_COLUMNS if name in cols]
    if present_tube and len(present_tube) != len(TUBE_COLUMNS):
        raise ScenarioError(
            "trajectory file carries a partial tube column set")
    arrays = {name: np.asarray(cols[name], dtype=float) for name in cols}
    n = len(arrays["t"])
    for name, arr in arrays.items():
        if arr.ndim != 1 or len(arr) != n:
            raise ScenarioError(f"column {name} has mismatched length")
    if n < 2:
        raise ScenarioError("trajectory needs at least two rows")
    V = arrays["V"]
    i_w = arrays["iw"]
    delta = np.diff(arrays["s"])
    if np.any(delta <= 0.0):
        raise ScenarioError("the s column must be strictly increasing")
    if "zeta" in arrays:
        zeta = arrays["zeta"]
    else:
        dzeta = np.diff(i_w) / delta
        zeta = np.append(dzeta, dzeta[-1])
    return Trajectory(
        t=arrays["t"], s=arrays["s"], x=arrays["x"], z=arrays["z"],
        V=V, E=arrays.get("E", V ** 2),
        gamma=arrays["gamma"], gamma_star=arrays["gamma_star"],
        i_w=i_w, zeta=zeta, alpha=arrays["alpha"], alpha_e=arrays["alpha_e"],
        T=arrays["T"], tau=arrays["tau"], M=arrays["M"],
        gamma_lo=arrays.get("gamma_lo"), gamma_hi=arrays.get("gamma_hi"),
        iw_lo=arrays.get("iw_lo"), iw_hi=arrays.get("iw_hi"),
    )


def read_trajectory(path) -> Trajectory:
    """Load a trajectory file written by cmd_plan (either format)."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read trajectory file: {exc}") from exc
    if path.suffix == ".json":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ScenarioError(
                f"trajectory file {path} is not valid JSON: {exc}") from exc
        if doc.get("format") != TRAJECTORY_FORMAT:
            raise ScenarioError(f"{path} is not a trajectory document")
        return _trajectory_from_columns(doc["columns"])
    lines = text.splitlines()
    if not lines:
        raise ScenarioError(f"trajectory file {path} is empty")
    names = lines[0].split(",")
    rows = []
    for i, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != len(names):
            raise ScenarioError(
                f"{path} line {i}: expected {len(names)} fields, "
                f"got {len(parts)}")
        try:
            rows.append([float(v) for v in parts])
        except ValueError as exc:
            raise ScenarioError(f"{path} line {i}: {exc}") from exc
    data = np.asarray(rows, dtype=float)
    if data.size == 0:
        raise ScenarioError(f"trajectory file {path} has no data rows")
    return _trajectory_from_columns(
        {name: data[:, j] for j, name in enumerate(names)})


def _write_json(payload: dict, path: Path) -> None:
    path.write_text(json.dumps(payload, indent=2) + "\n")


def cmd_build_table(args) -> int:
    scn = scenario_from_mapping(read_scenario_mapping(args.scenario))
    path = table_cache_path(scn.params, scn.cfg.table)
    before = path.stat().st_mtime_ns if path.exists() else None
    table = get_table(scn.params, scn.cfg.table)
    after = path.stat().st_mtime_ns
    n_E, n_tau = len(table.E_grid), len(table.tau_grid)
    print(f"table: {n_E}x{n_tau} grid, {n_E * n_tau} entries, "
          f"degree {table.degree}")
    if before is not None and before == after:
        print(f"cache hit: {path}")
    else:
        print(f"cache written: {path}")
    return 0


def _trace_payload(traj: Trajectory) -> dict:
    return {
        "outer_residuals": traj.outer_residuals,
        "p1_objectives": traj.p1_objectives,
        "tube_objectives": traj.tube_objectives,
        "inner_iterations": [trace.records for trace in traj.traces],
        "containment": [dataclasses.asdict(c) for c in traj.checks],
        "stalled": traj.stalled,
        "converged": traj.converged,
    }


def cmd_plan(args) -> int:
    norm = normalize_scenario_mapping(read_scenario_mapping(args.scenario))
    if args.max_outer is not None:
        norm["planner"]["max_outer"] = args.max_outer
    if args.max_inner is not None:
        norm["planner"]["max_inner"] = args.max_inner
    if args.eps is not None:
        # one tolerance drives both loops; the scenario file can still
        # set them apart
        norm["planner"]["eps_outer"] = args.eps
        norm["planner"]["eps_inner"] = args.eps
    scn = scenario_from_mapping(norm)
    table = get_table(scn.params, scn.cfg.table)
    traj = run_algorithm1(scn, table=table)

    outdir = Path(args.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    if args.format == "csv":
        traj_path = outdir / "trajectory.csv"
        write_trajectory_csv(traj, traj_path)
    else:
        traj_path = outdir / "trajectory.json"
        write_trajectory_structured(traj, traj_path)
    report = traj.validation
    _write_json(report.to_dict(), outdir / "validation.json")
    manifest = RunManifest(
        scenario_path=str(args.scenario),
        scenario=norm,
        table_key=table.params_hash,
        table_cache=str(table_cache_path(scn.params, scn.cfg.table)),
        output_dir=str(outdir),
        output_format=args.format,
        emit_trace=bool(args.emit_trace),
        fail_on_stall=bool(args.fail_on_stall),
        exit_codes=EXIT_CODES,
        package_version=__version__,
    )
    _write_json(dataclasses.asdict(manifest), outdir / "manifest.json")
    if args.emit_trace:
        _write_json(_trace_payload(traj), outdir / "trace.json")

    print(f"wrote {traj_path}")
    print(f"converged: {traj.converged} after {traj.outer_iterations} "
          f"outer iteration(s); residuals "
          f"{['%.3e' % r for r in traj.outer_residuals]}")
    for w in report.warnings:
        print(f"warning: {w}")
    if traj.stalled:
        if args.fail_on_stall:
            print("error: tube refinement stalled", file=sys.stderr)
            return 3
        print("warning: tube refinement stalled")
    if traj.converged and report.ok and not traj.stalled:
        return 0
    if not traj.converged:
        print("warning: outer loop did not converge")
    return 2


def cmd_validate(args) -> int:
    traj = read_trajectory(args.trajectory)
    scn = load_scenario(args.scenario)
    report = validate(traj, scn)
    print(json.dumps(report.to_dict(), indent=2))
    return 0 if report.ok else 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tiltplan",
        description="Robust minimum-power transition planning for tiltwing "
                    "aircraft.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_table = sub.add_parser(
        "build-table",
        help="build (or load) the decomposition lookup table for a scenario")
    p_table.add_argument("scenario", help="scenario file (TOML)")
    p_table.set_defaults(func=cmd_build_table)

    p_plan = sub.add_parser("plan", help="plan a transition maneuver")
    p_plan.add_argument("scenario", help="scenario file (TOML)")
    p_plan.add_argument("--output-dir", default="tiltplan-run",
                        help="directory for result files")
    p_plan.add_argument("--format", choices=("csv", "structured"),
                        default="csv", help="trajectory file format")
    p_plan.add_argument("--max-outer", type=int, default=None,
                        help="override the outer iteration cap")
    p_plan.add_argument("--max-inner", type=int, default=None,
                        help="override the inner iteration cap")
    p_plan.add_argument("--eps", type=float, default=None,
                        help="override both loop tolerances [rad]")
    p_plan.add_argument("--emit-trace", action="store_true",
                        help="also write per-iteration convergence data")
    p_plan.add_argument("--fail-on-stall", action="store_true",
                        help="treat a stalled tube refinement as a failure")
    p_plan.set_defaults(func=cmd_plan)

    p_val = sub.add_parser(
        "validate", help="re-run the a-posteriori audit on stored files")
    p_val.add_argument("trajectory", help="trajectory file from plan")
    p_val.add_argument("scenario", help="scenario file (TOML)")
    p_val.set_defaults(func=cmd_validate)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=logging.INFO, stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except PlannerError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
