"""Single gateway through which every optimization in the pipeline runs.

The energy allocation LP, the tube program (QP over affine and second-order
cone rows), and the offline decomposition SDP are all posed as ConePrograms
and handed to one solve routine, so solver choice, tolerances, and failure
handling live in exactly one place.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import cvxpy as cp
import numpy as np
import scipy.sparse as sp

from .errors import DomainError

STATUS_OPTIMAL = "optimal"
STATUS_INFEASIBLE = "infeasible"
STATUS_UNBOUNDED = "unbounded"
STATUS_NUMERICAL_FAILURE = "numerical_failure"

_STATUS_MAP = {
    cp.OPTIMAL: STATUS_OPTIMAL,
    cp.OPTIMAL_INACCURATE: STATUS_OPTIMAL,
    cp.INFEASIBLE: STATUS_INFEASIBLE,
    cp.INFEASIBLE_INACCURATE: STATUS_INFEASIBLE,
    cp.UNBOUNDED: STATUS_UNBOUNDED,
    cp.UNBOUNDED_INACCURATE: STATUS_UNBOUNDED,
}


@dataclass
class SolverSettings:
    """Tolerances applied to every solve.

    Tube bounds downstream are differences of near-equal numbers, so the
    defaults are deliberately tight.
    """

    feas_tol: float = 1e-8
    gap_tol: float = 1e-8
    max_iters: int = 200
    verbose: bool = False
    dump_path: str | None = None


@dataclass(frozen=True)
class SolveReport:
    status: str
    objective_value: float | None
    primal: dict | None
    solve_time: float
    iterations: int

    @property
    def ok(self) -> bool:
        return self.status == STATUS_OPTIMAL


class ConeProgram:
    """Named-variable container for one conic program."""

    def __init__(self, name: str = "program"):
        self.name = name
        self._vars: dict[str, cp.Variable] = {}
        self.constraints: list = []
        self.objective = None
        self.warm_start: dict | None = None

    def variable(self, name: str, shape=(), **kwargs) -> cp.Variable:
        if name in self._vars:
            raise DomainError(f"variable {name!r} declared twice")
        var = cp.Variable(shape, name=name, **kwargs)
        self._vars[name] = var
        return var

    def minimize(self, expr) -> None:
        self.objective = expr

    def subject_to(self, *constraints) -> None:
        for con in constraints:
            if isinstance(con, (list, tuple)):
                self.constraints.extend(con)
            else:
                self.constraints.append(con)

    def _check_declared(self, problem: cp.Problem) -> None:
        declared = {id(v) for v in self._vars.values()}
        for v in problem.variables():
            if id(v) not in declared:
                raise DomainError(
                    f"constraint or objective references undeclared variable {v.name()!r}"
                )


def solve(program: ConeProgram, settings: SolverSettings | None = None) -> SolveReport:
    """Solve a ConeProgram; a failing solver yields a report, not a crash."""
    settings = settings or SolverSettings()
    objective = cp.Minimize(program.objective if program.objective is not None else 0.0)
    problem = cp.Problem(objective, program.constraints)
    program._check_declared(problem)
    if not problem.is_dcp():
        raise DomainError(f"{program.name}: program is not convex as posed")

    if settings.dump_path is not None:
        _dump_program(problem, settings.dump_path)

    if program.warm_start:
        for name, value in program.warm_start.items():
            if name in program._vars:
                program._vars[name].value = value

    started = time.perf_counter()
    try:
        problem.solve(
            solver=cp.CLARABEL,
            verbose=settings.verbose,
            max_iter=settings.max_iters,
            tol_feas=settings.feas_tol,
            tol_gap_abs=settings.gap_tol,
            tol_gap_rel=settings.gap_tol,
        )
    except cp.error.SolverError:
        return SolveReport(STATUS_NUMERICAL_FAILURE, None, None, time.perf_counter() - started, 0)
    elapsed = time.perf_counter() - started

    stats = problem.solver_stats
    iterations = int(stats.num_iters) if stats and stats.num_iters is not None else 0
    if stats and stats.solve_time is not None:
        elapsed = float(stats.solve_time)

    status = _STATUS_MAP.get(problem.status, STATUS_NUMERICAL_FAILURE)
    if status != STATUS_OPTIMAL:
        return SolveReport(status, None, None, elapsed, iterations)

    # post-check: a reported optimum must actually satisfy the constraints;
    # the tolerance reads relative to the magnitude of the variables the
    # constraint touches, since an absolute residual is meaningless for
    # blocks with large entries (the slack expression itself sits near zero
    # on active rows, so it cannot serve as the scale)
    for con in program.constraints:
        violation = con.violation()
        worst = float(np.max(violation)) if np.size(violation) else 0.0
        scale = 1.0
        for var in con.variables():
            if var.value is not None and np.size(var.value):
                scale = max(scale, float(np.max(np.abs(var.value))))
        if worst > 100.0 * settings.feas_tol * scale:
            return SolveReport(STATUS_NUMERICAL_FAILURE, None, None, elapsed, iterations)

    primal = {name: np.array(var.value) for name, var in program._vars.items()}
    return SolveReport(STATUS_OPTIMAL, float(problem.value), primal, elapsed, iterations)


def _dump_program(problem: cp.Problem, path: str) -> None:
    """Write the reduced sparse conic data (c, A, b, cone sizes) as text."""
    data, _, _ = problem.get_problem_data(cp.CLARABEL)
    A = sp.coo_matrix(data["A"])
    lines = [f"# conic program dump: min c'x st b - Ax in K, {A.shape[0]}x{A.shape[1]}"]
    lines.append("c " + " ".join(repr(float(v)) for v in np.ravel(data["c"])))
    lines.append("b " + " ".join(repr(float(v)) for v in np.ravel(data["b"])))
    for i, j, v in zip(A.row, A.col, A.data):
        lines.append(f"A {i} {j} {v!r}")
    dims = data.get("dims")
    if dims is not None:
        lines.append(f"dims zero={dims.zero} nonneg={dims.nonneg} soc={dims.soc} psd={dims.psd}")
    with open(path, "w") as handle:
        handle.write("\n".join(lines) + "\n")
