"""Conic gateway: status mapping, tolerances, determinism, duality sanity."""

import cvxpy as cp
import numpy as np
import pytest

from tiltplan.conic import (
    STATUS_INFEASIBLE,
    STATUS_OPTIMAL,
    STATUS_UNBOUNDED,
    ConeProgram,
    SolverSettings,
    solve,
)
from tiltplan.errors import DomainError


def test_scalar_lp():
    prog = ConeProgram("lp")
    x = prog.variable("x")
    prog.minimize(x)
    prog.subject_to(x >= 3)
    report = solve(prog)
    assert report.status == STATUS_OPTIMAL
    assert report.objective_value == pytest.approx(3.0, abs=1e-7)
    assert report.primal["x"] == pytest.approx(3.0, abs=1e-7)
    assert report.iterations > 0


def test_psd_identity():
    prog = ConeProgram("sdp")
    X = prog.variable("X", (2, 2), PSD=True)
    prog.minimize(cp.trace(X))
    prog.subject_to(X >> np.eye(2))
    report = solve(prog)
    assert report.status == STATUS_OPTIMAL
    assert report.objective_value == pytest.approx(2.0, abs=1e-6)
    np.testing.assert_allclose(report.primal["X"], np.eye(2), atol=1e-6)


def test_boxed_quadratic():
    prog = ConeProgram("qp")
    x = prog.variable("x")
    prog.minimize(cp.square(x))
    prog.subject_to(x >= -1, x <= 1)
    report = solve(prog)
    assert report.status == STATUS_OPTIMAL
    assert report.objective_value == pytest.approx(0.0, abs=1e-7)


def test_infeasible_and_unbounded_statuses():
    prog = ConeProgram()
    x = prog.variable("x")
    prog.minimize(x)
    prog.subject_to(x >= 1, x <= 0)
    assert solve(prog).status == STATUS_INFEASIBLE

    prog = ConeProgram()
    x = prog.variable("x")
    prog.minimize(x)
    prog.subject_to(x <= 0)
    assert solve(prog).status == STATUS_UNBOUNDED


def test_nonconvex_rejected_before_solve():
    prog = ConeProgram()
    x = prog.variable("x")
    prog.minimize(-cp.square(x))
    with pytest.raises(DomainError):
        solve(prog)


def test_undeclared_variable_rejected():
    prog = ConeProgram()
    x = prog.variable("x")
    foreign = cp.Variable(name="foreign")
    prog.minimize(x + foreign)
    prog.subject_to(x >= 0, foreign >= 0)
    with pytest.raises(DomainError):
        solve(prog)


def _small_lp():
    # min c'x  st  A x >= b, x >= 0
    c = np.array([2.0, 3.0, 1.0])
    A = np.array([[1.0, 1.0, 0.0], [0.0, 1.0, 2.0], [1.0, 0.0, 1.0]])
    b = np.array([4.0, 3.0, 2.0])
    return c, A, b


def test_lp_matches_hand_derived_dual_bound():
    c, A, b = _small_lp()

    primal = ConeProgram("primal")
    x = primal.variable("x", 3, nonneg=True)
    primal.minimize(c @ x)
    primal.subject_to(A @ x >= b)
    p = solve(primal)

    # dual: max b'y  st  A'y <= c, y >= 0
    dual = ConeProgram("dual")
    y = dual.variable("y", 3, nonneg=True)
    dual.minimize(-(b @ y))
    dual.subject_to(A.T @ y <= c)
    d = solve(dual)

    assert p.status == STATUS_OPTIMAL and d.status == STATUS_OPTIMAL
    assert abs(p.objective_value - (-d.objective_value)) <= 1e-6


def test_deterministic_resolve():
    values = []
    for _ in range(2):
        prog = ConeProgram()
        x = prog.variable("x", 4)
        prog.minimize(cp.sum_squares(x - np.arange(4)) + 0.1 * cp.sum(x))
        prog.subject_to(cp.sum(x) <= 3, x >= -1)
        report = solve(prog)
        assert report.status == STATUS_OPTIMAL
        values.append(report.objective_value)
    assert abs(values[0] - values[1]) <= 1e-9


def test_program_dump(tmp_path):
    path = tmp_path / "prog.txt"
    prog = ConeProgram()
    x = prog.variable("x", 2, nonneg=True)
    prog.minimize(cp.sum(x))
    prog.subject_to(x[0] + 2 * x[1] >= 1)
    solve(prog, SolverSettings(dump_path=str(path)))
    text = path.read_text()
    assert text.startswith("# conic program dump")
    assert "\nc " in text and "\nb " in text and "\nA " in text
