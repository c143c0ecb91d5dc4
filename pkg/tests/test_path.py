"""Path grid construction and prescribed-angle geometry."""

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tiltplan.errors import DegeneratePathError, DomainError, UnsupportedPathError
from tiltplan.path import (
    build_grid,
    discretize_path,
    flight_path_angle,
    flight_path_rate,
    with_angles,
)


def test_level_path_grid():
    grid = discretize_path([(0.0, 0.0), (100.0, 0.0)], N=4)
    np.testing.assert_allclose(grid.s, [0.0, 25.0, 50.0, 75.0, 100.0], rtol=1e-12)
    np.testing.assert_allclose(grid.x, grid.s, rtol=1e-12)
    assert np.all(grid.z == 0.0)
    np.testing.assert_allclose(grid.delta, 25.0, rtol=1e-12)


def test_three_four_five_arc_length():
    grid = discretize_path([(0.0, 0.0), (3.0, 4.0)], N=1)
    np.testing.assert_allclose(grid.s, [0.0, 5.0], rtol=1e-12)
    np.testing.assert_allclose(grid.delta, [5.0], rtol=1e-12)


def test_corner_resampled_on_grid_point():
    # the vertical tail segment is fine for geometry, only angles reject it
    grid = discretize_path([(0.0, 0.0), (10.0, 0.0), (10.0, -10.0)], N=4)
    assert grid.length == pytest.approx(20.0, rel=1e-12)
    np.testing.assert_allclose(grid.s, [0.0, 5.0, 10.0, 15.0, 20.0], rtol=1e-12)
    np.testing.assert_allclose(grid.x, [0.0, 5.0, 10.0, 10.0, 10.0], atol=1e-12)
    np.testing.assert_allclose(grid.z, [0.0, 0.0, 0.0, -5.0, -10.0], atol=1e-12)
    with pytest.raises(UnsupportedPathError):
        with_angles(grid)


def test_degenerate_waypoints():
    with pytest.raises(DegeneratePathError):
        discretize_path([(0.0, 0.0), (0.0, 0.0), (5.0, 0.0)], N=4)
    with pytest.raises(DegeneratePathError):
        discretize_path([(0.0, 0.0)], N=4)
    with pytest.raises(DomainError):
        discretize_path([(0.0, 0.0), (5.0, 0.0)], N=0)


def test_flight_path_angle_signs():
    # climb positive: z decreases (z is down-positive)
    gamma = flight_path_angle([0.0, 10.0], [0.0, -10.0])
    np.testing.assert_allclose(gamma, [math.pi / 4, math.pi / 4], rtol=1e-12)
    gamma = flight_path_angle([0.0, 10.0], [0.0, 10.0])
    np.testing.assert_allclose(gamma, [-math.pi / 4, -math.pi / 4], rtol=1e-12)
    gamma = flight_path_angle([0.0, 5.0, 10.0], [0.0, 0.0, 0.0])
    assert np.all(gamma == 0.0)
    assert len(gamma) == 3


def test_flight_path_angle_rejects_non_forward():
    with pytest.raises(UnsupportedPathError):
        flight_path_angle([0.0, 0.0], [0.0, -10.0])
    with pytest.raises(UnsupportedPathError):
        flight_path_angle([0.0, 5.0, 4.0], [0.0, -1.0, -2.0])


def test_flight_path_rate_copy_rule():
    rate = flight_path_rate([0.0, 0.1], [10.0])
    np.testing.assert_allclose(rate, [0.01, 0.01], rtol=1e-12)
    rate = flight_path_rate([0.2, 0.2, 0.2, 0.2], [1.0, 1.0, 1.0])
    assert np.all(rate == 0.0)
    assert len(rate) == 4


def test_build_grid_fills_angles():
    grid = build_grid([(0.0, 0.0), (100.0, -10.0)], N=5)
    assert grid.gamma_star is not None and len(grid.gamma_star) == 6
    assert grid.gamma_star_rate is not None and len(grid.gamma_star_rate) == 5
    expected = math.atan2(10.0, 100.0)
    np.testing.assert_allclose(grid.gamma_star, expected, rtol=1e-12)
    np.testing.assert_allclose(grid.gamma_star_rate, 0.0, atol=1e-15)


@st.composite
def forward_waypoints(draw):
    n = draw(st.integers(2, 6))
    xs = [0.0]
    zs = [draw(st.floats(-50.0, 50.0))]
    for _ in range(n - 1):
        xs.append(xs[-1] + draw(st.floats(0.5, 40.0)))
        zs.append(zs[-1] + draw(st.floats(-30.0, 30.0)))
    return list(zip(xs, zs))


@given(wps=forward_waypoints(), N=st.integers(1, 50))
def test_spacing_sums_to_arc_length(wps, N):
    grid = discretize_path(wps, N)
    pts = np.asarray(wps)
    total = float(np.sum(np.hypot(np.diff(pts[:, 0]), np.diff(pts[:, 1]))))
    assert abs(float(np.sum(grid.delta)) - total) <= 1e-9 * total
    # uniform spacing
    assert np.ptp(grid.delta) <= 1e-9 * grid.delta[0]
    assert np.all(np.diff(grid.s) > 0.0)


@given(x1=st.floats(1.0, 500.0), N=st.integers(1, 40))
def test_level_paths_have_zero_angle(x1, N):
    grid = build_grid([(0.0, 3.0), (x1, 3.0)], N)
    assert np.all(grid.gamma_star == 0.0)


@given(
    g0=st.floats(-1.0, 1.0),
    slope=st.floats(-0.05, 0.05),
    n=st.integers(2, 30),
    d=st.floats(0.1, 20.0),
)
def test_rate_exact_for_affine_sequences(g0, slope, n, d):
    gamma = [g0 + slope * k * d for k in range(n)]
    rate = flight_path_rate(gamma, [d] * (n - 1))
    np.testing.assert_allclose(rate, slope, atol=1e-9 * max(1.0, abs(slope)) + 1e-12)
