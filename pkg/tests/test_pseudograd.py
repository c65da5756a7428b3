import numpy as np
import pytest

from morse_action.engine.errors import BoundaryConditionError, DegeneracyError
from morse_action.engine.pathspace import hessian, straight_line
from morse_action.engine.pseudograd import (
    assemble_field,
    calibrate_radius,
    cap_profile,
    flow,
    lyapunov_report,
    smooth_step,
    unstable_basis,
)


def test_smooth_step():
    assert smooth_step(-1.0) == 0.0 and smooth_step(0.0) == 0.0
    assert smooth_step(1.0) == 1.0 and smooth_step(2.0) == 1.0
    assert smooth_step(0.5) == pytest.approx(0.5)
    xs = np.linspace(0.0, 1.0, 101)
    values = [smooth_step(x) for x in xs]
    assert all(b >= a for a, b in zip(values, values[1:]))


def test_cap_profile_is_identity_then_bounded():
    assert cap_profile(2.0, 10.0) == 2.0
    assert cap_profile(5.0, 10.0) == 5.0
    assert 5.0 < cap_profile(8.0, 10.0) < 10.0
    assert cap_profile(1e6, 10.0) <= 10.0
    assert cap_profile(5.0 + 1e-9, 10.0) == pytest.approx(5.0 + 1e-9, abs=1e-12)


def test_unstable_basis(pendulum_problem):
    L, bc, (minimum, saddle) = pendulum_problem
    pencil = hessian(L, saddle.path, bc)
    basis = unstable_basis(saddle, pencil)
    assert basis.shape == (pencil.space.dim, 1)
    assert basis[:, 0] @ pencil.G @ basis[:, 0] == pytest.approx(1.0)
    # the unstable direction is the constant loop, signed positive
    nodal = pencil.space.extend(basis[:, 0])
    assert np.all(nodal > 0.0)
    assert np.allclose(nodal, nodal[0])
    assert unstable_basis(minimum, hessian(L, minimum.path, bc)).shape[1] == 0


def test_calibrate_radius(pendulum_problem):
    L, bc, (_, saddle) = pendulum_problem
    r_in, r_out, lam = calibrate_radius(saddle, hessian(L, saddle.path, bc), L, bc, samples=50)
    assert r_in == pytest.approx(0.5 * r_out)
    assert 0.0 < r_out <= 0.5
    assert lam == pytest.approx(0.5 * saddle.spectral_gap ** 2)


def test_degenerate_points_cannot_carry_a_field(free_loops_problem):
    L, bc, cps = free_loops_problem
    with pytest.raises(DegeneracyError):
        assemble_field(cps, L, bc)
    with pytest.raises(ValueError):
        assemble_field([], L, bc)


def test_field_is_linear_inside_the_inner_ball(pendulum_field, pendulum_problem):
    _, _, (_, saddle) = pendulum_problem
    loc = pendulum_field.locals[1]
    assert loc.center is saddle
    step = 1e-3 * loc.radius_r_in * loc.eigenvectors[:, 1]
    path = saddle.path.displaced(pendulum_field.space.extend(step))
    i, d, rho = pendulum_field.nearest(path)
    assert i == 1 and rho <= loc.radius_r_in
    assert np.array_equal(pendulum_field(path), -(loc.hessian_op @ d))


def test_field_is_lyapunov_and_capped(pendulum_field):
    report = lyapunov_report(pendulum_field, n_samples=200, seed=3)
    assert report["lyapunov_violations"] == 0
    assert report["max_field_norm"] <= pendulum_field.cap_bound
    assert report["passed"]
    annulus = lyapunov_report(pendulum_field, n_samples=100, seed=4, region="annulus")
    assert annulus["nu_violations"] == 0
    with pytest.raises(ValueError):
        lyapunov_report(pendulum_field, region="sphere")


@pytest.mark.parametrize("field_name", ["pendulum_field", "duffing_field"])
def test_action_decreases_along_the_field(request, field_name):
    field = request.getfixturevalue(field_name)
    report = lyapunov_report(field, n_samples=1000, seed=11, sublevel=1.0)
    assert report["samples"] > 0
    assert report["lyapunov_violations"] == 0
    assert report["max_dS"] < 0.0


@pytest.mark.parametrize("field_name", ["pendulum_field", "duffing_field"])
def test_annulus_keeps_the_gradient_margin(request, field_name):
    field = request.getfixturevalue(field_name)
    report = lyapunov_report(field, n_samples=500, seed=12, region="annulus")
    assert report["samples"] > 0
    assert report["nu_violations"] == 0
    assert report["sampled_nu"] >= min(0.5, min(loc.mu for loc in field.locals))


@pytest.mark.parametrize("field_name", ["pendulum_field", "duffing_field"])
def test_field_norm_stays_below_the_cap(request, field_name):
    field = request.getfixturevalue(field_name)
    report = lyapunov_report(field, n_samples=10000, seed=13, far_radius=4.0)
    assert report["samples"] > 0
    assert report["max_field_norm"] <= field.cap_bound


def test_flow_from_the_pendulum_saddle(pendulum_field, pendulum_problem):
    _, _, (minimum, saddle) = pendulum_problem
    loc = pendulum_field.locals[1]
    direction = unstable_basis(saddle, hessian(pendulum_field.L, saddle.path, pendulum_field.bc))[:, 0]
    start = saddle.path.displaced(pendulum_field.space.extend(0.5 * loc.radius_r_in * direction))
    result = flow(pendulum_field, start)
    assert result.status == "converged"
    # q = 1/2 + delta flows up to the lift q = 1 of the minimum
    assert result.terminal_id == minimum.id
    assert np.max(np.diff(result.actions)) <= 1e-10
    assert result.actions[-1] == pytest.approx(-0.5, abs=1e-6)


@pytest.mark.parametrize("sign, expected", [(1.0, "cp-001"), (-1.0, "cp-000")])
def test_duffing_saddle_branches(duffing_field, duffing_problem, sign, expected):
    _, _, cps = duffing_problem
    saddle = cps[-1]
    loc = duffing_field.locals[-1]
    direction = unstable_basis(saddle, hessian(duffing_field.L, saddle.path, duffing_field.bc))[:, 0]
    start = saddle.path.displaced(duffing_field.space.extend(sign * 0.5 * loc.radius_r_in * direction))
    result = flow(duffing_field, start)
    assert result.status == "converged"
    assert result.terminal_id == expected
    assert np.max(np.diff(result.actions)) <= 1e-10


def test_flow_start_must_satisfy_the_boundary_condition(pendulum_field, circle):
    with pytest.raises(BoundaryConditionError):
        flow(pendulum_field, straight_line(circle, [0.0], [0.3], 32))
