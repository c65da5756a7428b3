import numpy as np
import pytest
from scipy.integrate import simpson, solve_ivp
from scipy.optimize import brentq

from morse_action.engine.critical import (
    SeedStrategy,
    certify_L0,
    deduplicate,
    generate_seeds,
    lifted_distance,
    morse_index,
    newton_solve,
    normalize_lift,
    ps_diagnostic,
    seed_sweep,
)
from morse_action.engine.errors import BoundaryConditionError, NewtonFailure
from morse_action.engine.families import free_particle, pendulum
from morse_action.engine.manifold import BoundaryCondition
from morse_action.engine.pathspace import constant_path, hessian, straight_line

DUFFING_OMEGA = 1.5 * np.pi


def test_pendulum_critical_points(pendulum_problem):
    L, bc, (minimum, saddle) = pendulum_problem
    assert minimum.id == "cp-000" and saddle.id == "cp-001"
    assert minimum.action_value == pytest.approx(-0.5, abs=1e-6)
    assert saddle.action_value == pytest.approx(0.5, abs=1e-6)
    assert (minimum.morse_index, saddle.morse_index) == (0, 1)
    assert minimum.nullity == saddle.nullity == 0
    assert certify_L0(minimum) and certify_L0(saddle)


def test_newton_from_a_critical_point_takes_no_step(pendulum_problem):
    L, bc, (minimum, _) = pendulum_problem
    again = newton_solve(L, bc, minimum.path)
    assert again.iterations == 0
    assert np.array_equal(again.path.nodes, minimum.path.nodes)
    assert again.morse_index == 0


def test_pendulum_saddle_spectrum(pendulum_problem):
    L, bc, (_, saddle) = pendulum_problem
    index, nullity, gap, eigs, _ = morse_index(hessian(L, saddle.path, bc))
    assert eigs[0] == pytest.approx(-2.0 * np.pi ** 2, rel=1e-9)
    # first nonconstant mode: (4 pi^2 - 2 pi^2) / (4 pi^2 + 1)
    assert gap == pytest.approx(2.0 * np.pi ** 2 / (4.0 * np.pi ** 2 + 1.0), rel=1e-2)


def test_free_loops_are_degenerate(free_loops_problem):
    _, _, (cp,) = free_loops_problem
    assert cp.nullity >= 1
    assert not certify_L0(cp)


def _shooting_minimum():
    """ positive one-hump solution of g'' = -w^2 g + g^3, g(0) = g(1) = 0, and its action """
    w2 = DUFFING_OMEGA ** 2

    def rhs(t, y):
        return [y[1], -w2 * y[0] + y[0] ** 3]

    def end(slope):
        sol = solve_ivp(rhs, (0.0, 1.0), [0.0, slope], rtol=1e-12, atol=1e-12)
        return sol.y[0, -1]

    slope = brentq(end, 5.0, 15.65, xtol=1e-13)
    t = np.linspace(0.0, 1.0, 20001)
    sol = solve_ivp(rhs, (0.0, 1.0), [0.0, slope], t_eval=t, rtol=1e-12, atol=1e-12)
    q, v = sol.y
    lagrangian = 0.5 * v ** 2 - 0.5 * w2 * q ** 2 + 0.25 * q ** 4
    return float(simpson(lagrangian, x=t)), float(np.max(q))


def test_duffing_points_against_shooting(duffing_problem):
    L, bc, cps = duffing_problem
    assert [cp.morse_index for cp in cps] == [0, 0, 1]
    low, high, saddle = cps
    assert saddle.action_value == pytest.approx(0.0, abs=1e-12)
    assert low.action_value == pytest.approx(high.action_value, rel=1e-10)
    fine = newton_solve(L, bc, high.path.resampled(256))
    expected, amplitude = _shooting_minimum()
    assert fine.action_value == pytest.approx(expected, rel=2e-3)
    assert np.max(fine.path.nodes) == pytest.approx(amplitude, rel=1e-2)


def test_duffing_saddle_spectrum(duffing_problem):
    L, bc, cps = duffing_problem
    saddle = cps[-1]
    _, _, gap, eigs, _ = morse_index(hessian(L, saddle.path, bc))
    # (pi^2 - w^2) / (pi^2 + 1)
    assert eigs[0] == pytest.approx((np.pi ** 2 - DUFFING_OMEGA ** 2) / (np.pi ** 2 + 1.0), rel=1e-2)
    assert saddle.spectral_gap == pytest.approx(gap)


def test_newton_rejects_seed_off_the_boundary_condition(line):
    bc = BoundaryCondition.dirichlet([0.0], [1.0])
    with pytest.raises(BoundaryConditionError):
        newton_solve(free_particle(), bc, straight_line(line, [0.0], [2.0], 16))


def test_newton_failure_carries_reason(line):
    bc = BoundaryCondition.dirichlet([0.0], [1.0])
    t = np.linspace(0.0, 1.0, 17)
    seed = straight_line(line, [0.0], [1.0], 16).with_nodes((t + np.sin(np.pi * t))[:, None])
    with pytest.raises(NewtonFailure) as excinfo:
        newton_solve(free_particle(), bc, seed, max_iter=0)
    assert excinfo.value.reason == "max_iterations"
    assert excinfo.value.residual > 0.0


def test_newton_on_quadratic_converges_to_the_line(line):
    bc = BoundaryCondition.dirichlet([0.0], [1.0])
    t = np.linspace(0.0, 1.0, 33)
    seed = straight_line(line, [0.0], [1.0], 32).with_nodes((t + 0.3 * np.sin(2 * np.pi * t))[:, None])
    cp = newton_solve(free_particle(), bc, seed)
    assert np.allclose(cp.path.nodes[:, 0], t, atol=1e-10)
    assert cp.action_value == pytest.approx(0.5, abs=1e-12)
    assert cp.morse_index == 0


def test_seed_families_respect_the_boundary_condition(circle, line):
    bc = BoundaryCondition.dirichlet([0.0], [0.0])
    seeds = generate_seeds(circle, bc, 32, SeedStrategy(kind="winding", windings=(-1, 0, 2)))
    assert [s.winding() for s in seeds] == [[-1], [0], [2]]
    assert all(s.nodes[0, 0] == 0.0 for s in seeds)
    fourier = generate_seeds(line, bc, 32, SeedStrategy(kind="fourier", count=5))
    assert len(fourier) == 5
    assert all(abs(s.nodes[-1, 0]) <= 1e-12 for s in fourier)
    grid = generate_seeds(circle, BoundaryCondition.periodic_loops(), 32, SeedStrategy(kind="constant_grid", count=8))
    assert len(grid) == 8
    with pytest.raises(ValueError):
        generate_seeds(line, bc, 32, SeedStrategy(kind="constant_grid"))
    with pytest.raises(ValueError):
        generate_seeds(line, bc, 32, SeedStrategy(kind="winding"))


def test_seeds_are_reproducible(line):
    bc = BoundaryCondition.dirichlet([0.0], [0.0])
    a = generate_seeds(line, bc, 16, SeedStrategy(rng_seed=5))
    b = generate_seeds(line, bc, 16, SeedStrategy(rng_seed=5))
    assert all(np.array_equal(x.nodes, y.nodes) for x, y in zip(a, b))


def test_deduplicate_identifies_lifts(circle):
    L = pendulum(0.5)
    bc = BoundaryCondition.periodic_loops()
    found = [newton_solve(L, bc, constant_path(circle, [q0], 16)) for q0 in (1.0, 0.5, 0.0)]
    assert lifted_distance(found[0].path, found[2].path) == pytest.approx(0.0)
    kept = deduplicate(found)
    assert [cp.id for cp in kept] == ["cp-000", "cp-001"]
    assert [cp.morse_index for cp in kept] == [0, 1]
    assert normalize_lift(constant_path(circle, [2.25], 4)).nodes[0, 0] == pytest.approx(0.25)


def test_winding_sweep_finds_geodesics(circle):
    bc = BoundaryCondition.dirichlet([0.0], [0.0])
    strategy = SeedStrategy(kind="winding", windings=(-2, -1, 0, 1, 2))
    cps = seed_sweep(free_particle(), bc, strategy, circle, 64)
    assert [cp.action_value for cp in cps] == pytest.approx([0.0, 0.5, 0.5, 2.0, 2.0], abs=1e-10)
    assert sorted(cp.path.winding()[0] for cp in cps) == [-2, -1, 0, 1, 2]
    assert all(cp.morse_index == 0 and cp.nullity == 0 for cp in cps)
    record = cps[1].to_record("paths/cp-001.csv")
    assert abs(record["winding"][0]) == 1 and record["path_csv_ref"] == "paths/cp-001.csv"


def test_ps_diagnostic_on_converged_and_escaping_tails(line):
    L = free_particle()
    bc = BoundaryCondition.dirichlet([0.0], [1.0])
    still = [straight_line(line, [0.0], [1.0], 16)] * 4
    report = ps_diagnostic(L, bc, still)
    assert report["converged"] and not report["escape"] and not report["ps_violation_symptom"]
    assert report["increments"] == pytest.approx([0.0, 0.0, 0.0])

    t = np.linspace(0.0, 1.0, 17)
    growing = [straight_line(line, [0.0], [1.0], 16).with_nodes((t + a * np.sin(np.pi * t))[:, None])
               for a in (1.0, 2.0, 3.0, 4.0)]
    report = ps_diagnostic(L, bc, growing)
    assert not report["converged"]
    assert report["ps_violation_symptom"]
    with pytest.raises(ValueError):
        ps_diagnostic(L, bc, [])
