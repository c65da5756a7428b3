import numpy as np
import pytest
import scipy.linalg

from morse_action.engine.errors import LagrangianError, NonFiniteAction
from morse_action.engine.families import duffing, electromagnetic, free_particle, pendulum, quartic_velocity
from morse_action.engine.lagrangian import LagrangianModel
from morse_action.engine.manifold import BoundaryCondition, ChartedManifold
from morse_action.engine.pathspace import (
    DiscretePath,
    action,
    constant_path,
    constrained_space,
    dual_norm,
    dump_matrix,
    gradient,
    gradient_full,
    hessian,
    hessian_continuity_probe,
    hilbert_product_h1,
    hilbert_product_zero,
    load_matrix,
    straight_line,
)


def _random_path(m, N, rng, amplitude=0.3):
    t = np.linspace(0.0, 1.0, N + 1)[:, None]
    nodes = rng.normal(scale=amplitude, size=(N + 1, m.dim)) + t
    return DiscretePath(nodes, m)


@pytest.mark.parametrize("N", [8, 64, 256])
def test_straight_line_action_is_exact(line, N):
    path = straight_line(line, [0.0], [1.0], N)
    assert action(free_particle(), path) == pytest.approx(0.5, abs=1e-12)


def test_path_csv_round_trip(circle, tmp_path):
    path = straight_line(circle, [0.1], [1.1], 16)
    path.to_csv(str(tmp_path / "p.csv"))
    assert np.array_equal(DiscretePath.from_csv(str(tmp_path / "p.csv"), circle).nodes, path.nodes)
    assert path.winding() == [1]


def test_space_dimensions(circle, line):
    assert constrained_space(line, BoundaryCondition.dirichlet([0.0], [1.0]), 16).dim == 15
    assert constrained_space(circle, BoundaryCondition.periodic_loops(), 16).dim == 16
    assert constrained_space(line, BoundaryCondition.free(), 16).dim == 17


@pytest.mark.parametrize("N, count", [(32, 10), pytest.param(128, 50, marks=pytest.mark.slow)])
@pytest.mark.parametrize("model", [free_particle(), pendulum(0.5), duffing()], ids=lambda m: m.name)
def test_gradient_matches_finite_differences(line, model, N, count):
    rng = np.random.default_rng(7)
    bc = BoundaryCondition.free()
    space = constrained_space(line, bc, N)
    step = 1e-6
    for _ in range(count):
        path = _random_path(line, N, rng)
        g = gradient(model, path, bc)
        fd = np.array([(action(model, path.displaced(space.extend(step * e)))
                        - action(model, path.displaced(space.extend(-step * e)))) / (2.0 * step)
                       for e in np.eye(space.dim)])
        assert np.max(np.abs(g - fd)) <= 1e-6 * max(1.0, np.max(np.abs(g)))


@pytest.mark.parametrize("model", [
    pendulum(0.5),
    duffing(),
    electromagnetic(2, magnetic_field=2.0, kinetic=[[1.0, 0.2], [0.2, 1.5]]),
], ids=lambda m: m.name)
def test_hessian_matches_finite_differenced_gradient(model):
    m = ChartedManifold.euclidean(model.dim)
    rng = np.random.default_rng(11)
    bc = BoundaryCondition.free()
    space = constrained_space(m, bc, 16)
    step = 1e-6
    path = _random_path(m, 16, rng)
    H = hessian(model, path, bc).H
    fd = np.column_stack([(gradient(model, path.displaced(space.extend(step * e)), bc)
                           - gradient(model, path.displaced(space.extend(-step * e)), bc)) / (2.0 * step)
                          for e in np.eye(space.dim)])
    assert np.max(np.abs(H - fd)) <= 1e-5 * np.max(np.abs(H))


def test_quadratic_dirichlet_spectrum(line):
    bc = BoundaryCondition.dirichlet([0.0], [1.0])
    pencil = hessian(free_particle(), straight_line(line, [0.0], [1.0], 256), bc)
    lowest = scipy.linalg.eigh(pencil.H, pencil.G, eigvals_only=True)[0]
    expected = np.pi ** 2 / (np.pi ** 2 + 1.0)
    assert abs(lowest - expected) <= 0.02 * expected


def test_pencil_split_and_bounds(circle):
    path = constant_path(circle, [0.5], 32)
    pencil = hessian(pendulum(0.5), path, BoundaryCondition.periodic_loops())
    report = pencil.check(ell2=1.0)
    assert report["max_asymmetry"] <= 1e-12
    assert report["split_defect"] == 0.0
    assert report["gram_min_eigenvalue"] > 0.0
    assert report["a_part_bound_holds"]
    assert np.array_equal(pencil.G, pencil.A_part)


def test_h1_product_and_dual_norm(line):
    bc = BoundaryCondition.free()
    path = constant_path(line, [0.0], 16)
    G = hilbert_product_h1(line, path, bc)
    space = constrained_space(line, bc, 16)
    ones = space.restrict(np.ones(17))
    # the constant function 1 has H^1 norm 1
    assert ones @ G @ ones == pytest.approx(1.0)
    covector = G @ ones
    assert dual_norm(covector, G) == pytest.approx(1.0)


def test_action_is_invariant_under_deck_translations(circle):
    rng = np.random.default_rng(3)
    path = _random_path(circle, 32, rng)
    lifted = path.with_nodes(path.nodes + 1.0)
    assert action(pendulum(0.5), lifted) == pytest.approx(action(pendulum(0.5), path), abs=1e-12)


def test_h1_product_on_the_coarsest_dirichlet_mesh(line):
    # one interior hat function of width 1/2: stiffness 2 + 2, mass 1/6 + 1/6
    G = hilbert_product_h1(line, constant_path(line, [0.0], 2), BoundaryCondition.dirichlet([0.0], [0.0]))
    assert G.shape == (1, 1)
    assert G[0, 0] == pytest.approx(13.0 / 3.0, abs=1e-14)


def test_pendulum_gradient_on_a_constant_loop(circle):
    # dL/dq = pi sin(2 pi q) is pi at q = 1/4 and the velocity term vanishes
    path = constant_path(circle, [0.25], 16)
    weights = np.ones(17)
    weights[[0, -1]] = 0.5
    assert np.allclose(gradient_full(pendulum(0.5), path), np.pi / 16 * weights, atol=1e-14)


def test_kinetic_gram_follows_the_fiber_hessian(line):
    bc = BoundaryCondition.free()
    rest = hessian(quartic_velocity(0.25), constant_path(line, [0.0], 16), bc).G_kinetic
    # d2L/dv2 = 1 + 3 v^2 is 4 on the unit-slope line
    moving = hessian(quartic_velocity(0.25), straight_line(line, [0.0], [1.0], 16), bc).G_kinetic
    assert np.allclose(moving, 4.0 * rest, rtol=1e-12, atol=0.0)
    path = straight_line(line, [0.0], [1.0], 16)
    heavy = hessian(free_particle(mass=2.0), path, bc).G_kinetic
    assert np.allclose(heavy, 2.0 * hessian(free_particle(), path, bc).G_kinetic, rtol=1e-12, atol=0.0)


def test_zero_product_of_the_free_particle_is_h1(line):
    bc = BoundaryCondition.free()
    path = straight_line(line, [0.0], [1.0], 16)
    assert np.allclose(hilbert_product_zero(free_particle(), path, bc), hilbert_product_h1(line, path, bc),
                       rtol=1e-12, atol=1e-14)


def test_zero_product_needs_a_positive_fiber_hessian(line):
    zero = lambda t, q, v: np.zeros(q.shape)
    concave = lambda t, q, v: -np.ones((q.shape[0], 1, 1))
    model = LagrangianModel(1, lambda t, q, v: -0.5 * v[:, 0] ** 2, zero, lambda t, q, v: -v, concave, zero, zero)
    with pytest.raises(LagrangianError):
        hilbert_product_zero(model, straight_line(line, [0.0], [1.0], 8))


def test_matrix_dump_round_trip(circle, tmp_path):
    pencil = hessian(pendulum(0.5), constant_path(circle, [0.3], 16), BoundaryCondition.periodic_loops())
    dump_matrix(str(tmp_path / "H.txt"), pencil.H)
    assert np.array_equal(load_matrix(str(tmp_path / "H.txt")), pencil.H)
    dump_matrix(str(tmp_path / "one.txt"), np.array([[2.5]]))
    assert load_matrix(str(tmp_path / "one.txt")).shape == (1, 1)


def test_non_finite_action_names_the_cell(line):
    def ev(t, q, v):
        out = 0.5 * v[:, 0] ** 2
        out[3] = np.nan
        return out

    zero = lambda t, q, v: np.zeros(q.shape)
    model = LagrangianModel(1, ev, zero, zero, zero, zero, zero)
    with pytest.raises(NonFiniteAction) as excinfo:
        action(model, straight_line(line, [0.0], [1.0], 8))
    assert excinfo.value.cell == 3


def test_probe_gap_persists_for_quartic_velocity(line):
    meshes = [8, 16, 32, 64, 128, 256, 512]
    report = hessian_continuity_probe(quartic_velocity(0.25), constant_path(line, [0.0], 8), meshes)
    gaps = [row["gap"] for row in report["meshes"]]
    assert min(gaps) >= 0.5
    assert report["min_gap"] == min(gaps)
    norms = [row["eta_norm_h1"] for row in report["meshes"]]
    assert all(b < a for a, b in zip(norms, norms[1:]))
    # |eta_eps|_H1 ~ eps^(1/2): halving eps divides the norm by about sqrt 2
    assert norms[-2] / norms[-1] == pytest.approx(np.sqrt(2.0), rel=0.05)
    assert min(abs(row["remainder"]) for row in report["meshes"]) >= 0.5


def test_probe_gap_vanishes_for_constant_kinetic_tensor(line):
    report = hessian_continuity_probe(free_particle(), constant_path(line, [0.0], 8), [8, 16, 32, 64])
    assert report["max_gap"] <= 1e-10
    assert all(abs(row["remainder"]) <= 1e-8 for row in report["meshes"])


def test_probe_rejects_odd_meshes(line):
    with pytest.raises(ValueError):
        hessian_continuity_probe(free_particle(), constant_path(line, [0.0], 8), [9])
