import numpy as np
import pytest

from morse_action.engine.errors import LagrangianError
from morse_action.engine.families import (
    duffing,
    electromagnetic,
    free_particle,
    from_block,
    inverted_oscillator,
    parse_potential,
    pendulum,
    quartic_velocity,
)
from morse_action.engine.lagrangian import (
    SampleBox,
    check_derivatives,
    check_growth_conditions,
    finite_difference_model,
    legendre_velocity,
)


@pytest.mark.parametrize("model", [
    free_particle(),
    pendulum(0.5),
    duffing(),
    quartic_velocity(0.25),
    electromagnetic(2, kinetic=[[2.0, 0.5], [0.5, 1.0]], magnetic_field=1.3,
                    potential=parse_potential([{"kind": "cosine", "amplitude": 0.3, "wavevector": [1.0, 2.0]}], 2)),
], ids=lambda m: m.name)
def test_analytic_derivatives_match_central_differences(model):
    errors = check_derivatives(model, seed=3)
    assert max(errors.values()) <= 1e-5, errors


def test_pendulum_growth_conditions_pass():
    report = check_growth_conditions(pendulum(0.5), SampleBox.cube(1, 1.0, 10.0), n_samples=500)
    assert report["passed"]
    assert "kinetic_lower_bound" in report["checked"]
    assert report["L1_base"]["declared"] == pytest.approx(2.0 * np.pi ** 2)


def test_duffing_lower_bound_constant():
    omega = 1.5 * np.pi
    L = duffing(omega=omega, quartic=0.25)
    assert L.c == pytest.approx(omega ** 4 / 4.0)
    report = check_growth_conditions(L, SampleBox.cube(1, 6.0, 10.0), n_samples=500)
    assert report["kinetic_lower_bound"]["passed"]
    # ell1 is not declared for duffing: estimated only
    assert report["L1_kinetic"]["passed"] is None


def test_inverted_oscillator_fails_lower_bound():
    report = check_growth_conditions(inverted_oscillator(), SampleBox.cube(1, 1.0, 10.0), n_samples=500)
    assert not report["passed"]
    assert report["kinetic_lower_bound"]["passed"] is False
    assert report["kinetic_lower_bound"]["worst_margin"] < 0.0


def test_undeclared_constants_are_estimated():
    L = quartic_velocity(0.25).with_constants(ell0=None, c=None, ell2=None)
    report = check_growth_conditions(L, SampleBox.cube(1, 1.0, 2.0), n_samples=200)
    assert report["checked"] == []
    assert report["passed"]
    assert report["L2_convexity"]["estimated"] == pytest.approx(1.0, abs=0.05)
    assert report["kinetic_lower_bound"]["estimated"]["ell0"] > 0.0


def test_finite_difference_model_is_flagged_and_close():
    exact = pendulum(0.5)
    fd = finite_difference_model(exact.eval, 1, name="fd-pendulum")
    assert fd.reduced_accuracy
    t = np.array([0.3, 0.7])
    q = np.array([[0.1], [0.4]])
    v = np.array([[1.5], [-0.5]])
    assert np.allclose(fd.d_q(t, q, v), exact.d_q(t, q, v), atol=1e-6)
    assert np.allclose(fd.d_qq(t, q, v), exact.d_qq(t, q, v), atol=1e-3)
    assert np.allclose(fd.d_vv(t, q, v), exact.d_vv(t, q, v), atol=1e-5)


def test_legendre_inverts_the_fiber_derivative():
    L = quartic_velocity(0.25)
    # dL/dv = v + v^3
    assert legendre_velocity(L, 0.0, [0.0], [2.0])[0] == pytest.approx(1.0, abs=1e-10)
    rng = np.random.default_rng(1)
    for _ in range(20):
        v = rng.uniform(-3.0, 3.0, size=1)
        p = L.point("d_v", 0.5, [0.2], v)
        assert np.allclose(legendre_velocity(L, 0.5, [0.2], p), v, atol=1e-10)


def test_legendre_with_magnetic_and_anisotropic_kinetic_terms():
    # dL/dv = A v + a
    assert legendre_velocity(electromagnetic(1, magnetic=[2.0]), 0.0, [0.3], [5.0])[0] == pytest.approx(3.0)
    L = electromagnetic(2, kinetic=[[2.0, 0.0], [0.0, 1.0]])
    assert np.allclose(legendre_velocity(L, 0.0, [0.1, 0.2], [4.0, 3.0]), [2.0, 3.0])


def test_understated_ell1_fails_the_kinetic_bound():
    # d2L/dv2 = 1 + 3 v^2 reaches 13 at the corners |v| = 2
    L = quartic_velocity(0.25).with_constants(ell1=4.0)
    report = check_growth_conditions(L, SampleBox.cube(1, 1.0, 2.0), n_samples=200)
    assert report["L1_kinetic"]["passed"] is False
    assert "L1_kinetic" in report["checked"]
    assert report["passed"] is False


def test_from_block_families_and_errors():
    assert from_block({"family": "pendulum", "amplitude": 0.25}, 1).c == pytest.approx(0.25)
    model = from_block({"family": "free_particle", "constants": {"ell1": 3.0}}, 2)
    assert model.dim == 2 and model.ell1 == 3.0
    with pytest.raises(ValueError):
        from_block({"family": "nope"}, 1)
    with pytest.raises(ValueError):
        from_block({"family": "pendulum", "constants": {"ell9": 1.0}}, 1)
    with pytest.raises(ValueError):
        parse_potential([{"kind": "cosine"}], 1)


def test_non_positive_kinetic_tensor_is_rejected():
    with pytest.raises(LagrangianError):
        electromagnetic(1, kinetic=[[-1.0]])
