"""Steering the noise-free chain through site 1: jets, interpolant, ladder."""

import numpy as np
import pytest

from latticespin._errors import BlowupError, UsageError
from latticespin.model import (
    CouplingCoefficients,
    LocalDrift,
    SpinChainModel,
    constant_coupling,
    cubic_drift,
    drift_vector,
    linear_drift,
    modulated_coupling,
    table_coupling,
)
from latticespin.control import (
    ControlPlan,
    EndpointJets,
    back_substitute,
    endpoint_jets,
    hermite_interpolant,
    verify_steering,
    _hermite_matrix,
)


def cubic():
    return cubic_drift(1.0, -1.0, lam=1.0, eta=1.0)


def chain3(a=0.3):
    return SpinChainModel(drift=cubic(), coupling=constant_coupling(a), volume=3)


def rk4_flow(model, y0, t_end, steps):
    """Plain 4th-order integration of the uncontrolled chain (test oracle)."""
    h = t_end / steps
    y = np.asarray(y0, dtype=float).copy()
    for _ in range(steps):
        k1 = drift_vector(model, 0.0, y)
        k2 = drift_vector(model, 0.0, y + 0.5 * h * k1)
        k3 = drift_vector(model, 0.0, y + 0.5 * h * k2)
        k4 = drift_vector(model, 0.0, y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return y


# ---------------------------------------------------------------------------
# endpoint jets
# ---------------------------------------------------------------------------


def test_order_zero_entries_anchor_the_jets():
    m = chain3()
    rng = np.random.default_rng(4)
    for x, z in zip(rng.normal(size=(5, 3)), rng.normal(size=(5, 3))):
        jets = endpoint_jets(m, x, z, 1.5)
        assert jets.at_start[0] == x[2]
        assert jets.at_end[0] == z[2]
        assert jets.order == 2
        assert jets.horizon == 1.5


def test_first_derivative_is_coupling_feed_plus_drift():
    m = SpinChainModel(drift=cubic(), coupling=table_coupling([0.4, 0.7], [0.25, 0.6]),
                       volume=3)
    rng = np.random.default_rng(2)
    for x in rng.normal(size=(10, 3)):
        jets = endpoint_jets(m, x, np.zeros(3), 1.0)
        expect = 0.7 * x[1] + (x[2] - x[2] ** 3)
        assert jets.at_start[1] == pytest.approx(expect, abs=1e-12)


def test_second_derivative_hand_formula_three_sites():
    # y3''(0) = a32*(a21*x1 + a23*x3 + f(x2)) + f'(x3)*(a32*x2 + f(x3))
    a21, a32, a23 = 0.4, 0.7, 0.6
    m = SpinChainModel(drift=cubic(), coupling=table_coupling([a21, a32], [0.25, a23]),
                       volume=3)
    f = lambda v: v - v ** 3
    fp = lambda v: 1.0 - 3.0 * v ** 2
    rng = np.random.default_rng(2)
    for x in rng.normal(size=(10, 3)):
        jets = endpoint_jets(m, x, np.zeros(3), 1.0)
        expect = a32 * (a21 * x[0] + a23 * x[2] + f(x[1])) + fp(x[2]) * (a32 * x[1] + f(x[2]))
        assert jets.at_start[2] == pytest.approx(expect, abs=1e-12)


def test_chain_without_drift_keeps_the_single_coupling_term():
    m = SpinChainModel(drift=linear_drift(0.0), coupling=table_coupling([0.45], [0.3]),
                       volume=2)
    jets = endpoint_jets(m, np.array([1.7, -0.6]), np.zeros(2), 1.0)
    assert jets.at_start[1] == 0.45 * 1.7


def test_jets_match_a_simulated_trajectory():
    """Sites above the forcing are uncontrolled, so derivatives of the top
    coordinate can be cross-checked by differentiating an integrated flow."""
    m = SpinChainModel(drift=cubic(), coupling=constant_coupling(0.3), volume=4)
    x = np.array([0.8, -0.4, 0.2, 0.6])
    jets = endpoint_jets(m, x, np.zeros(4), 1.0)
    H = 0.05
    top = {k: (x[3] if k == 0 else
               rk4_flow(m, x, k * H, 64 * abs(k))[3]) for k in range(-3, 4)}
    d1 = (-top[2] + 8 * top[1] - 8 * top[-1] + top[-2]) / (12 * H)
    d2 = (-top[2] + 16 * top[1] - 30 * top[0] + 16 * top[-1] - top[-2]) / (12 * H ** 2)
    d3 = (-top[3] + 8 * top[2] - 13 * top[1] + 13 * top[-1] - 8 * top[-2] + top[-3]) / (8 * H ** 3)
    assert jets.at_start[0] == x[3]
    assert jets.at_start[1] == pytest.approx(d1, abs=1e-4)
    assert jets.at_start[2] == pytest.approx(d2, abs=1e-4)
    assert jets.at_start[3] == pytest.approx(d3, abs=1e-4)


def test_insufficient_drift_jets_are_reported():
    stub = LocalDrift(eval=lambda t, z: -z,
                      jet=lambda t, z, k: [-z, -1.0][: k + 1],
                      eta=0.1, lam=1.0)
    m = SpinChainModel(drift=stub, coupling=constant_coupling(0.2), volume=4)
    with pytest.raises(UsageError, match="required for steering"):
        endpoint_jets(m, np.zeros(4), np.ones(4), 1.0)


# ---------------------------------------------------------------------------
# two-point interpolation
# ---------------------------------------------------------------------------


def test_flat_data_gives_the_constant_interpolant():
    jets = EndpointJets(at_start=np.array([3.5, 0.0, 0.0]),
                        at_end=np.array([3.5, 0.0, 0.0]), horizon=2.0)
    poly = hermite_interpolant(jets)
    np.testing.assert_allclose(poly.coefficients, [3.5, 0, 0, 0, 0, 0],
                               rtol=0.0, atol=1e-12)
    for t in np.linspace(0.0, 2.0, 9):
        assert poly.value(t) == pytest.approx(3.5, abs=1e-12)


def test_quintic_matches_frozen_midpoint():
    jets = EndpointJets(at_start=np.array([0.0, 1.0, 0.0]),
                        at_end=np.array([1.0, -1.0, 0.0]), horizon=1.0)
    poly = hermite_interpolant(jets)
    # frozen: tools/derive_oracles.py hermite_quintic_midpoint (13/16 exactly)
    np.testing.assert_allclose(poly.coefficients, [0.0, 1.0, 0.0, 8.0, -14.0, 6.0],
                               rtol=0.0, atol=1e-12)
    assert poly.value(0.5) == pytest.approx(0.8124999999999991, abs=1e-14)


def test_degree_and_jet_reproduction():
    rng = np.random.default_rng(8)
    jets = EndpointJets(at_start=rng.normal(size=3), at_end=rng.normal(size=3),
                        horizon=1.5)
    poly = hermite_interpolant(jets)
    assert poly.degree == 5
    np.testing.assert_allclose(poly.jet(0.0, 2), jets.at_start, rtol=1e-10, atol=1e-10)
    np.testing.assert_allclose(poly.jet(1.5, 2), jets.at_end, rtol=1e-10, atol=1e-10)


def test_time_rescaling_is_a_change_of_variables():
    rng = np.random.default_rng(8)
    at0, atT = rng.normal(size=3), rng.normal(size=3)
    for T in (1.0, 0.25, 0.0625):
        direct = hermite_interpolant(EndpointJets(at_start=at0, at_end=atT, horizon=T))
        scale = T ** np.arange(3)
        unit = hermite_interpolant(EndpointJets(at_start=at0 * scale,
                                                at_end=atT * scale, horizon=1.0))
        for t in np.linspace(0.0, T, 7):
            assert direct.value(t) == pytest.approx(unit.value(t / T), abs=1e-9)


def test_long_horizon_falls_back_to_the_rescaled_solve():
    rng = np.random.default_rng(1)
    at0, atT = rng.normal(size=3), rng.normal(size=3)
    T = 1e3
    assert np.linalg.cond(_hermite_matrix(T, 3)) > 1e12  # direct solve is vetoed
    poly = hermite_interpolant(EndpointJets(at_start=at0, at_end=atT, horizon=T))
    np.testing.assert_allclose(poly.jet(0.0, 2), at0, rtol=1e-10, atol=1e-10)
    np.testing.assert_allclose(poly.jet(T, 2), atT, rtol=1e-10, atol=1e-10)


def test_hopeless_horizon_reports_failure():
    # curvature of order one over a 1e4 window cannot be certified in floats
    rng = np.random.default_rng(8)
    jets = EndpointJets(at_start=rng.normal(size=3), at_end=rng.normal(size=3),
                        horizon=1e4)
    with pytest.raises(UsageError, match="reproduce"):
        hermite_interpolant(jets)


def test_interpolation_input_validation():
    with pytest.raises(UsageError):
        hermite_interpolant(EndpointJets(at_start=np.zeros(2), at_end=np.zeros(2),
                                         horizon=-1.0))
    with pytest.raises(UsageError):
        EndpointJets(at_start=np.zeros(2), at_end=np.zeros(3), horizon=1.0)


# ---------------------------------------------------------------------------
# back-substitution
# ---------------------------------------------------------------------------


def test_single_site_control_identity():
    # n=1 has no ladder: u is exactly y1' - f(y1) along the interpolant
    m = SpinChainModel(drift=linear_drift(-1.0), coupling=constant_coupling(0.3),
                       volume=1)
    poly = hermite_interpolant(endpoint_jets(m, [2.0], [-1.0], 1.0))
    grid = np.linspace(0.0, 1.0, 64)
    plan = back_substitute(m, poly, grid=grid)
    expect = np.array([poly.jet(t, 1)[1] + poly.value(t) for t in grid])
    np.testing.assert_array_equal(plan.u, expect)


def test_linear_ladder_matches_symbolic_expansion():
    # frozen: tools/derive_oracles.py control_linear_ladder_y1 (numpy.polynomial
    # expansion of the ladder, no package code)
    frozen = [1.0, 30.03851038967631, 41.68081593253053, 38.29012345679004,
              23.48447899202352, 2.1946857694456665, -19.27777777777779,
              -33.20284001422545, -30.36391810191531, -5.684341886080802e-14]
    m = SpinChainModel(drift=linear_drift(-1.0), coupling=constant_coupling(0.5),
                       volume=3)
    x, z = np.array([1.0, 0.0, 0.0]), np.array([0.0, 0.0, 1.0])
    plan = back_substitute(m, hermite_interpolant(endpoint_jets(m, x, z, 1.0)),
                           grid=np.linspace(0.0, 1.0, 10))
    np.testing.assert_allclose(plan.states[:, 0], frozen, rtol=0.0, atol=1e-10)


def test_plan_identities_hold_on_a_dense_grid():
    m = chain3()
    x, z = np.array([1.0, 0.0, -1.0]), np.array([0.0, 1.0, 0.0])
    plan = back_substitute(m, hermite_interpolant(endpoint_jets(m, x, z, 2.0)),
                           grid=np.linspace(0.0, 2.0, 1000))
    assert plan.residual(m) <= 1e-8
    assert plan.endpoint_defect(x, z) <= 1e-8


def test_steering_is_exact_before_any_integration():
    m = SpinChainModel(drift=cubic(), coupling=constant_coupling(0.3), volume=4)
    rng = np.random.default_rng(31)
    for _ in range(3):
        x = rng.uniform(-1.0, 1.0, 4)
        z = rng.uniform(-1.0, 1.0, 4)
        plan = back_substitute(m, hermite_interpolant(endpoint_jets(m, x, z, 1.0)))
        assert plan.endpoint_defect(x, z) <= 1e-8


def test_dead_link_is_a_structural_error():
    dead = SpinChainModel(drift=cubic(), coupling=CouplingCoefficients(
        sub=lambda i, t: 0.0 if i == 3 else 0.3, sup=lambda i, t: 0.3, bound=0.3),
        volume=3)
    poly = hermite_interpolant(endpoint_jets(chain3(), np.zeros(3), np.ones(3), 1.0))
    with pytest.raises(UsageError, match=r"a_\{3,2\}"):
        back_substitute(dead, poly)


def test_grid_must_span_the_horizon_and_increase():
    m = chain3()
    poly = hermite_interpolant(endpoint_jets(m, np.zeros(3), np.ones(3), 1.0))
    with pytest.raises(UsageError, match="span"):
        back_substitute(m, poly, grid=np.linspace(0.0, 0.5, 16))
    with pytest.raises(UsageError, match="increasing"):
        back_substitute(m, poly, grid=np.array([0.0, 0.6, 0.5, 1.0]))


def test_periodic_models_are_rejected():
    m = SpinChainModel(drift=linear_drift(-1.0),
                       coupling=modulated_coupling(0.2, 0.5, 1.0), volume=3)
    with pytest.raises(UsageError, match="time-homogeneous"):
        endpoint_jets(m, np.zeros(3), np.ones(3), 1.0)
    poly = hermite_interpolant(endpoint_jets(chain3(), np.zeros(3), np.ones(3), 1.0))
    with pytest.raises(UsageError, match="time-homogeneous"):
        back_substitute(m, poly)


def test_horizon_must_be_positive():
    with pytest.raises(UsageError):
        endpoint_jets(chain3(), np.zeros(3), np.ones(3), 0.0)


# ---------------------------------------------------------------------------
# verification by integration
# ---------------------------------------------------------------------------


def test_steering_an_equilibrium_costs_nothing():
    m = chain3(a=1.0)
    x = np.zeros(3)
    plan = back_substitute(m, hermite_interpolant(endpoint_jets(m, x, x, 1.0)))
    np.testing.assert_array_equal(plan.u, np.zeros_like(plan.u))
    assert verify_steering(m, x, x, 1.0, plan, rk_step=1e-3) == 0.0


def test_single_site_linear_steering_is_sharp():
    m = SpinChainModel(drift=linear_drift(-1.0), coupling=constant_coupling(0.3),
                       volume=1)
    x, z = np.array([2.0]), np.array([-1.0])
    plan = back_substitute(m, hermite_interpolant(endpoint_jets(m, x, z, 1.0)))
    assert verify_steering(m, x, z, 1.0, plan, rk_step=1e-4) <= 1e-9


def test_endpoint_error_decays_at_fourth_order():
    m = chain3(a=1.0)
    x, z = np.array([1.0, 0.0, -1.0]), np.array([0.0, 1.0, 0.0])
    plan = back_substitute(m, hermite_interpolant(endpoint_jets(m, x, z, 2.0)))
    errors = [verify_steering(m, x, z, 2.0, plan, rk_step=s)
              for s in (0.04, 0.02, 0.01, 0.005, 0.0025)]
    for coarse, fine in zip(errors, errors[1:]):
        assert 8.0 <= coarse / fine <= 32.0
    assert errors[-1] <= 1e-9


def test_controlled_blowup_is_reported():
    m = SpinChainModel(drift=linear_drift(-1.0), coupling=constant_coupling(0.3),
                       volume=1)
    x, z = np.array([0.0]), np.array([5e12])
    plan = back_substitute(m, hermite_interpolant(endpoint_jets(m, x, z, 1.0)))
    with pytest.raises(BlowupError):
        verify_steering(m, x, z, 1.0, plan, rk_step=1e-2)


def test_verifier_input_validation():
    m = chain3()
    x, z = np.zeros(3), np.ones(3)
    plan = back_substitute(m, hermite_interpolant(endpoint_jets(m, x, z, 1.0)))
    with pytest.raises(UsageError, match="horizon"):
        verify_steering(m, x, z, 2.0, plan, rk_step=1e-2)
    with pytest.raises(UsageError):
        verify_steering(m, x, z, 1.0, plan, rk_step=0.0)
