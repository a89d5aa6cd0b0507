"""Generator evaluation and drift-condition verification."""

import math

import numpy as np
import pytest

from latticespin._errors import NoClosedForm, UsageError
from latticespin.lyapunov import (
    LyapunovSpec,
    SampleSpec,
    auto_constants,
    auxiliary_spec,
    drift_condition_check,
    generator_apply,
    unweighted_spec,
)
from latticespin.model import (
    SpinChainModel,
    constant_coupling,
    cubic_drift,
    exponential_weights,
    linear_drift,
)

LN2 = math.log(2.0)


def linear_chain(n, slope=-1.0, a=0.1, **kw):
    return SpinChainModel(volume=n, drift=linear_drift(slope, **kw),
                          coupling=constant_coupling(a))


# ---------------------------------------------------------------------------
# generator_apply
# ---------------------------------------------------------------------------

def test_generator_at_origin_is_pure_trace_term():
    # theta = 1, w = 1: L V(0) = theta(2 theta - 1) w_1 = 1 exactly.
    m = linear_chain(3)
    assert generator_apply(m, unweighted_spec(3), 0.0, np.zeros(3)) == 1.0


def test_generator_two_site_hand_value():
    # n=2, a=0.1, f(z)=-z, x=(1,1): LV = 2 x.drift + 1 = 2(-0.9 - 0.9) + 1
    # oracle: tools/derive_oracles.py::lyapunov_generator_hand_value = -2.6
    m = linear_chain(2, a=0.1)
    got = generator_apply(m, unweighted_spec(2), 0.0, np.array([1.0, 1.0]))
    assert got == pytest.approx(-2.6, abs=1e-14)


def test_generator_matches_finite_difference_generator():
    """L V = grad V . drift + (1/2) d^2 V / dx_1^2, checked by central FD."""
    rng = np.random.default_rng(17)
    m = SpinChainModel(volume=3, drift=cubic_drift(1.0, -1.0, lam=1.0, eta=1.0),
                       coupling=constant_coupling(0.2))
    from latticespin.model import drift_vector
    eps = 1e-5
    eps2 = 1e-4  # the second difference cancels ~1e-16/eps2^2 of rounding noise
    for theta in (1.0, 2.0):
        spec = LyapunovSpec(w=np.array([1.0, 0.5, 0.25]), theta=theta, offset=1.0)
        for _ in range(100):
            # keep clear of the axes, where |x|^(2 theta - 1) kinks for theta=1
            x = rng.normal(size=3)
            x += np.sign(x) * 0.2
            b = drift_vector(m, 0.0, x)
            grad = np.empty(3)
            for i in range(3):
                e = np.zeros(3)
                e[i] = eps
                grad[i] = (spec.value(x + e) - spec.value(x - e)) / (2 * eps)
            e1 = np.array([eps2, 0.0, 0.0])
            dxx = (spec.value(x + e1) - 2 * spec.value(x) + spec.value(x - e1)) / eps2 ** 2
            fd = float(grad @ b + 0.5 * dxx)
            exact = generator_apply(m, spec, 0.0, x)
            assert abs(exact - fd) <= 1e-6 * max(1.0, abs(exact))


def test_generator_is_linear_in_the_weights():
    m = linear_chain(2, a=0.2)
    x = np.array([0.7, -1.3])
    w = np.array([1.0, 0.5])
    a = generator_apply(m, LyapunovSpec(w=w, theta=1.0, offset=0.0), 0.0, x)
    b = generator_apply(m, LyapunovSpec(w=2 * w, theta=1.0, offset=0.0), 0.0, x)
    assert b == 2 * a  # doubling weights doubles every term exactly


def test_generator_ignores_the_offset():
    m = linear_chain(2)
    x = np.array([0.3, 0.4])
    w = np.ones(2)
    lv0 = generator_apply(m, LyapunovSpec(w=w, theta=1.0, offset=0.0), 0.0, x)
    lv1 = generator_apply(m, LyapunovSpec(w=w, theta=1.0, offset=5.0), 0.0, x)
    assert lv0 == lv1


def test_generator_rejects_mismatched_sizes():
    m = linear_chain(3)
    with pytest.raises(UsageError):
        generator_apply(m, unweighted_spec(2), 0.0, np.zeros(3))
    with pytest.raises(UsageError):
        generator_apply(m, unweighted_spec(3), 0.0, np.zeros(2))


def test_spec_validation():
    with pytest.raises(UsageError):
        LyapunovSpec(w=np.array([1.0, -1.0]))
    with pytest.raises(UsageError):
        LyapunovSpec(w=np.ones(2), theta=0.5)


# ---------------------------------------------------------------------------
# auto_constants
# ---------------------------------------------------------------------------

def test_auto_constants_unweighted():
    # (c, C) = (1, 2 n eta + 2): n=3, eta=0.5 -> (1, 5).
    m = linear_chain(3, eta=0.5)
    assert auto_constants(m, unweighted_spec(3)) == (1.0, 5.0)


def test_auto_constants_weighted_geometric():
    # v(i) = 2^-i sums to exactly 1, so C = 2 theta eta * 1 = 1 at eta = 0.5.
    W = exponential_weights(LN2, v_kappa=LN2)
    m = linear_chain(4, slope=-2.0, a=0.2, eta=0.5)
    spec = auxiliary_spec(W, 4, 1.0)
    assert spec.w_total == pytest.approx(1.0, rel=1e-12)
    c, C = auto_constants(m, spec)
    assert (c, C) == (1.0, pytest.approx(1.0, rel=1e-12))


def test_auto_constants_exotic_shape_has_no_closed_form():
    m = linear_chain(2)
    with pytest.raises(NoClosedForm):
        auto_constants(m, LyapunovSpec(w=np.array([1.0, 2.0]), theta=1.0, offset=1.0))
    with pytest.raises(NoClosedForm):
        auto_constants(m, LyapunovSpec(w=np.ones(2), theta=1.0, offset=0.0))


def test_auxiliary_spec_needs_v():
    with pytest.raises(UsageError):
        auxiliary_spec(exponential_weights(0.5), 3, 1.0)


# ---------------------------------------------------------------------------
# drift_condition_check
# ---------------------------------------------------------------------------

def test_drift_condition_unweighted_passes():
    m = linear_chain(2, a=0.2)
    spec = unweighted_spec(2)
    rep = drift_condition_check(m, spec, *auto_constants(m, spec))
    assert rep.passed
    assert rep.max_violation < 0


def test_drift_condition_weighted_passes():
    W = exponential_weights(LN2, v_kappa=LN2)
    m = linear_chain(4, slope=-2.0, a=0.2, eta=0.5)
    spec = auxiliary_spec(W, 4, 1.0)
    rep = drift_condition_check(m, spec, *auto_constants(m, spec))
    assert rep.passed
    assert rep.max_violation == pytest.approx(-0.5, abs=1e-9)  # attained at x=0


def test_drift_condition_huge_rate_fails_with_witness():
    m = linear_chain(2, a=0.2)
    spec = unweighted_spec(2)
    _, C = auto_constants(m, spec)
    rep = drift_condition_check(m, spec, 1e6, C)
    assert not rep.passed
    assert rep.max_violation > 0
    assert len(rep.witness) == 2
    assert all(np.isfinite(v) for v in rep.witness)


def test_drift_condition_origin_is_always_probed():
    # With C = 0 the origin itself violates: LV(0) + c V(0) = 1 + 1 = 2.
    m = linear_chain(2, a=0.2)
    rep = drift_condition_check(m, unweighted_spec(2), 1.0, 0.0)
    assert not rep.passed
    assert rep.max_violation >= 2.0


def test_drift_condition_rejects_nonpositive_rate():
    m = linear_chain(2)
    with pytest.raises(UsageError):
        drift_condition_check(m, unweighted_spec(2), 0.0, 1.0)


def test_sample_spec_controls_the_probe_cloud():
    m = linear_chain(2, a=0.2)
    spec = unweighted_spec(2)
    c, C = auto_constants(m, spec)
    a = drift_condition_check(m, spec, c, C, SampleSpec(count=500, seed=1))
    b = drift_condition_check(m, spec, c, C, SampleSpec(count=500, seed=1))
    assert a.max_violation == b.max_violation  # deterministic given the seed
