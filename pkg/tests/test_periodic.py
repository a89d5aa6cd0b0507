"""Phase-lifted dynamics, stroboscopic measures, and transport consistency."""

import math

import numpy as np
import pytest

from latticespin._errors import EstimationError, UsageError
from latticespin.model import (
    SpinChainModel,
    constant_coupling,
    coupling_arrays,
    linear_drift,
    modulated_coupling,
)
from latticespin.ergodics import (
    estimate_invariant,
    measure_from_samples,
    shared_edges,
    tv_distance,
)
from latticespin.periodic import (
    PhaseState,
    _periodic_samples,
    _reduce_phase,
    average_lift,
    estimate_periodic_measure,
    simulate_lifted,
    transport_check,
    write_phase_csvs,
)
from latticespin.sim import make_noise, simulate


def swinging(depth=0.9):
    """The n=2 chain with a one-period coupling swing (T = 1)."""
    return SpinChainModel(drift=linear_drift(-2.0),
                          coupling=modulated_coupling(0.2, depth, 1.0), volume=2)


HOMOGENEOUS = SpinChainModel(drift=linear_drift(-2.0),
                             coupling=constant_coupling(0.2), volume=2)


# ---------------------------------------------------------------------------
# lifting
# ---------------------------------------------------------------------------


def test_reduce_phase_representatives():
    assert _reduce_phase(0.3, 1.0) == 0.3  # in-range values pass through exactly
    assert _reduce_phase(1.25, 1.0) == 0.25
    assert _reduce_phase(-0.25, 1.0) == 0.75
    assert _reduce_phase(1.0, 1.0) == 0.0
    for s in (-3.7, 12.9, 0.0):
        r = _reduce_phase(s, 2.5)
        assert 0.0 <= r < 2.5


def test_phase_state_validation():
    PhaseState(phase=0.0, state=np.zeros(2), period=1.0)
    with pytest.raises(UsageError):
        PhaseState(phase=1.0, state=np.zeros(2), period=1.0)
    with pytest.raises(UsageError):
        PhaseState(phase=0.0, state=np.zeros(2), period=0.0)


def test_degenerate_modulation_matches_homogeneous_stepping():
    # depth 0 leaves the coefficients constant: declaring a period must not
    # change a single bit of the trajectory
    noise = make_noise(seed=42, h=0.01, horizon=3.0)
    x0 = np.array([0.5, -0.5])
    lifted = simulate_lifted(swinging(depth=0.0), x0, 0.0, noise)
    plain = simulate(HOMOGENEOUS, x0, noise)
    np.testing.assert_array_equal(lifted.states, plain.states)
    assert not lifted.blowup


def test_phase_column_is_elapsed_time_mod_period():
    noise = make_noise(seed=7, h=0.01, horizon=2.5)
    lifted = simulate_lifted(swinging(), np.zeros(2), 0.25, noise)
    np.testing.assert_array_equal(lifted.phases, np.mod(0.25 + lifted.times, 1.0))
    assert np.all((lifted.phases >= 0.0) & (lifted.phases < 1.0))
    end = lifted.final()
    assert end.period == 1.0
    np.testing.assert_array_equal(end.state, lifted.states[-1])


def test_shifting_the_start_phase_by_one_period_changes_nothing():
    noise = make_noise(seed=42, h=0.01, horizon=3.0)
    x0 = np.array([0.5, -0.5])
    a = simulate_lifted(swinging(), x0, 0.25, noise)
    b = simulate_lifted(swinging(), x0, 1.25, noise)
    np.testing.assert_array_equal(a.states, b.states)
    np.testing.assert_array_equal(a.phases, b.phases)


def test_modulated_coefficients_match_hand_evaluation():
    m = SpinChainModel(drift=linear_drift(-2.0),
                       coupling=modulated_coupling(0.1, 0.5, 2.0), volume=2)
    for t in (0.0, 0.3, 0.7, 1.1, 1.9):
        sub, sup = coupling_arrays(m, t)
        hand = 0.1 * (1.0 + 0.5 * math.sin(2.0 * math.pi * t / 2.0))
        assert sub[1] == pytest.approx(hand, abs=1e-15)
        assert sup[0] == pytest.approx(hand, abs=1e-15)


def test_aperiodic_models_are_rejected():
    with pytest.raises(UsageError, match="period"):
        simulate_lifted(HOMOGENEOUS, np.zeros(2), 0.0, make_noise(0, 0.01, 1.0))
    with pytest.raises(UsageError, match="period"):
        estimate_periodic_measure(HOMOGENEOUS, 0.0, 2, 10, 0)
    with pytest.raises(UsageError, match="period"):
        average_lift(HOMOGENEOUS, 2, 10, 0)


# ---------------------------------------------------------------------------
# stroboscopic estimation
# ---------------------------------------------------------------------------


def test_stroboscopic_estimates_are_phase_periodic():
    a = estimate_periodic_measure(swinging(), 0.25, 5, 500, 7, h=0.005)
    b = estimate_periodic_measure(swinging(), 1.25, 5, 500, 7, h=0.005)
    again = estimate_periodic_measure(swinging(), 0.25, 5, 500, 7, h=0.005)
    np.testing.assert_array_equal(a.counts, b.counts)
    np.testing.assert_array_equal(a.edges, b.edges)
    np.testing.assert_array_equal(a.counts, again.counts)


def test_cycle_step_is_snapped_to_divide_the_period():
    mu = estimate_periodic_measure(swinging(), 0.0, 2, 40, 3, h=0.32)
    assert mu.provenance["h"] == pytest.approx(1.0 / 3.0, abs=0)


def test_degenerate_periodic_matches_the_invariant_estimate():
    strobe = estimate_periodic_measure(swinging(depth=0.0), 0.0, 10, 3000, 5,
                                       h=0.005)
    plain = estimate_invariant(HOMOGENEOUS, burn_in=10.0, n_samples=3000,
                               thinning=1.0, seed=11, h=0.005)
    for name in ("m1", "m2"):
        gap = np.abs(strobe.moments[name] - plain.moments[name])
        limit = 3.0 * np.sqrt(strobe.se[name] ** 2 + plain.se[name] ** 2)
        assert np.all(gap <= limit)


def test_split_halves_of_one_path_agree():
    samples, _ = _periodic_samples(swinging(), 0.0, 10, 4000, 21, h=0.005,
                                   scheme="euler", x0=None, threads=None,
                                   stream=0)
    even, odd = samples[0::2], samples[1::2]
    edges = shared_edges([even, odd], bins=16)
    tv = tv_distance(measure_from_samples(even, edges=edges),
                     measure_from_samples(odd, edges=edges))
    floor = 2.0 * math.sqrt(1.0 / even.shape[0] + 1.0 / odd.shape[0])
    assert tv < floor


def test_phases_zero_and_half_genuinely_differ():
    # the depth-0.9 swing leaves a visible footprint on the central bins
    edges = np.linspace(-0.3, 0.3, 65)
    mu0 = estimate_periodic_measure(swinging(), 0.0, 10, 3000, 5, h=0.005,
                                    edges=edges)
    half = estimate_periodic_measure(swinging(), 0.5, 10, 3000, 5, h=0.005,
                                     edges=edges)
    floor = 2.0 * math.sqrt(2.0 / 3000)
    assert tv_distance(mu0, half) > 1.5 * floor


def test_sampling_argument_validation():
    with pytest.raises(UsageError):
        estimate_periodic_measure(swinging(), 0.0, 2, 0, 1)
    with pytest.raises(UsageError):
        estimate_periodic_measure(swinging(), 0.0, -1, 10, 1)
    with pytest.raises(UsageError):
        estimate_periodic_measure(swinging(), 0.0, 2, 10, 1, x0=np.zeros(3))


def test_unstable_periodic_path_is_reported():
    runaway = SpinChainModel(drift=linear_drift(2.0, lam=1.0),
                             coupling=modulated_coupling(0.1, 0.5, 1.0), volume=1)
    with pytest.raises(EstimationError):
        estimate_periodic_measure(runaway, 0.0, 0, 30, 1, h=0.01,
                                  x0=np.array([50.0]))


# ---------------------------------------------------------------------------
# transport
# ---------------------------------------------------------------------------


def test_transport_is_trivial_at_equal_times():
    mu = estimate_periodic_measure(swinging(), 0.0, 10, 3000, 5, h=0.005)
    report = transport_check(swinging(), 0.0, 0.0, mu, mu, replicas=20000, seed=3,
                             h=0.005)
    assert report.gap <= report.noise_floor
    assert report.within(2.0)
    assert report.replicas == 20000


def test_one_period_transport_returns_to_the_same_law():
    mu = estimate_periodic_measure(swinging(), 0.0, 10, 3000, 5, h=0.005)
    report = transport_check(swinging(), 0.0, 1.0, mu, mu, replicas=20000, seed=3,
                             h=0.005)
    assert report.within(2.0)
    payload = report.to_jsonable()
    assert payload["t"] == 1.0 and payload["replicas"] == 20000


def test_degenerate_half_period_transport_is_stationary():
    mdeg = swinging(depth=0.0)
    mu = estimate_periodic_measure(mdeg, 0.0, 10, 3000, 5, h=0.005)
    report = transport_check(mdeg, 0.0, 0.5, mu, mu, replicas=20000, seed=3,
                             h=0.005)
    assert report.within(2.0)


def test_transport_validation():
    mu = estimate_periodic_measure(swinging(), 0.0, 2, 50, 5, h=0.01)
    with pytest.raises(UsageError, match="forward"):
        transport_check(swinging(), 1.0, 0.5, mu, mu, replicas=100, seed=0)
    with pytest.raises(UsageError):
        transport_check(swinging(), 0.0, 1.0, mu, mu, replicas=1, seed=0)
    other = SpinChainModel(drift=linear_drift(-2.0),
                           coupling=modulated_coupling(0.2, 0.9, 1.0), volume=3)
    with pytest.raises(UsageError, match="volume"):
        transport_check(other, 0.0, 1.0, mu, mu, replicas=100, seed=0)


# ---------------------------------------------------------------------------
# phase averaging
# ---------------------------------------------------------------------------


def test_single_phase_average_is_the_stroboscopic_estimate():
    avg = average_lift(swinging(), 1, 400, 13, burn_cycles=5, h=0.005)
    direct = estimate_periodic_measure(swinging(), 0.0, 5, 400, 13, h=0.005)
    np.testing.assert_array_equal(avg.mixture.counts, direct.counts)
    np.testing.assert_array_equal(avg.mixture.edges, direct.edges)
    np.testing.assert_array_equal(avg.per_phase[0].counts, direct.counts)


def test_phase_histogram_is_uniform():
    avg = average_lift(swinging(), 4, 400, 13, burn_cycles=5, h=0.005)
    assert avg.phases.size == 4
    np.testing.assert_array_equal(avg.phase_counts, [400, 400, 400, 400])
    chi2, p = avg.phase_uniformity()
    assert p > 0.01


def test_mixture_of_degenerate_phases_matches_the_invariant():
    mdeg = swinging(depth=0.0)
    avg = average_lift(mdeg, 2, 1500, 17, burn_cycles=10, h=0.005)
    plain = estimate_invariant(HOMOGENEOUS, burn_in=10.0, n_samples=3000,
                               thinning=1.0, seed=11, h=0.005)
    # conservative error bars: a single 1500-cycle phase is noisier than the
    # 3000-sample mixture it feeds
    proxy = estimate_periodic_measure(mdeg, 0.0, 10, 1500, 17, h=0.005)
    for name in ("m1", "m2"):
        gap = np.abs(avg.mixture.moments[name] - plain.moments[name])
        limit = 3.0 * np.sqrt(proxy.se[name] ** 2 + plain.se[name] ** 2)
        assert np.all(gap <= limit)


def test_phase_csvs_and_manifest(tmp_path):
    avg = average_lift(swinging(), 2, 200, 13, burn_cycles=4, h=0.01)
    out1 = tmp_path / "a"
    out2 = tmp_path / "b"
    out1.mkdir()
    out2.mkdir()
    manifest = write_phase_csvs(avg, str(out1))
    write_phase_csvs(avg, str(out2))
    assert set(e["file"] for e in manifest["phases"]) == {"phase_000.csv",
                                                          "phase_001.csv"}
    assert manifest["mixture"] == "phase_mixture.csv"
    assert "phase_uniformity" in manifest
    for name in ("phase_000.csv", "phase_001.csv", "phase_mixture.csv",
                 "phase_manifest.json"):
        blob1 = (out1 / name).read_bytes()
        assert blob1 == (out2 / name).read_bytes()  # byte-reproducible
    text = (out1 / "phase_000.csv").read_text()
    assert text.startswith("# {")
    header = text.splitlines()[1]
    assert header == "bin_left,bin_right,site_1,site_2"
