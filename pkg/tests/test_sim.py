"""Discretization layer: noise streams, stepping schemes, synchronous pairs."""

import math

import numpy as np
import pytest
import scipy.stats

from latticespin import kernels
from latticespin._errors import UsageError
from latticespin.model import (
    CouplingCoefficients,
    SpinChainModel,
    constant_coupling,
    cubic_drift,
    linear_drift,
)
from latticespin.sim import (
    NoisePath,
    evolve_ensemble,
    evolve_supfeature,
    make_noise,
    noise_matrix,
    replica_stream,
    simulate,
    simulate_pair_initials,
    simulate_pair_volumes,
    write_trajectory_csv,
)


def linear_chain(n, slope=-1.0, a=0.1):
    return SpinChainModel(volume=n, drift=linear_drift(slope),
                          coupling=constant_coupling(a))


def decoupled(n, slope=-1.0):
    """Zero coupling (not constructible through the builders on purpose):
    sites evolve independently, only site 1 sees noise."""
    c = CouplingCoefficients(sub=lambda i, t: 0.0, sup=lambda i, t: 0.0, bound=1e-12)
    return SpinChainModel(volume=n, drift=linear_drift(slope), coupling=c)


def silent(steps, h, horizon):
    """A noise path with every increment zero, for deterministic stepping."""
    return NoisePath(h=h, horizon=horizon, increments=np.zeros(steps), seed=0)


# ---------------------------------------------------------------------------
# noise
# ---------------------------------------------------------------------------

def test_make_noise_is_deterministic():
    a = make_noise(42, 0.01, 1.0)
    b = make_noise(42, 0.01, 1.0)
    assert np.array_equal(a.increments, b.increments)
    assert not np.array_equal(a.increments, make_noise(43, 0.01, 1.0).increments)


def test_make_noise_step_counts():
    assert make_noise(0, 0.01, 1.0).steps == 100
    assert make_noise(0, 0.01, 1.005).steps == 101   # partial step rounds up
    assert make_noise(0, 0.02, 1.0).steps == 50      # halving h doubles steps
    with pytest.raises(UsageError):
        make_noise(0, -0.01, 1.0)
    with pytest.raises(UsageError):
        make_noise(0, 0.01, 0.0)


def test_increments_distributed_as_n0h():
    h = 0.04
    inc = make_noise(7, h, 4000.0).increments
    assert inc.size == 100_000
    stat = scipy.stats.kstest(inc / math.sqrt(h), "norm")
    assert stat.pvalue > 0.01


def test_noise_matrix_segments_match_contiguous_draw():
    h = 0.01
    full = noise_matrix(5, 3, 4, 10, h)
    gen = replica_stream(5, 3)
    a = gen.normal(0.0, math.sqrt(h), (6, 4))
    b = gen.normal(0.0, math.sqrt(h), (4, 4))
    assert np.array_equal(full, np.hstack([a.T, b.T]))


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def test_zero_drift_zero_noise_is_constant():
    m = decoupled(3, slope=0.0)
    x0 = np.array([1.0, -2.0, 3.0])
    traj = simulate(m, x0, silent(50, 0.01, 0.5))
    assert np.array_equal(traj.states, np.tile(x0, (51, 1)))


def test_pure_brownian_coordinate():
    # f == 0, coupling == 0, x0 = 0: x_1(t_k) is exactly the partial sum of
    # increments and every other coordinate stays identically zero.
    m = decoupled(4, slope=0.0)
    noise = make_noise(3, 0.01, 1.0)
    traj = simulate(m, np.zeros(4), noise)
    assert np.array_equal(traj.states[1:, 0], np.cumsum(noise.increments))
    assert np.all(traj.states[:, 1:] == 0.0)


def test_euler_global_error_linear_in_h():
    # dx = -x dt, x(0) = 1: the error at t=1 should be ~ C*h with C well below 2.
    m = decoupled(1)
    for h in (1e-2, 1e-3):
        steps = int(round(1.0 / h))
        traj = simulate(m, [1.0], silent(steps, h, 1.0))
        err = abs(float(traj.final()[0]) - math.exp(-1.0))
        assert err <= 2.0 * h
        assert err >= 0.05 * h  # sanity: the bound is not vacuous


def test_simulate_is_bitwise_deterministic():
    m = linear_chain(3, a=0.2)
    noise = make_noise(9, 0.01, 2.0)
    x0 = np.array([1.0, 0.0, -1.0])
    a = simulate(m, x0, noise, scheme="tamed")
    b = simulate(m, x0, noise, scheme="tamed")
    assert np.array_equal(a.states, b.states)
    assert np.array_equal(a.times, b.times)


def test_record_every_thins_storage_not_dynamics():
    m = linear_chain(2)
    noise = make_noise(4, 0.01, 1.0)
    dense = simulate(m, [1.0, 1.0], noise)
    thin = simulate(m, [1.0, 1.0], noise, record_every=10)
    assert np.array_equal(thin.states, dense.states[::10])


def test_simulate_rejects_bad_arguments():
    m = linear_chain(2)
    noise = make_noise(0, 0.01, 0.1)
    with pytest.raises(UsageError):
        simulate(m, [1.0], noise)
    with pytest.raises(UsageError):
        simulate(m, [1.0, 1.0], noise, scheme="milstein")
    with pytest.raises(UsageError):
        simulate(m, [1.0, 1.0], noise, record_every=0)


def test_blowup_flagged_and_truncated():
    m = SpinChainModel(volume=2, drift=linear_drift(2.0, lam=1.0),
                       coupling=constant_coupling(0.1))
    traj = simulate(m, [1e3, 1e3], make_noise(1, 0.1, 400.0))
    assert traj.blowup
    assert traj.states.shape[0] < 4001
    assert np.all(np.isfinite(traj.states))


# ---------------------------------------------------------------------------
# synchronous pairs
# ---------------------------------------------------------------------------

def test_pair_volumes_rejects_equal_volumes():
    m = linear_chain(2)
    with pytest.raises(UsageError):
        simulate_pair_volumes(m, 4, 4, np.zeros(8), make_noise(0, 0.01, 0.1))


def test_pair_volumes_decoupled_share_site_one():
    # With zero coupling the site-1 dynamics cannot depend on the volume.
    m = decoupled(2)
    noise = make_noise(17, 0.01, 1.0)
    ta, tb = simulate_pair_volumes(m, 2, 6, [0.7, 0.1, 0.2, 0.3, 0.4, 0.5], noise)
    assert np.array_equal(ta.states[:, 0], tb.states[:, 0])


def test_pair_initials_identical_states_coincide():
    m = linear_chain(3, a=0.2)
    noise = make_noise(23, 0.01, 1.0)
    x = np.array([1.0, 2.0, 3.0])
    ta, tb = simulate_pair_initials(m, x, x.copy(), noise)
    assert np.array_equal(ta.states, tb.states)


def test_pair_initials_difference_matches_matrix_exponential():
    # For linear f the difference D(t) = X^y - X^x solves dD = A D dt exactly
    # (the shared noise cancels), so D(1) = expm(A) (y - x).
    # oracle: tools/derive_oracles.py::expm_difference_norm
    #   n=4, f(z) = -z, a = 0.3, y - x = (1, -0.5, 0.25, -0.125)
    m = SpinChainModel(volume=4, drift=linear_drift(-1.0),
                       coupling=constant_coupling(0.3))
    dx = np.array([1.0, -0.5, 0.25, -0.125])
    frozen = np.array([0.3318508726974054, -0.06036364295823851,
                       0.04542451350970926, -0.026444563094478186])
    noise = make_noise(11, 1e-6, 1.0)
    ta, tb = simulate_pair_initials(m, np.zeros(4), dx, noise)
    diff = tb.final() - ta.final()
    assert np.max(np.abs(diff - frozen)) <= 1e-6
    assert np.linalg.norm(diff) == pytest.approx(0.34136706409094425, abs=1e-6)


def test_pair_initials_cubic_difference_contracts():
    # f(z) = -z - z^3 has f' <= -1 everywhere, which dominates the coupling:
    # the synchronous difference norm never grows.
    m = SpinChainModel(volume=3, drift=cubic_drift(-1.0, -1.0, lam=1.0, eta=0.01),
                       coupling=constant_coupling(0.1))
    rng = np.random.default_rng(31)
    noise = make_noise(41, 1e-3, 2.0)
    ta, tb = simulate_pair_initials(m, rng.normal(size=3), rng.normal(size=3), noise)
    norms = np.linalg.norm(ta.states - tb.states, axis=1)
    assert np.all(np.diff(norms) <= 1e-12)


# ---------------------------------------------------------------------------
# ensembles and schemes
# ---------------------------------------------------------------------------

def test_ensemble_mean_matches_ou_law():
    # E X(1) = e^{-1} for dX = -X dt + dW, X(0) = 1; Euler bias at h = 0.01
    # sits well inside three MC standard errors at this replica count.
    m = decoupled(1)
    rows, h = 100_000, 0.01
    dw = noise_matrix(29, 0, rows, 100, h)
    X, blown = evolve_ensemble(m, np.ones((rows, 1)), dw, h)
    assert not blown.any()
    se = X[:, 0].std(ddof=1) / math.sqrt(rows)
    assert abs(X[:, 0].mean() - math.exp(-1.0)) <= 3 * se + 0.2 * h


def test_tamed_correction_is_second_order_per_step():
    # One step from a state with |f| = 8: the euler/tamed gap is h^2 f^2 to
    # leading order, so halving h divides the gap by about 4.
    m = SpinChainModel(volume=1, drift=cubic_drift(0.0, -1.0, lam=1.0, eta=0.01),
                       coupling=constant_coupling(0.1))
    gaps = []
    for h in (1e-5, 5e-6):
        te = simulate(m, [2.0], silent(1, h, h), scheme="euler")
        tt = simulate(m, [2.0], silent(1, h, h), scheme="tamed")
        gaps.append(abs(float(te.final()[0] - tt.final()[0])))
    assert gaps[0] / gaps[1] == pytest.approx(4.0, rel=0.02)


def test_supfeature_zero_state_no_noise_is_zero():
    # Degenerate running-sup check: start at the fixed point with a silent
    # noise block and the tracked feature never leaves zero.
    m = linear_chain(3, a=0.2)
    sups, blown = evolve_supfeature(m, np.zeros((8, 3)), np.zeros((8, 20)), 0.01,
                                    wts=np.array([1.0, 0.5, 0.25]), q=2.0)
    assert np.array_equal(sups, np.zeros(8))
    assert not blown.any()


def test_backends_agree(monkeypatch):
    if kernels.BACKEND != "compiled":
        pytest.skip("only one backend importable")
    from latticespin import _kernels_py
    m = SpinChainModel(volume=3, drift=cubic_drift(1.0, -1.0, lam=1.0, eta=1.0),
                       coupling=constant_coupling(0.2))
    noise = make_noise(7, 0.01, 2.0)
    x0 = np.array([0.5, -0.2, 0.1])
    compiled = simulate(m, x0, noise, scheme="tamed")
    monkeypatch.setattr(kernels, "_impl", _kernels_py)
    fallback = simulate(m, x0, noise, scheme="tamed")
    assert np.max(np.abs(compiled.states - fallback.states)) <= 1e-12


# ---------------------------------------------------------------------------
# trajectory CSV
# ---------------------------------------------------------------------------

def test_write_trajectory_csv_layout(tmp_path):
    m = linear_chain(2)
    traj = simulate(m, [1.0, 0.5], make_noise(4, 0.25, 1.0))
    out = tmp_path / "traj.csv"
    write_trajectory_csv(traj, str(out), provenance={"seed": 4})
    raw = out.read_bytes()
    assert b"\r" not in raw
    lines = raw.decode().splitlines()
    assert lines[0].startswith("# {")        # one-line JSON provenance comment
    assert lines[1] == "t,x1,x2"
    assert len(lines) == 2 + traj.states.shape[0]
    # %.17g fields parse back to the exact stored doubles
    last = lines[-1].split(",")
    assert float(last[1]) == traj.states[-1, 0]
    assert float(last[2]) == traj.states[-1, 1]
