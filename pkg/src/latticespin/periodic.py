"""Time-periodic forcing: lifted phase dynamics and periodic measures.

A model whose coefficients repeat with period T has no invariant measure in
the usual sense; the equilibrium object is a family mu_s indexed by the
phase s in [0, T) with mu_{s+T} = mu_s, transported consistently by the
time-inhomogeneous dynamics.  Everything here works through two moves:

* lifting — adjoin the phase as a coordinate advancing deterministically as
  (s0 + t) mod T, which turns the time-inhomogeneous chain into a
  time-homogeneous one;
* stroboscopic sampling — reading a single path only at times s + kT, whose
  law stabilizes to mu_s.

The averaged object (uniform mixture of mu_s over a phase grid) is the
invariant measure of the lifted dynamics and is what tightness arguments
act on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from ._emit import write_csv, write_json
from ._errors import UsageError
from .ergodics import (_BATCH, _blowup_guard, _model_hash, EmpiricalMeasure,
                       measure_from_samples, shared_edges, tv_distance)
from .model import SpinChainModel
from .sim import NoisePath, evolve_ensemble, noise_matrix, replica_stream, simulate

__all__ = [
    "PhaseState",
    "LiftedTrajectory",
    "TransportReport",
    "PhaseAverage",
    "simulate_lifted",
    "estimate_periodic_measure",
    "transport_check",
    "average_lift",
    "write_phase_csvs",
]

_INITIAL_STREAM = (1 << 40) + 3  # transport_check initial-state draws


def _period_of(model: SpinChainModel) -> float:
    T = model.period
    if T is None:
        raise UsageError("model declares no period; this operation is for "
                         "time-periodic coefficients")
    return float(T)


def _reduce_phase(s: float, T: float) -> float:
    """Representative of s in [0, T); exact for s already in range."""
    s = float(s)
    if 0.0 <= s < T:
        return s
    r = math.fmod(s, T)
    if r < 0.0:
        r += T
    return r if r < T else 0.0


@dataclass(frozen=True)
class PhaseState:
    """A point of the lifted system: phase on the circle plus chain state."""

    phase: float
    state: np.ndarray
    period: float

    def __post_init__(self):
        if not (self.period > 0.0):
            raise UsageError("period must be positive")
        if not (0.0 <= self.phase < self.period):
            raise UsageError(f"phase {self.phase} outside [0, {self.period})")


@dataclass(frozen=True)
class LiftedTrajectory:
    """A path of the lifted dynamics; ``phases[k]`` is the (deterministic)
    phase coordinate at ``times[k]``."""

    times: np.ndarray
    phases: np.ndarray
    states: np.ndarray
    volume: int
    period: float
    blowup: bool = False

    def final(self) -> PhaseState:
        return PhaseState(phase=float(self.phases[-1]),
                          state=self.states[-1], period=self.period)


def simulate_lifted(model: SpinChainModel, x0, s0: float, noise: NoisePath,
                    scheme: str = "euler", record_every: int = 1,
                    threads=None) -> LiftedTrajectory:
    """One path of the phase-lifted chain started at phase s0.

    The state follows the time-inhomogeneous dynamics with coefficients read
    at the running phase; the phase itself advances as (s0 + t) mod T with
    no noise.  s0 is reduced mod T first, so s0 and s0 + T produce identical
    trajectories for the same noise path.
    """
    T = _period_of(model)
    s_eff = _reduce_phase(s0, T)
    traj = simulate(model, x0, noise, scheme=scheme, t0=s_eff,
                    record_every=record_every, threads=threads)
    times = traj.times - s_eff  # elapsed time; coefficients saw s_eff + t
    phases = np.mod(s_eff + times, T)
    phases[phases >= T] = 0.0  # guard the fp boundary case
    return LiftedTrajectory(times=times, phases=phases, states=traj.states,
                            volume=traj.volume, period=T, blowup=traj.blowup)


def _periodic_samples(model: SpinChainModel, s: float, burn_cycles: int,
                      cycles: int, seed: int, *, h: float, scheme: str,
                      x0, threads, stream: int):
    """One-path stroboscopic samples at times s + kT,
    k = burn_cycles .. burn_cycles + cycles - 1.

    The per-cycle step is snapped to divide T exactly so every sampling time
    is hit on the grid; the initial offset segment (to s + burn_cycles*T)
    gets its own snapped step.  All noise comes sequentially from one
    counter-based stream, so the estimate is a pure function of
    (model, s mod T, burn_cycles, cycles, seed, h, scheme).
    """
    T = _period_of(model)
    if cycles < 1:
        raise UsageError("need at least one sampling cycle")
    if burn_cycles < 0:
        raise UsageError("burn_cycles must be >= 0")
    n = model.volume
    s_eff = _reduce_phase(s, T)
    steps_cycle = max(1, int(round(T / h)))
    h_cycle = T / steps_cycle
    x = (np.zeros(n) if x0 is None else np.asarray(x0, dtype=float).reshape(-1))
    if x.size != n:
        raise UsageError(f"x0 has {x.size} components, volume is {n}")
    gen = replica_stream(seed, stream)

    samples = np.empty((cycles, n))
    collected = 0
    blown = False
    t_now = 0.0
    offset = s_eff + burn_cycles * T
    if offset > 0.0:
        steps_off = max(1, int(round(offset / h)))
        h_off = offset / steps_off
        inc = gen.normal(0.0, math.sqrt(h_off), steps_off)
        seg = simulate(model, x, NoisePath(h_off, offset, inc, seed),
                       scheme=scheme, t0=0.0, record_every=steps_off,
                       threads=threads)
        x, blown = seg.final(), seg.blowup
        t_now = offset
    if not blown:
        for k in range(cycles):
            samples[collected] = x
            collected += 1
            if k == cycles - 1:
                break
            inc = gen.normal(0.0, math.sqrt(h_cycle), steps_cycle)
            seg = simulate(model, x, NoisePath(h_cycle, T, inc, seed),
                           scheme=scheme, t0=t_now, record_every=steps_cycle,
                           threads=threads)
            x, blown = seg.final(), seg.blowup
            t_now += T
            if blown:
                break
    shortfall = np.zeros(cycles, dtype=bool)
    shortfall[collected:] = True
    _blowup_guard(shortfall, "stroboscopic samples")
    meta = {"phase": s_eff, "burn_cycles": int(burn_cycles),
            "cycles": int(cycles), "collected": int(collected),
            "h": h_cycle, "scheme": scheme, "seed": int(seed)}
    return samples[:collected], meta


def estimate_periodic_measure(model: SpinChainModel, s: float,
                              burn_cycles: int, cycles: int, seed: int, *,
                              h: float = 0.01, scheme: str = "euler",
                              x0=None, bins: int = 64, edges=None,
                              threads=None) -> EmpiricalMeasure:
    """Estimate mu_s by stroboscopic time-averaging along one path.

    Standard errors use batch means over blocks of consecutive cycles, since
    successive stroboscopic samples are autocorrelated.
    """
    samples, meta = _periodic_samples(model, s, burn_cycles, cycles, seed,
                                      h=h, scheme=scheme, x0=x0,
                                      threads=threads, stream=0)
    collected = samples.shape[0]
    nblocks = min(32, max(2, collected // 4))
    cut = (collected // nblocks) * nblocks
    b1 = samples[:cut].reshape(nblocks, -1, model.volume).mean(axis=1)
    b2 = (samples[:cut] ** 2).reshape(nblocks, -1, model.volume).mean(axis=1)
    se = {"m1": b1.std(axis=0, ddof=1) / math.sqrt(nblocks),
          "m2": b2.std(axis=0, ddof=1) / math.sqrt(nblocks)}
    prov = {"kind": "periodic_measure", "model": _model_hash(model), **meta}
    return measure_from_samples(samples, bins=bins, edges=edges,
                                theta=model.drift.theta, provenance=prov, se=se)


@dataclass(frozen=True)
class TransportReport:
    """Outcome of pushing mu_s forward to time t and comparing with mu_t."""

    gap: float
    noise_floor: float
    s: float
    t: float
    replicas: int
    evolved: EmpiricalMeasure

    def within(self, multiple: float = 2.0) -> bool:
        return self.gap <= multiple * self.noise_floor

    def to_jsonable(self) -> dict:
        return {"gap": self.gap, "noise_floor": self.noise_floor,
                "s": self.s, "t": self.t, "replicas": int(self.replicas)}


def _resample(measure: EmpiricalMeasure, replicas: int,
              gen: np.random.Generator) -> np.ndarray:
    """Draw product-of-marginals states from a histogram: inverse-CDF over
    bins, uniform jitter within the landed bin."""
    edges = measure.edges
    widths = np.diff(edges)
    n = measure.volume
    out = np.empty((replicas, n))
    for j in range(n):
        counts = measure.counts[j].astype(float)
        total = counts.sum()
        if total <= 0:
            raise UsageError(f"site {j + 1} histogram is empty; cannot resample")
        cum = np.cumsum(counts) / total
        idx = np.searchsorted(cum, gen.random(replicas), side="right")
        idx = np.clip(idx, 0, counts.size - 1)
        out[:, j] = edges[idx] + widths[idx] * gen.random(replicas)
    return out


def transport_check(model: SpinChainModel, s: float, t: float,
                    mu_s: EmpiricalMeasure, mu_t: EmpiricalMeasure,
                    replicas: int, seed: int, *, h: float = 0.01,
                    scheme: str = "euler", threads=None) -> TransportReport:
    """Push histogram draws from mu_s through the dynamics on [s, t] and
    report the TV gap to mu_t next to the two-sample noise floor.

    Initial states are independent per site (the measures are stored as
    product marginals), so the check probes marginal transport consistency;
    a gap within ~2x the floor is what a genuinely periodic family shows at
    t - s = T.
    """
    if t < s:
        raise UsageError("transport runs forward: need t >= s")
    if replicas < 2:
        raise UsageError("need at least 2 replicas")
    if mu_s.volume != model.volume or mu_t.volume != model.volume:
        raise UsageError("measures and model disagree on the volume")
    gen = replica_stream(seed, _INITIAL_STREAM)
    X0 = _resample(mu_s, replicas, gen)
    if t > s:
        steps = max(1, int(round((t - s) / h)))
        h_eff = (t - s) / steps
        final = np.empty_like(X0)
        blown = np.zeros(replicas, dtype=bool)
        for lo in range(0, replicas, _BATCH):
            hi = min(lo + _BATCH, replicas)
            dw = noise_matrix(seed, lo // _BATCH, hi - lo, steps, h_eff)
            final[lo:hi], blown[lo:hi] = evolve_ensemble(
                model, X0[lo:hi], dw, h_eff, t0=s, scheme=scheme,
                threads=threads)
        _blowup_guard(blown, "transported replicas")
        X = final[~blown]
    else:
        X = X0
    prov = {"kind": "transport", "model": _model_hash(model), "s": float(s),
            "t": float(t), "replicas": int(replicas), "seed": int(seed)}
    evolved = measure_from_samples(X, edges=mu_t.edges,
                                   theta=model.drift.theta, provenance=prov)
    gap = tv_distance(evolved, mu_t)
    floor = 2.0 * math.sqrt(1.0 / X.shape[0] + 1.0 / mu_t.count)
    return TransportReport(gap=float(gap), noise_floor=float(floor),
                           s=float(s), t=float(t), replicas=int(replicas),
                           evolved=evolved)


@dataclass(frozen=True)
class PhaseAverage:
    """Per-phase estimates plus their uniform mixture (the invariant law of
    the lifted dynamics, discretized over the phase grid)."""

    period: float
    phases: np.ndarray
    per_phase: tuple
    mixture: EmpiricalMeasure
    phase_counts: np.ndarray

    def phase_uniformity(self):
        """Chi-square statistic and p-value for 'every phase contributed
        equally many samples'."""
        chi2, p = stats.chisquare(self.phase_counts)
        return float(chi2), float(p)


def average_lift(model: SpinChainModel, Q: int, cycles: int, seed: int, *,
                 burn_cycles: int = 4, h: float = 0.01,
                 scheme: str = "euler", x0=None, bins: int = 64,
                 threads=None) -> PhaseAverage:
    """Estimate the phase-averaged measure on the uniform grid s_q = qT/Q.

    Each phase runs its own stroboscopic path (independent noise streams,
    same seed); all per-phase histograms share one set of bin edges so they
    and the mixture are directly comparable.  Q = 1 reproduces
    estimate_periodic_measure at phase 0 exactly.
    """
    T = _period_of(model)
    if Q < 1:
        raise UsageError("need at least one phase")
    phases = np.array([q * T / Q for q in range(Q)])
    sampled = []
    metas = []
    for q in range(Q):
        smp, meta = _periodic_samples(model, phases[q], burn_cycles, cycles,
                                      seed, h=h, scheme=scheme, x0=x0,
                                      threads=threads, stream=q)
        sampled.append(smp)
        metas.append(meta)
    edges = shared_edges(sampled, bins=bins)
    per_phase = []
    for q in range(Q):
        prov = {"kind": "periodic_measure", "model": _model_hash(model),
                **metas[q]}
        per_phase.append(measure_from_samples(sampled[q], edges=edges,
                                              theta=model.drift.theta,
                                              provenance=prov))
    pooled = np.vstack(sampled)
    prov = {"kind": "average_lift", "model": _model_hash(model),
            "phases": int(Q), "cycles": int(cycles),
            "burn_cycles": int(burn_cycles), "seed": int(seed),
            "h": metas[0]["h"], "scheme": scheme}
    mixture = measure_from_samples(pooled, edges=edges,
                                   theta=model.drift.theta, provenance=prov)
    counts = np.array([s.shape[0] for s in sampled], dtype=np.int64)
    return PhaseAverage(period=T, phases=phases, per_phase=tuple(per_phase),
                        mixture=mixture, phase_counts=counts)


def _measure_rows(measure: EmpiricalMeasure):
    edges = measure.edges
    for b in range(measure.counts.shape[1]):
        yield [edges[b], edges[b + 1]] + [int(c) for c in measure.counts[:, b]]


def write_phase_csvs(avg: PhaseAverage, directory: str,
                     prefix: str = "phase") -> dict:
    """One histogram CSV per phase plus the mixture, tied together by a
    JSON manifest; returns the manifest dict (also written to disk)."""
    import os

    header = ["bin_left", "bin_right"] + [
        f"site_{j + 1}" for j in range(avg.mixture.volume)]
    entries = []
    for q, mu in enumerate(avg.per_phase):
        name = f"{prefix}_{q:03d}.csv"
        write_csv(os.path.join(directory, name), header, _measure_rows(mu),
                  provenance=mu.provenance)
        entries.append({"file": name, "phase": float(avg.phases[q]),
                        "samples": int(avg.phase_counts[q])})
    mix_name = f"{prefix}_mixture.csv"
    write_csv(os.path.join(directory, mix_name), header,
              _measure_rows(avg.mixture), provenance=avg.mixture.provenance)
    chi2, pval = avg.phase_uniformity()
    manifest = {"period": avg.period, "phases": entries,
                "mixture": mix_name,
                "phase_uniformity": {"chi2": chi2, "p_value": pval}}
    write_json(os.path.join(directory, f"{prefix}_manifest.json"), manifest)
    return manifest
