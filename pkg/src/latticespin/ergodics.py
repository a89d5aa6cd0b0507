"""Statistical layer: invariant-measure estimation, mixing-rate fits,
moment/tail checks, volume convergence, and the tightness diagnostic.

Everything here is Monte Carlo around the steppers in `sim`.  Replica
ensembles are split into fixed-size batches of 8192, each batch drawing its
increments from its own counter-based stream, so replica r's noise is a pure
function of (seed, tag, r) — estimates never depend on thread count or on
how a horizon was segmented into checkpoints.

Total-variation distances are computed between *product marginals* (per-site
histograms), not joint laws: joint histograms are hopeless beyond a couple
of sites, and per-site convergence is exactly what the mixing statements
promise coordinate-wise.  All TV numbers here are therefore lower-bound
proxies for the joint distance; they are compared against an explicit Monte
Carlo noise floor before any rate is fitted.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ._errors import EstimationError, UsageError
from .model import LocalDrift, SpinChainModel, WeightFamily, summability_certificate
from .sim import (NoisePath, evolve_ensemble, evolve_pair_supdiff,
                  evolve_supfeature, replica_stream, simulate)
from .spaces import WeightedNormSpec, project, weighted_norm

__all__ = [
    "EmpiricalMeasure",
    "DecayFit",
    "MomentSupReport",
    "TailTable",
    "VolumeMatrix",
    "InitialContinuityTable",
    "TightnessTable",
    "measure_from_samples",
    "shared_edges",
    "estimate_invariant",
    "tv_distance",
    "ergodic_decay",
    "moment_sup_check",
    "tail_bound_check",
    "volume_convergence",
    "initial_continuity",
    "tightness_diagnostic",
]

_BATCH = 8192          # replicas per stream; fixed so replica noise is stable
_TAG_STRIDE = 1 << 20  # stream id = tag * stride + batch index
_BLOWUP_TOLERATED = 0.01


def _model_hash(model: SpinChainModel) -> str:
    """Short stable fingerprint of the model description (best effort for
    custom callables, exact for the built-in factories)."""
    d, c = model.drift, model.coupling
    desc = {
        "drift": d.kind or "custom",
        "drift_params": list(d.params) if d.params else None,
        "lam": d.lam, "eta": d.eta, "theta": d.theta, "eta0": d.eta0,
        "drift_period": d.period,
        "coupling": c.kind or "custom",
        "coupling_params": list(c.params) if c.params else None,
        "bound": c.bound, "coupling_period": c.period,
        "volume": model.volume,
    }
    blob = json.dumps(desc, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


# ---------------------------------------------------------------------------
# empirical measures


@dataclass(frozen=True)
class EmpiricalMeasure:
    """Product-marginal summary of a sample cloud: one histogram per site
    (shared uniform edges) plus the moment rows the inequalities care about
    (orders 1, 2, 4 and 2*theta)."""

    edges: np.ndarray            # (bins+1,), strictly increasing, uniform
    counts: np.ndarray           # (volume, bins) integers
    moments: dict                # "m1" | "m2" | "m4" | "m2theta" -> (volume,)
    count: int
    provenance: dict = field(default_factory=dict)
    se: Optional[dict] = None    # per-moment standard errors, when known

    def __post_init__(self):
        if self.edges.ndim != 1 or self.edges.size < 2:
            raise UsageError("bin edges must be a 1-d array with >= 2 entries")
        if not np.all(np.diff(self.edges) > 0):
            raise UsageError("bin edges must be strictly increasing")
        if self.counts.shape[1] != self.edges.size - 1:
            raise UsageError("counts/edges bin mismatch")
        sums = self.counts.sum(axis=1)
        if not np.all(sums == self.count):
            raise UsageError("histogram counts must sum to the sample count at every site")
        for name, arr in self.moments.items():
            if not np.all(np.isfinite(arr)):
                raise UsageError(f"moment row {name!r} is not finite")

    @property
    def volume(self) -> int:
        return self.counts.shape[0]

    def site_probs(self) -> np.ndarray:
        return self.counts / float(self.count)


def shared_edges(sample_sets: Sequence[np.ndarray], bins: int = 64) -> np.ndarray:
    """Uniform edges over [-L, L], L = 6 * (largest per-site std across all
    the sets) — the shared-binning rule every comparison in this module uses."""
    if bins < 2:
        raise UsageError("need at least 2 bins")
    top = 0.0
    for s in sample_sets:
        s = np.asarray(s, dtype=float)
        if s.size:
            top = max(top, float(np.max(s.std(axis=0))))
    L = 6.0 * top if top > 0.0 else 1.0
    return np.linspace(-L, L, bins + 1)


def measure_from_samples(samples, *, bins: int = 64, edges=None, theta: float = 1.0,
                         provenance=None, se=None) -> EmpiricalMeasure:
    """Histogram + moment summary of a (samples, volume) array.

    Values beyond the edge range are counted in the outermost bins, so the
    per-site counts always sum to the sample count; deep tails therefore
    show up as edge-bin mass, not as dropped samples.
    """
    S = np.asarray(samples, dtype=float)
    if S.ndim != 2 or S.shape[0] < 1:
        raise UsageError("samples must be a non-empty (count, volume) array")
    if not np.all(np.isfinite(S)):
        raise UsageError("samples must be finite")
    if edges is None:
        edges = shared_edges([S], bins=bins)
    edges = np.asarray(edges, dtype=float)
    nbins = edges.size - 1
    idx = np.clip(np.searchsorted(edges, S, side="right") - 1, 0, nbins - 1)
    counts = np.zeros((S.shape[1], nbins), dtype=np.int64)
    for j in range(S.shape[1]):
        counts[j] = np.bincount(idx[:, j], minlength=nbins)
    q = 2.0 * theta
    moments = {
        "m1": S.mean(axis=0),
        "m2": (S * S).mean(axis=0),
        "m4": (S ** 4).mean(axis=0),
        "m2theta": (np.abs(S) ** q).mean(axis=0),
    }
    return EmpiricalMeasure(edges=edges, counts=counts, moments=moments,
                            count=S.shape[0], provenance=provenance or {}, se=se)


def tv_distance(mu: EmpiricalMeasure, nu: EmpiricalMeasure, sites=None) -> float:
    """Mean over sites of the per-site histogram TV distance (in [0, 1]).

    This is a product-marginal proxy: it lower-bounds the joint TV distance
    and requires the two measures to share bin edges exactly.
    """
    if not np.array_equal(mu.edges, nu.edges):
        raise UsageError("mismatched binning: measures must share bin edges")
    if sites is None:
        if mu.volume != nu.volume:
            raise UsageError("volumes differ; pass an explicit common site set")
        sites = range(1, mu.volume + 1)
    sites = [int(s) for s in sites]
    if not sites:
        raise UsageError("empty site set")
    for s in sites:
        if not (1 <= s <= mu.volume and s <= nu.volume):
            raise UsageError(f"site {s} outside both supports")
    p = mu.site_probs()
    q = nu.site_probs()
    per_site = [0.5 * float(np.abs(p[s - 1] - q[s - 1]).sum()) for s in sites]
    return float(np.mean(per_site))


# ---------------------------------------------------------------------------
# batched ensemble driving


def _segment_steps(times: Sequence[float], h: float):
    """Step counts between consecutive checkpoints (0 prepended)."""
    prev = 0.0
    out = []
    for t in times:
        steps = int(round((t - prev) / h))
        if steps <= 0:
            raise UsageError("checkpoint times must be strictly increasing and "
                             ">= one step apart")
        out.append(steps)
        prev = t
    return out


def _ensemble_checkpoints(model, x0, replicas, seed, tag, h, times,
                          scheme="euler", threads=None):
    """Finals of a replica ensemble at each checkpoint.

    Returns (snapshots, masks): one (replicas, n) array and one boolean
    blown-by-now mask per checkpoint.  Segment draws come from one generator
    per batch, so the same (seed, tag) always reproduces the same replicas
    regardless of checkpoint placement.
    """
    n = model.volume
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.size != n:
        raise UsageError(f"initial state has {x0.size} components, volume is {n}")
    seg = _segment_steps(times, h)
    snaps = [np.empty((replicas, n)) for _ in times]
    masks = [np.empty(replicas, dtype=bool) for _ in times]
    for lo in range(0, replicas, _BATCH):
        hi = min(lo + _BATCH, replicas)
        rows = hi - lo
        gen = replica_stream(seed, tag * _TAG_STRIDE + lo // _BATCH)
        X = np.tile(x0, (rows, 1))
        blown = np.zeros(rows, dtype=bool)
        t = 0.0
        for j, steps in enumerate(seg):
            dw = np.ascontiguousarray(gen.normal(0.0, math.sqrt(h), (steps, rows)).T)
            X, bl = evolve_ensemble(model, X, dw, h, t0=t, scheme=scheme,
                                    threads=threads)
            blown |= bl.astype(bool)
            t = times[j]
            snaps[j][lo:hi] = X
            masks[j][lo:hi] = blown
    return snaps, masks


def _blowup_guard(mask, what: str):
    frac = float(np.mean(mask))
    if frac > _BLOWUP_TOLERATED:
        raise EstimationError(
            f"{frac:.1%} of replicas blew up during {what}; "
            "try scheme='tamed' or a smaller step h")


def _mean_se(values: np.ndarray):
    values = np.asarray(values, dtype=float)
    m = values.size
    if m == 0:
        raise EstimationError("no surviving replicas to average")
    mean = float(values.mean())
    se = float(values.std(ddof=1) / math.sqrt(m)) if m > 1 else float("inf")
    return mean, se


# ---------------------------------------------------------------------------
# invariant-measure estimation (single long path, time averaging)


def estimate_invariant(model: SpinChainModel, burn_in: float, n_samples: int,
                       thinning: float, seed: int, *, h: float = 0.01,
                       scheme: str = "euler", x0=None, bins: int = 64,
                       edges=None, threads=None) -> EmpiricalMeasure:
    """Time-average estimator of the invariant law along one long path.

    After `burn_in`, the state is recorded every `thinning` time units
    (both rounded to whole steps of h) until `n_samples` snapshots exist.
    Standard errors for the first and second moment rows come from batch
    means over ~32 blocks of the thinned path, which keeps them honest under
    the autocorrelation a single path carries.
    """
    if model.period is not None:
        raise UsageError("invariant estimation needs a time-homogeneous model")
    if not (math.isfinite(burn_in) and burn_in >= 0.0):
        raise UsageError("burn_in must be finite and >= 0")
    if n_samples < 2:
        raise UsageError("need at least 2 samples")
    if not (thinning > 0.0 and h > 0.0):
        raise UsageError("thinning and h must be positive")
    record_every = max(1, int(round(thinning / h)))
    stride = record_every * h
    burn_records = int(math.ceil(burn_in / stride - 1e-12))
    total_records = burn_records + n_samples
    steps = total_records * record_every
    incr = replica_stream(seed, 0).normal(0.0, math.sqrt(h), steps)
    noise = NoisePath(h=h, horizon=steps * h, increments=incr, seed=seed)
    x0 = np.zeros(model.volume) if x0 is None else np.asarray(x0, dtype=float)
    traj = simulate(model, x0, noise, scheme=scheme, record_every=record_every,
                    threads=threads)
    first = burn_records + 1  # row 0 is the initial state, never a sample
    if traj.blowup:
        collected = max(0, traj.states.shape[0] - first)
        collected = min(collected, n_samples)
        if n_samples - collected > _BLOWUP_TOLERATED * n_samples:
            raise EstimationError(
                f"path blew up with only {collected}/{n_samples} samples "
                "collected; try scheme='tamed' or a smaller step h")
    else:
        collected = n_samples
    S = traj.states[first:first + collected]
    nblocks = min(32, max(2, collected // 4))
    cut = (collected // nblocks) * nblocks
    b1 = S[:cut].reshape(nblocks, -1, model.volume).mean(axis=1)
    b2 = (S[:cut] ** 2).reshape(nblocks, -1, model.volume).mean(axis=1)
    se = {
        "m1": b1.std(axis=0, ddof=1) / math.sqrt(nblocks),
        "m2": b2.std(axis=0, ddof=1) / math.sqrt(nblocks),
    }
    prov = {
        "model": _model_hash(model),
        "burn_in": burn_records * stride,
        "thinning": stride,
        "seed": seed,
        "h": h,
        "scheme": scheme,
        "samples": collected,
    }
    return measure_from_samples(S, bins=bins, edges=edges,
                                theta=model.drift.theta, provenance=prov, se=se)


# ---------------------------------------------------------------------------
# mixing-rate fits


@dataclass(frozen=True)
class DecayFit:
    """Least-squares fit of log TV against time, restricted to the points
    that clear the Monte Carlo noise floor."""

    times: np.ndarray
    tv: np.ndarray
    alpha: Optional[float]
    intercept: Optional[float]
    r_squared: Optional[float]
    noise_floor: float
    used: np.ndarray
    note: str = ""

    def __post_init__(self):
        if np.any(self.tv < 0) or np.any(self.tv > 1):
            raise UsageError("TV estimates must lie in [0, 1]")

    def to_jsonable(self) -> dict:
        return {
            "times": [float(t) for t in self.times],
            "tv": [float(v) for v in self.tv],
            "alpha": self.alpha,
            "intercept": self.intercept,
            "r_squared": self.r_squared,
            "noise_floor": self.noise_floor,
            "used": [bool(u) for u in self.used],
            "note": self.note,
        }


def ergodic_decay(model: SpinChainModel, x, y, check_times, replicas: int,
                  seed: int, *, h: float = 0.01, scheme: str = "euler",
                  bins: int = 64, threads=None) -> DecayFit:
    """TV distance between the time-t laws started from x and from y, fitted
    to an exponential in t.

    Two independent ensembles (one per initial state) are advanced through
    the sorted check times; at each checkpoint the marginals are histogrammed
    with shared edges and their product-marginal TV recorded.  The rate alpha
    is the negated slope of log TV over the points above the 2/sqrt(replicas)
    floor, and is only reported when at least four such points exist.
    """
    if model.period is not None:
        raise UsageError("decay fitting needs a time-homogeneous model")
    times = [float(t) for t in check_times]
    if not times or any(t <= 0 for t in times) or sorted(times) != times:
        raise UsageError("check_times must be positive and strictly increasing")
    if replicas < 16:
        raise UsageError("need at least 16 replicas")
    sx, mx = _ensemble_checkpoints(model, x, replicas, seed, 0, h, times,
                                   scheme=scheme, threads=threads)
    sy, my = _ensemble_checkpoints(model, y, replicas, seed, 1, h, times,
                                   scheme=scheme, threads=threads)
    _blowup_guard(mx[-1], "the x-ensemble")
    _blowup_guard(my[-1], "the y-ensemble")
    tvs = np.empty(len(times))
    for k in range(len(times)):
        a = sx[k][~mx[k]]
        b = sy[k][~my[k]]
        edges = shared_edges([a, b], bins=bins)
        mu = measure_from_samples(a, edges=edges, theta=model.drift.theta)
        nu = measure_from_samples(b, edges=edges, theta=model.drift.theta)
        tvs[k] = tv_distance(mu, nu)
    floor = 2.0 / math.sqrt(replicas)
    used = tvs > floor
    t_arr = np.asarray(times)
    if int(used.sum()) >= 4:
        slope, intercept = np.polyfit(t_arr[used], np.log(tvs[used]), 1)
        fitted = slope * t_arr[used] + intercept
        resid = np.log(tvs[used]) - fitted
        tot = np.log(tvs[used]) - np.log(tvs[used]).mean()
        denom = float(np.sum(tot * tot))
        r2 = 1.0 - float(np.sum(resid * resid)) / denom if denom > 0 else 0.0
        return DecayFit(t_arr, tvs, float(-slope), float(intercept), r2,
                        floor, used)
    note = ("already mixed: every TV estimate is at or below the noise floor"
            if not used.any() else "too few points above the noise floor")
    return DecayFit(t_arr, tvs, None, None, None, floor, used, note=note)


# ---------------------------------------------------------------------------
# moment and tail inequalities


@dataclass(frozen=True)
class MomentSupReport:
    """E sup_{t<=T1} ||X||^p across a ladder of initial-state scales, with
    the affine-bound ratios estimate / (1 + ||x||^p)."""

    p: float
    theta: float
    horizon: float
    multipliers: tuple
    initial_norms: np.ndarray
    estimates: np.ndarray
    ses: np.ndarray
    ratios: np.ndarray

    def to_jsonable(self) -> dict:
        return {
            "p": self.p, "theta": self.theta, "horizon": self.horizon,
            "rows": [
                {"multiplier": m, "initial_norm": float(nm), "estimate": float(e),
                 "se": float(s), "ratio": float(r)}
                for m, nm, e, s, r in zip(self.multipliers, self.initial_norms,
                                          self.estimates, self.ses, self.ratios)
            ],
        }


def moment_sup_check(model: SpinChainModel, x, T1: float, p: float,
                     replicas: int, seed: int, *, weights: WeightFamily,
                     h: float = 0.01, scheme: str = "euler",
                     multipliers=(0.0, 1.0, 2.0, 4.0), threads=None) -> MomentSupReport:
    """Monte Carlo check of the running-supremum moment bound.

    Tracks sup_{t<=T1} sum_i rho(i)|X_i|^(2 theta) per replica in-stream
    (the norm power p is applied afterwards — the transform is monotone, so
    the sup commutes), then repeats across initial states m*x for m in
    `multipliers` with identical noise, exhibiting the affine structure of
    the bound in 1 + ||x||^p.
    """
    if not (T1 > 0 and p > 0):
        raise UsageError("T1 and p must be positive")
    n = model.volume
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != n:
        raise UsageError(f"initial state has {x.size} components, volume is {n}")
    q = 2.0 * model.drift.theta
    wts = np.array([weights.rho(i) for i in range(1, n + 1)])
    steps = int(round(T1 / h))
    if steps < 1:
        raise UsageError("horizon shorter than one step")
    sups = {m: np.empty(replicas) for m in multipliers}
    blown = {m: np.zeros(replicas, dtype=bool) for m in multipliers}
    for lo in range(0, replicas, _BATCH):
        hi = min(lo + _BATCH, replicas)
        rows = hi - lo
        gen = replica_stream(seed, lo // _BATCH)
        dw = np.ascontiguousarray(gen.normal(0.0, math.sqrt(h), (steps, rows)).T)
        for m in multipliers:
            X0 = np.tile(m * x, (rows, 1))
            s, bl = evolve_supfeature(model, X0, dw, h, wts=wts, q=q,
                                      scheme=scheme, threads=threads)
            sups[m][lo:hi] = s
            blown[m][lo:hi] = bl.astype(bool)
    norms = np.empty(len(multipliers))
    est = np.empty(len(multipliers))
    ses = np.empty(len(multipliers))
    spec = WeightedNormSpec(p=q, rho=weights)
    for j, m in enumerate(multipliers):
        _blowup_guard(blown[m], f"the multiplier-{m} ensemble")
        alive = sups[m][~blown[m]]
        est[j], ses[j] = _mean_se(alive ** (p / q))
        norms[j] = weighted_norm(m * x, spec)
    ratios = est / (1.0 + norms ** p)
    return MomentSupReport(p=p, theta=model.drift.theta, horizon=T1,
                           multipliers=tuple(multipliers), initial_norms=norms,
                           estimates=est, ses=ses, ratios=ratios)


@dataclass(frozen=True)
class TailTable:
    """E sum_{i>N0} |X_i(t)|^2 rho(i) across volumes and tail cutoffs."""

    volumes: tuple
    n0_ladder: tuple
    t: float
    estimates: np.ndarray  # (len(volumes), len(n0_ladder))
    ses: np.ndarray

    def sup_by_n0(self) -> np.ndarray:
        """Worst (largest) tail estimate across volumes, per cutoff."""
        return self.estimates.max(axis=0)

    def to_jsonable(self) -> dict:
        return {
            "t": self.t,
            "rows": [
                {"volume": v, "n0": n0,
                 "estimate": float(self.estimates[i, j]),
                 "se": float(self.ses[i, j])}
                for i, v in enumerate(self.volumes)
                for j, n0 in enumerate(self.n0_ladder)
            ],
            "sup_by_n0": [float(s) for s in self.sup_by_n0()],
        }


def tail_bound_check(model: SpinChainModel, volumes, x, t: float, n0_ladder,
                     weights: WeightFamily, replicas: int, seed: int, *,
                     h: float = 0.01, scheme: str = "euler",
                     threads=None) -> TailTable:
    """Weighted tail mass beyond each cutoff, per truncation volume.

    Cutoffs at or past a volume contribute exactly zero there.  At t=0 the
    answer is deterministic (the tail mass of the initial state) and no
    paths are run.
    """
    volumes = tuple(int(v) for v in volumes)
    n0_ladder = tuple(int(k) for k in n0_ladder)
    if not volumes or min(volumes) < 1:
        raise UsageError("need at least one volume >= 1")
    if not n0_ladder or min(n0_ladder) < 1:
        raise UsageError("tail cutoffs must be >= 1")
    if t < 0:
        raise UsageError("t must be >= 0")
    x = np.asarray(x, dtype=float).reshape(-1)
    est = np.zeros((len(volumes), len(n0_ladder)))
    ses = np.zeros_like(est)
    for i, n in enumerate(volumes):
        xn = project(x, n)
        rho_n = np.array([weights.rho(k) for k in range(1, n + 1)])
        if t == 0.0:
            for j, n0 in enumerate(n0_ladder):
                est[i, j] = float(np.sum((xn[n0:] ** 2) * rho_n[n0:])) if n0 < n else 0.0
            continue
        snaps, masks = _ensemble_checkpoints(model.with_volume(n), xn, replicas,
                                             seed, i, h, [t], scheme=scheme,
                                             threads=threads)
        _blowup_guard(masks[0], f"the volume-{n} ensemble")
        X = snaps[0][~masks[0]]
        for j, n0 in enumerate(n0_ladder):
            if n0 >= n:
                est[i, j], ses[i, j] = 0.0, 0.0
                continue
            tails = np.sum((X[:, n0:] ** 2) * rho_n[n0:], axis=1)
            est[i, j], ses[i, j] = _mean_se(tails)
    return TailTable(volumes=volumes, n0_ladder=n0_ladder, t=t,
                     estimates=est, ses=ses)


# ---------------------------------------------------------------------------
# volume and initial-condition stability


@dataclass(frozen=True)
class VolumeMatrix:
    """D[n][m] = E sup_{t<=T1} ||first k coords of X^(n) - X^(m)||^2 under
    synchronous coupling; symmetric, exactly zero diagonal."""

    volumes: tuple
    k: int
    horizon: float
    D: np.ndarray
    SE: np.ndarray

    def headline(self) -> dict:
        """For each candidate threshold V in `volumes`: the worst pair
        discrepancy among pairs with min(n, m) >= V."""
        out = {}
        for V in self.volumes:
            vals = [self.D[i, j]
                    for i, n in enumerate(self.volumes)
                    for j, m in enumerate(self.volumes)
                    if i < j and min(n, m) >= V]
            if vals:
                out[V] = float(max(vals))
        return out

    def to_jsonable(self) -> dict:
        return {
            "volumes": list(self.volumes), "k": self.k, "horizon": self.horizon,
            "D": [[float(v) for v in row] for row in self.D],
            "SE": [[float(v) for v in row] for row in self.SE],
            "headline": {str(k): v for k, v in self.headline().items()},
        }


def volume_convergence(model: SpinChainModel, k: int, volumes, x, T1: float,
                       replicas: int, seed: int, *, h: float = 0.01,
                       scheme: str = "euler", threads=None) -> VolumeMatrix:
    """Pairwise volume-truncation discrepancy under shared noise.

    Every pair (n, m) of distinct volumes is driven by the *same* per-replica
    increments (streams keyed by batch only), and the running sup of the
    squared Euclidean distance between the first k coordinates is averaged
    over replicas.  The diagonal is zero by construction, not by sampling.
    """
    volumes = tuple(int(v) for v in volumes)
    if len(set(volumes)) != len(volumes):
        raise UsageError("volumes must be distinct")
    if k < 1:
        raise UsageError("k must be >= 1")
    if k >= min(volumes):
        raise UsageError("k must be smaller than every volume")
    if not (T1 > 0):
        raise UsageError("T1 must be positive")
    steps = int(round(T1 / h))
    if steps < 1:
        raise UsageError("horizon shorter than one step")
    x = np.asarray(x, dtype=float).reshape(-1)
    nv = len(volumes)
    D = np.zeros((nv, nv))
    SE = np.zeros((nv, nv))
    for i in range(nv):
        for j in range(i + 1, nv):
            n, m = volumes[i], volumes[j]
            sups = np.empty(replicas)
            blown = np.zeros(replicas, dtype=bool)
            for lo in range(0, replicas, _BATCH):
                hi = min(lo + _BATCH, replicas)
                rows = hi - lo
                gen = replica_stream(seed, lo // _BATCH)
                dw = np.ascontiguousarray(
                    gen.normal(0.0, math.sqrt(h), (steps, rows)).T)
                Xa = np.tile(project(x, n), (rows, 1))
                Xb = np.tile(project(x, m), (rows, 1))
                s, bl = evolve_pair_supdiff(model, n, m, Xa, Xb, dw, h,
                                            k_coords=k, scheme=scheme,
                                            threads=threads)
                sups[lo:hi] = s
                blown[lo:hi] = bl.astype(bool)
            _blowup_guard(blown, f"the ({n},{m}) pair ensemble")
            D[i, j], SE[i, j] = _mean_se(sups[~blown])
            D[j, i], SE[j, i] = D[i, j], SE[i, j]
    return VolumeMatrix(volumes=volumes, k=k, horizon=T1, D=D, SE=SE)


@dataclass(frozen=True)
class InitialContinuityTable:
    """Worst-direction sensitivity E sup_{t<=T1} ||diff of first k coords||^2
    across perturbation radii."""

    deltas: tuple
    k: int
    horizon: float
    tries: int
    estimates: np.ndarray
    ses: np.ndarray
    worst_direction: np.ndarray  # index of the maximizing perturbation

    def to_jsonable(self) -> dict:
        return {
            "k": self.k, "horizon": self.horizon, "tries": self.tries,
            "rows": [
                {"delta": float(d), "estimate": float(e), "se": float(s),
                 "direction": int(w)}
                for d, e, s, w in zip(self.deltas, self.estimates, self.ses,
                                      self.worst_direction)
            ],
        }


def initial_continuity(model: SpinChainModel, x, deltas, k: int, T1: float,
                       replicas: int, seed: int, *, weights: WeightFamily,
                       tries: int = 8, h: float = 0.01, scheme: str = "euler",
                       threads=None) -> InitialContinuityTable:
    """Perturbation response under shared noise, worst over random directions.

    The same `tries` unit directions (normalized in the rho-weighted 2-norm)
    are reused at every radius delta, and every run shares the same noise
    streams, so for a linear drift the delta -> 2*delta ratio is exactly 4.
    """
    n = model.volume
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != n:
        raise UsageError(f"initial state has {x.size} components, volume is {n}")
    if not (1 <= k <= n):
        raise UsageError("k must satisfy 1 <= k <= volume")
    if tries < 1:
        raise UsageError("need at least one direction")
    deltas = tuple(float(d) for d in deltas)
    if any(d < 0 for d in deltas):
        raise UsageError("perturbation radii must be >= 0")
    steps = int(round(T1 / h))
    if steps < 1:
        raise UsageError("horizon shorter than one step")
    spec = WeightedNormSpec(p=2.0, rho=weights)
    dir_gen = replica_stream(seed, (1 << 40) + 7)
    dirs = dir_gen.normal(0.0, 1.0, (tries, n))
    dirs = np.stack([u / weighted_norm(u, spec) for u in dirs])
    est = np.zeros(len(deltas))
    ses = np.zeros(len(deltas))
    worst = np.zeros(len(deltas), dtype=int)
    for di, d in enumerate(deltas):
        if d == 0.0:
            continue
        best = (-1.0, 0.0, 0)
        for s_idx in range(tries):
            y = x + d * dirs[s_idx]
            sups = np.empty(replicas)
            blown = np.zeros(replicas, dtype=bool)
            for lo in range(0, replicas, _BATCH):
                hi = min(lo + _BATCH, replicas)
                rows = hi - lo
                gen = replica_stream(seed, lo // _BATCH)
                dw = np.ascontiguousarray(
                    gen.normal(0.0, math.sqrt(h), (steps, rows)).T)
                Xa = np.tile(x, (rows, 1))
                Xb = np.tile(y, (rows, 1))
                sv, bl = evolve_pair_supdiff(model, n, n, Xa, Xb, dw, h,
                                             k_coords=k, scheme=scheme,
                                             threads=threads)
                sups[lo:hi] = sv
                blown[lo:hi] = bl.astype(bool)
            _blowup_guard(blown, f"the delta={d} ensemble")
            mean, se = _mean_se(sups[~blown])
            if mean > best[0]:
                best = (mean, se, s_idx)
        est[di], ses[di], worst[di] = best
    return InitialContinuityTable(deltas=deltas, k=k, horizon=T1, tries=tries,
                                  estimates=est, ses=ses, worst_direction=worst)


# ---------------------------------------------------------------------------
# tightness diagnostic


@dataclass(frozen=True)
class TightnessTable:
    """Estimated mass outside the per-site compact boxes, per epsilon and
    per measure, with the sup across measures (volumes)."""

    eps_ladder: tuple
    box_constant: float
    outside: np.ndarray  # (len(eps_ladder), len(measures))
    sup: np.ndarray      # (len(eps_ladder),)

    def to_jsonable(self) -> dict:
        return {
            "box_constant": self.box_constant,
            "rows": [
                {"eps": float(e), "outside": [float(v) for v in row],
                 "sup": float(s)}
                for e, row, s in zip(self.eps_ladder, self.outside, self.sup)
            ],
        }


def _mass_outside(measure: EmpiricalMeasure, site: int, bound: float) -> float:
    """Histogram mass of |x_site| > bound, linearly interpolating the two
    straddling bins.  Mass that was clipped into the edge bins stays there,
    so a bound beyond the histogram range reads as zero exceedance."""
    edges = measure.edges
    p = measure.site_probs()[site - 1]
    lo, hi = -bound, bound
    left = np.minimum(np.maximum(edges[:-1], lo), hi)
    right = np.minimum(np.maximum(edges[1:], lo), hi)
    inside_frac = (right - left) / np.diff(edges)
    return float(1.0 - np.sum(p * inside_frac))


def tightness_diagnostic(measures: Sequence[EmpiricalMeasure],
                         weights: WeightFamily, eps_ladder,
                         drift: LocalDrift) -> TightnessTable:
    """Mass outside the compact boxes K_eps, per epsilon, across volumes.

    The box at level eps confines site i to |x_i|^(2 theta) <=
    (C+1)/(eps * v(i)) + C/v(i) with C = 2 theta eta * sum_i v(i); outside
    mass is estimated from the product marginals as 1 - prod_i P(inside).
    Boxes are nested decreasing in eps, so the outside-mass columns are
    nondecreasing; as eps grows the boxes shrink toward the floor C/v(i).
    """
    if weights.v is None:
        raise UsageError("weight family lacks the auxiliary summable weight v")
    measures = list(measures)
    if not measures:
        raise UsageError("need at least one measure")
    for m in measures[1:]:
        if not np.array_equal(m.edges, measures[0].edges):
            raise UsageError("mismatched binning: all measures must share edges")
    eps_ladder = tuple(float(e) for e in eps_ladder)
    if any(e <= 0 for e in eps_ladder):
        raise UsageError("eps values must be positive")
    ok, v_total, _ = summability_certificate(weights.v_kind, weights.v_kind_params)
    if not ok:
        raise UsageError("auxiliary weight v is not certified summable")
    theta = drift.theta
    C = 2.0 * theta * drift.eta * v_total
    outside = np.zeros((len(eps_ladder), len(measures)))
    for ei, eps in enumerate(eps_ladder):
        for mi, meas in enumerate(measures):
            inside = 1.0
            for i in range(1, meas.volume + 1):
                B = (C + 1.0) / (eps * weights.v(i)) + C / weights.v(i)
                b = B ** (1.0 / (2.0 * theta))
                inside *= max(0.0, 1.0 - _mass_outside(meas, i, b))
            outside[ei, mi] = 1.0 - inside
    return TightnessTable(eps_ladder=eps_ladder, box_constant=C,
                          outside=outside, sup=outside.max(axis=1))
