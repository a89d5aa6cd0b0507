"""Time discretization of the chain SDE with reusable, seeded noise.

The only stochastic input is the site-1 Brownian increment stream
(`NoisePath`).  Streams come from a counter-based Philox generator keyed by
(seed, stream index), so replica r of an ensemble is a pure function of the
seed — reruns are bitwise identical no matter how work is scheduled.

Schemes: plain Euler–Maruyama, or a tamed variant dividing the drift by
(1 + h * |drift|) to keep superlinear interactions (cubic) from exploding at
coarse steps.  The noise is additive, so higher-order schemes would collapse
to Euler anyway.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from ._emit import write_csv
from ._errors import UsageError
from .model import SpinChainModel, drift_vector
from .spaces import project

__all__ = [
    "NoisePath",
    "Trajectory",
    "make_noise",
    "replica_stream",
    "noise_matrix",
    "simulate",
    "simulate_pair_volumes",
    "simulate_pair_initials",
    "evolve_ensemble",
    "evolve_pair_supdiff",
    "evolve_supfeature",
    "write_trajectory_csv",
]

SCHEMES = ("euler", "tamed")


@dataclass(frozen=True)
class NoisePath:
    """Brownian increments for site 1 on a uniform grid: increment k is
    W((k+1)h) - W(kh) ~ N(0, h)."""

    h: float
    horizon: float
    increments: np.ndarray
    seed: int

    @property
    def steps(self) -> int:
        return self.increments.shape[0]


@dataclass(frozen=True)
class Trajectory:
    """A recorded path: row k of ``states`` is the state at ``times[k]``.

    If ``blowup`` is set, the run left the trust region (norm > 1e12); the
    arrays are truncated at the offending step and the last row is the
    (finite) state that crossed the threshold.
    """

    times: np.ndarray
    states: np.ndarray
    volume: int
    blowup: bool = False

    def final(self) -> np.ndarray:
        return self.states[-1]


def replica_stream(seed: int, stream: int) -> np.random.Generator:
    """Generator for (seed, stream): counter-based, so streams never collide."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(stream),))
    return np.random.Generator(np.random.Philox(ss))


def make_noise(seed: int, h: float, horizon: float) -> NoisePath:
    """ceil(horizon/h) i.i.d. N(0,h) increments, a pure function of the inputs."""
    if not (h > 0.0) or not (horizon > 0.0):
        raise UsageError("noise needs h > 0 and horizon > 0")
    steps = int(math.ceil(horizon / h - 1e-12))
    gen = replica_stream(seed, 0)
    inc = gen.normal(0.0, math.sqrt(h), steps)
    return NoisePath(h=float(h), horizon=float(horizon), increments=inc, seed=int(seed))


def noise_matrix(seed: int, stream: int, rows: int, steps: int, h: float) -> np.ndarray:
    """(rows, steps) increment block for an ensemble batch; batches with
    distinct stream indices are independent.

    Drawn internally as (steps, rows) so that consuming a horizon in segments
    (continuing from one Generator) yields byte-identical increments to one
    contiguous draw — checkpointed ensemble runs do not depend on how the
    horizon was split.
    """
    gen = replica_stream(seed, stream)
    return np.ascontiguousarray(gen.normal(0.0, math.sqrt(h), (steps, rows)).T)


def _generic_path(model, x0, dw, h, t0, record_every, tamed):
    """Reference stepping through drift_vector, for models with custom callables."""
    x = np.array(x0, dtype=float)
    steps = dw.shape[0]
    nrec = steps // record_every + 1
    states = np.empty((nrec, x.size))
    states[0] = x
    blow_step = -1
    row = 1
    for k in range(steps):
        if blow_step < 0:
            d = drift_vector(model, t0 + k * h, x)
            if tamed:
                d = d / (1.0 + h * float(np.sqrt(np.sum(d * d))))
            x = x + h * d
            x[0] += dw[k]
            s = float(np.sum(x * x))
            if not (s <= 1.0e24):
                blow_step = k
        if (k + 1) % record_every == 0:
            states[row] = x
            row += 1
    return states, blow_step


def simulate(model: SpinChainModel, x0, noise: NoisePath, scheme: str = "euler",
             t0: float = 0.0, record_every: int = 1, threads=None) -> Trajectory:
    """Euler–Maruyama (optionally tamed) over the noise grid.

    Noise enters coordinate 1 only.  ``record_every`` thins the stored grid
    (the dynamics always run at the noise resolution).  On blowup the
    trajectory is truncated at the first recorded step past the threshold
    crossing and flagged.
    """
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.size != model.volume:
        raise UsageError(f"initial state has {x0.size} components, volume is {model.volume}")
    if scheme not in SCHEMES:
        raise UsageError(f"unknown scheme {scheme!r}; choose from {SCHEMES}")
    if record_every < 1:
        raise UsageError("record_every must be >= 1")
    tamed = scheme == "tamed"
    spec = kernels.stepper_spec(model, tamed=tamed)
    if spec is not None:
        states, blow_step = kernels.path(spec, x0, noise.increments, noise.h,
                                         t0=t0, record_every=record_every,
                                         threads=threads)
    else:
        states, blow_step = _generic_path(model, x0, noise.increments, noise.h,
                                          t0, record_every, tamed)
    times = t0 + noise.h * record_every * np.arange(states.shape[0])
    if blow_step >= 0:
        keep = blow_step // record_every + 2  # rows at steps <= blow, + initial row
        keep = min(keep, states.shape[0])
        return Trajectory(times[:keep], states[:keep], model.volume, blowup=True)
    return Trajectory(times, states, model.volume, blowup=False)


def simulate_pair_volumes(model: SpinChainModel, n: int, m: int, x, noise: NoisePath,
                          scheme: str = "euler") -> tuple:
    """The same local dynamics at two truncation volumes, driven by identical
    increments (synchronous coupling); initial states are the projections of
    the padded initial ``x``."""
    if n == m:
        raise UsageError("volume pair must be distinct (n != m)")
    if n < 1 or m < 1:
        raise UsageError("volumes must be >= 1")
    ta = simulate(model.with_volume(n), project(x, n), noise, scheme)
    tb = simulate(model.with_volume(m), project(x, m), noise, scheme)
    return ta, tb


def simulate_pair_initials(model: SpinChainModel, x, y, noise: NoisePath,
                           scheme: str = "euler") -> tuple:
    """Two initial conditions, one noise realization (synchronous coupling)."""
    x = np.asarray(x, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    if x.size != model.volume or y.size != model.volume:
        raise UsageError("both initial states must match the model volume")
    ta = simulate(model, x, noise, scheme)
    tb = simulate(model, y, noise, scheme)
    return ta, tb


def _check_scheme(scheme: str) -> bool:
    if scheme not in SCHEMES:
        raise UsageError(f"unknown scheme {scheme!r}; choose from {SCHEMES}")
    return scheme == "tamed"


def _generic_ensemble(model, X, dw, h, t0, tamed):
    """drift_vector-based ensemble stepping; mirrors the kernel semantics."""
    X = np.array(X, dtype=float)
    m = X.shape[0]
    blown = np.zeros(m, dtype=np.uint8)
    for k in range(dw.shape[1]):
        live = blown == 0
        if not live.any():
            break
        Xl = X[live]
        D = drift_vector(model, t0 + k * h, Xl)
        if tamed:
            D = D / (1.0 + h * np.sqrt(np.sum(D * D, axis=-1, keepdims=True)))
        Xl = Xl + h * D
        Xl[:, 0] += dw[live, k]
        X[live] = Xl
        s = np.sum(Xl * Xl, axis=1)
        blown[np.flatnonzero(live)[~(s <= 1.0e24)]] = 1
    return X, blown


def evolve_ensemble(model: SpinChainModel, X0, dw, h, t0: float = 0.0,
                    scheme: str = "euler", threads=None):
    """Advance a replica batch through one noise block: (X_final, blown).

    Rows of ``dw`` are per-replica increment sequences; a replica whose norm
    crosses the blowup threshold is frozen at the offending state and
    flagged.  Uses the compiled stepper when the model is kernel-friendly.
    """
    tamed = _check_scheme(scheme)
    X0 = np.ascontiguousarray(X0, dtype=float)
    spec = kernels.stepper_spec(model, tamed=tamed)
    if spec is not None:
        return kernels.ensemble(spec, X0, dw, h, t0=t0, threads=threads)
    return _generic_ensemble(model, X0, dw, h, t0, tamed)


def evolve_pair_supdiff(model: SpinChainModel, n: int, m: int, X0a, X0b, dw, h,
                        t0: float = 0.0, k_coords: int = 1, wts=None,
                        scheme: str = "euler", threads=None):
    """Synchronously coupled batch at volumes (n, m); per replica, the running
    sup over the step grid of sum_{j<=k_coords} wts_j (Xa_j - Xb_j)^2,
    initial states included.  Returns (sup, blown)."""
    tamed = _check_scheme(scheme)
    X0a = np.ascontiguousarray(X0a, dtype=float)
    X0b = np.ascontiguousarray(X0b, dtype=float)
    if wts is None:
        wts = np.ones(int(k_coords))
    wts = np.asarray(wts, dtype=float)
    spec_a = kernels.stepper_spec(model.with_volume(n), tamed=tamed)
    spec_b = kernels.stepper_spec(model.with_volume(m), tamed=tamed)
    if spec_a is not None and spec_b is not None:
        return kernels.pair_supdiff(spec_a, spec_b, X0a, X0b, dw, h, t0=t0,
                                    k_coords=k_coords, wts=wts, threads=threads)
    # generic twin stepping, same increments on both chains
    ma = model.with_volume(n)
    mb = model.with_volume(m)
    Xa = np.array(X0a, dtype=float)
    Xb = np.array(X0b, dtype=float)
    kc = int(k_coords)
    ka, kb = min(kc, n), min(kc, m)

    def diffsq(A, B):
        d = np.zeros((A.shape[0], kc))
        d[:, :ka] = A[:, :ka]
        d[:, :kb] -= B[:, :kb]
        return np.sum(wts * d * d, axis=1)

    sup = diffsq(Xa, Xb)
    blown = np.zeros(Xa.shape[0], dtype=np.uint8)
    for k in range(dw.shape[1]):
        live = blown == 0
        if not live.any():
            break
        Al, Bl = Xa[live], Xb[live]
        Da = drift_vector(ma, t0 + k * h, Al)
        Db = drift_vector(mb, t0 + k * h, Bl)
        if tamed:
            Da = Da / (1.0 + h * np.sqrt(np.sum(Da * Da, axis=-1, keepdims=True)))
            Db = Db / (1.0 + h * np.sqrt(np.sum(Db * Db, axis=-1, keepdims=True)))
        Al = Al + h * Da
        Bl = Bl + h * Db
        Al[:, 0] += dw[live, k]
        Bl[:, 0] += dw[live, k]
        Xa[live], Xb[live] = Al, Bl
        ok = (np.sum(Al * Al, axis=1) <= 1.0e24) & (np.sum(Bl * Bl, axis=1) <= 1.0e24)
        idx = np.flatnonzero(live)
        blown[idx[~ok]] = 1
        keep = idx[ok]
        sup[keep] = np.maximum(sup[keep], diffsq(Al[ok], Bl[ok]))
    return sup, blown


def evolve_supfeature(model: SpinChainModel, X0, dw, h, t0: float = 0.0,
                      wts=None, q: float = 2.0, scheme: str = "euler", threads=None):
    """Per replica, the running max over the step grid (initial state
    included) of sum_i wts_i |x_i|^q.  Returns (sup, blown)."""
    tamed = _check_scheme(scheme)
    X0 = np.ascontiguousarray(X0, dtype=float)
    if wts is None:
        wts = np.ones(model.volume)
    wts = np.asarray(wts, dtype=float)
    spec = kernels.stepper_spec(model, tamed=tamed)
    if spec is not None:
        return kernels.ensemble_supfeature(spec, X0, dw, h, t0=t0, wts=wts,
                                           q=q, threads=threads)
    X = np.array(X0, dtype=float)
    sup = np.sum(wts * np.abs(X) ** q, axis=1)
    blown = np.zeros(X.shape[0], dtype=np.uint8)
    for k in range(dw.shape[1]):
        live = blown == 0
        if not live.any():
            break
        Xl = X[live]
        D = drift_vector(model, t0 + k * h, Xl)
        if tamed:
            D = D / (1.0 + h * np.sqrt(np.sum(D * D, axis=-1, keepdims=True)))
        Xl = Xl + h * D
        Xl[:, 0] += dw[live, k]
        X[live] = Xl
        ok = np.sum(Xl * Xl, axis=1) <= 1.0e24
        idx = np.flatnonzero(live)
        blown[idx[~ok]] = 1
        keep = idx[ok]
        sup[keep] = np.maximum(sup[keep], np.sum(wts * np.abs(Xl[ok]) ** q, axis=1))
    return sup, blown


def write_trajectory_csv(traj: Trajectory, path: str, provenance=None) -> None:
    """CSV export: header t,x1,...,xn; 17-significant-digit decimals."""
    header = ["t"] + [f"x{i}" for i in range(1, traj.volume + 1)]
    rows = ([t] + list(row) for t, row in zip(traj.times, traj.states))
    write_csv(path, header, rows, provenance)
