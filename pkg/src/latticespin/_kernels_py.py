"""Pure-NumPy stepping kernels: the fallback when the compiled core is absent.

Semantics here are the reference; `_kernels.pyx` mirrors them loop-for-loop.
All functions take the flattened stepper description (drift kind/params,
base coupling arrays, modulation) rather than model objects, so both
backends stay trivially interchangeable.

Blowup policy: a replica whose Euclidean norm exceeds 1e12 is frozen at the
offending state and flagged; comparisons are written so NaN counts as blown.
"""

from __future__ import annotations

import numpy as np

BLOWUP_SQ = 1.0e24  # (1e12)^2, compared against the squared norm

__all__ = ["run_path", "run_ensemble", "run_pair_supdiff", "run_ensemble_supfeature"]


def _drift_local(drift_kind: int, d1: float, d2: float, x: np.ndarray) -> np.ndarray:
    if drift_kind == 0:
        return d1 * x
    if drift_kind == 1:
        return d1 * x + d2 * (x * x * x)
    return d1 * x + d2 * np.tanh(x)


def _mod_factor(mod_kind: int, depth: float, omega: float, phase: float, t: float) -> float:
    if mod_kind == 0:
        return 1.0
    return 1.0 + depth * np.sin(omega * t + phase)


def _drift_full(drift_kind, d1, d2, sub0, sup0, fac, X):
    """Chain drift for a batch X of shape (..., n)."""
    out = _drift_local(drift_kind, d1, d2, X)
    n = X.shape[-1]
    if n > 1:
        out[..., 1:] += (fac * sub0[1:]) * X[..., :-1]
        out[..., :-1] += (fac * sup0[:-1]) * X[..., 1:]
    return out


def _maybe_tame(D, h, tamed):
    if not tamed:
        return D
    norm = np.sqrt(np.sum(D * D, axis=-1, keepdims=True))
    return D / (1.0 + h * norm)


def run_path(drift_kind, d1, d2, sub0, sup0, mod_kind, depth, omega, phase, tamed,
             x0, dw, h, t0, record_every, threads=1):
    """Single path; records every `record_every`-th state (step 0 included).

    Returns (states, blow_step): states has one row per recorded step; if the
    path blew up at step k the flag is k and rows past the truncation point
    hold the frozen state.
    """
    x = np.array(x0, dtype=float)
    steps = dw.shape[0]
    nrec = steps // record_every + 1
    states = np.empty((nrec, x.size))
    states[0] = x
    blow_step = -1
    row = 1
    for k in range(steps):
        if blow_step < 0:
            fac = _mod_factor(mod_kind, depth, omega, phase, t0 + k * h)
            D = _maybe_tame(_drift_full(drift_kind, d1, d2, sub0, sup0, fac, x), h, tamed)
            x = x + h * D
            x[0] += dw[k]
            s = float(np.sum(x * x))
            if not (s <= BLOWUP_SQ):
                blow_step = k
        if (k + 1) % record_every == 0:
            states[row] = x
            row += 1
    return states, blow_step


def run_ensemble(drift_kind, d1, d2, sub0, sup0, mod_kind, depth, omega, phase, tamed,
                 X0, dw, h, t0, threads=1):
    """Evolve a batch of replicas to the final time; returns (X_final, blown)."""
    X = np.array(X0, dtype=float)
    m = X.shape[0]
    blown = np.zeros(m, dtype=np.uint8)
    steps = dw.shape[1]
    for k in range(steps):
        live = blown == 0
        if not live.any():
            break
        fac = _mod_factor(mod_kind, depth, omega, phase, t0 + k * h)
        Xl = X[live]
        D = _maybe_tame(_drift_full(drift_kind, d1, d2, sub0, sup0, fac, Xl), h, tamed)
        Xl = Xl + h * D
        Xl[:, 0] += dw[live, k]
        X[live] = Xl
        s = np.sum(Xl * Xl, axis=1)
        newly = ~(s <= BLOWUP_SQ)
        if newly.any():
            idx = np.flatnonzero(live)[newly]
            blown[idx] = 1
    return X, blown


def run_pair_supdiff(drift_kind, d1, d2, sub0a, sup0a, sub0b, sup0b,
                     mod_kind, depth, omega, phase, tamed,
                     X0a, X0b, dw, h, t0, k_coords, wts, threads=1):
    """Two chains per replica, identical noise; track sup_t of the weighted
    squared difference of the first `k_coords` coordinates (missing
    coordinates count as zero).  Returns (sup (m,), blown (m,))."""
    Xa = np.array(X0a, dtype=float)
    Xb = np.array(X0b, dtype=float)
    m = Xa.shape[0]
    na, nb = Xa.shape[1], Xb.shape[1]
    kc = int(k_coords)
    ka, kb = min(kc, na), min(kc, nb)
    wts = np.asarray(wts, dtype=float)

    def diffsq(A, B):
        d = np.zeros((A.shape[0], kc))
        d[:, :ka] = A[:, :ka]
        d[:, :kb] -= B[:, :kb]
        return np.sum(wts * d * d, axis=1)

    sup = diffsq(Xa, Xb)
    blown = np.zeros(m, dtype=np.uint8)
    steps = dw.shape[1]
    for k in range(steps):
        live = blown == 0
        if not live.any():
            break
        fac = _mod_factor(mod_kind, depth, omega, phase, t0 + k * h)
        Al = Xa[live]
        Bl = Xb[live]
        Da = _maybe_tame(_drift_full(drift_kind, d1, d2, sub0a, sup0a, fac, Al), h, tamed)
        Db = _maybe_tame(_drift_full(drift_kind, d1, d2, sub0b, sup0b, fac, Bl), h, tamed)
        Al = Al + h * Da
        Bl = Bl + h * Db
        Al[:, 0] += dw[live, k]
        Bl[:, 0] += dw[live, k]
        Xa[live] = Al
        Xb[live] = Bl
        sa = np.sum(Al * Al, axis=1)
        sb = np.sum(Bl * Bl, axis=1)
        ok = (sa <= BLOWUP_SQ) & (sb <= BLOWUP_SQ)
        idx = np.flatnonzero(live)
        blown[idx[~ok]] = 1
        d = diffsq(Al[ok], Bl[ok])
        keep = idx[ok]
        sup[keep] = np.maximum(sup[keep], d)
    return sup, blown


def run_ensemble_supfeature(drift_kind, d1, d2, sub0, sup0, mod_kind, depth, omega,
                            phase, tamed, X0, dw, h, t0, wts, q, threads=1):
    """Running max over time of sum_i wts[i] * |x_i|^q per replica."""
    X = np.array(X0, dtype=float)
    m = X.shape[0]
    wts = np.asarray(wts, dtype=float)
    sup = np.sum(wts * np.abs(X) ** q, axis=1)
    blown = np.zeros(m, dtype=np.uint8)
    steps = dw.shape[1]
    for k in range(steps):
        live = blown == 0
        if not live.any():
            break
        fac = _mod_factor(mod_kind, depth, omega, phase, t0 + k * h)
        Xl = X[live]
        D = _maybe_tame(_drift_full(drift_kind, d1, d2, sub0, sup0, fac, Xl), h, tamed)
        Xl = Xl + h * D
        Xl[:, 0] += dw[live, k]
        X[live] = Xl
        s = np.sum(Xl * Xl, axis=1)
        ok = s <= BLOWUP_SQ
        idx = np.flatnonzero(live)
        blown[idx[~ok]] = 1
        feat = np.sum(wts * np.abs(Xl[ok]) ** q, axis=1)
        keep = idx[ok]
        sup[keep] = np.maximum(sup[keep], feat)
    return sup, blown
