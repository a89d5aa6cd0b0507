"""Lie-bracket basis for the hypoellipticity check.

On the time-extended state (t, x) the drift field is A0 = (1, b(x)) and the
noise field is A1 = (0, e1).  Only the ladder

    A1, [A0, A1], [A0, [A0, A1]], ...

is generated: each rung reaches one site further down the chain, with pivot
entry a_{2,1} a_{3,2} ... a_{i+1,i} at slot i+1 after i nestings, so these
n+1 columns already decide the rank.

Two constructions are provided.  The analytic one propagates truncated
multivariate Taylor expansions of the bracket entries around the evaluation
point: each nesting differentiates once and so costs one degree of accuracy,
and a degree budget of n-1 (matching the jet order requested from f) keeps
every constant term exact.  The numeric one nests central differences of the
raw fields and is used as an independent cross-check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from ._errors import UsageError
from .model import SpinChainModel, coupling_arrays, drift_vector

__all__ = [
    "BracketBasis",
    "bracket_basis_analytic",
    "bracket_basis_numeric",
    "rank_check",
]


@dataclass(frozen=True)
class BracketBasis:
    """Columns: A0, A1, then the depth-d brackets for d = 1..n-1; row 0 is
    the time component, row i the site-i component."""

    matrix: np.ndarray  # (n+1) x (n+1)
    point: np.ndarray   # the state x the fields were evaluated at

    @property
    def volume(self) -> int:
        return self.matrix.shape[0] - 1


# --- truncated multivariate polynomials ------------------------------------
#
# Exponent tuples -> coefficients, always truncated to a total-degree cap.
# Sizes stay tiny (n variables, degree <= n-1), so dicts beat any clever
# representation.


def _p_add(a: dict, b: dict, scale: float = 1.0) -> dict:
    out = dict(a)
    for e, c in b.items():
        out[e] = out.get(e, 0.0) + scale * c
        if out[e] == 0.0:
            del out[e]
    return out


def _p_mul(a: dict, b: dict, cap: int) -> dict:
    out: dict = {}
    for ea, ca in a.items():
        da = sum(ea)
        for eb, cb in b.items():
            if da + sum(eb) > cap:
                continue
            e = tuple(x + y for x, y in zip(ea, eb))
            out[e] = out.get(e, 0.0) + ca * cb
    return {e: c for e, c in out.items() if c != 0.0}


def _p_diff(a: dict, j: int) -> dict:
    out = {}
    for e, c in a.items():
        if e[j] == 0:
            continue
        e2 = list(e)
        e2[j] -= 1
        out[tuple(e2)] = c * e[j]
    return out


def _p_const(a: dict) -> float:
    for e, c in a.items():
        if sum(e) == 0:
            return c
    return 0.0


def _drift_polys(model: SpinChainModel, x: np.ndarray, cap: int) -> list:
    """Taylor expansions of the drift components around x, to total degree cap."""
    n = model.volume
    sub, sup = coupling_arrays(model, 0.0)
    zero = (0,) * n
    polys = []
    for i in range(n):
        jet = model.drift.jet(0.0, float(x[i]), cap)
        if len(jet) < cap + 1:
            raise UsageError(
                f"drift jet of order {cap} required for volume {n}, "
                f"got order {len(jet) - 1}")
        p: dict = {}
        for k in range(cap + 1):
            coef = jet[k] / math.factorial(k)
            if coef != 0.0:
                e = [0] * n
                e[i] = k
                p[tuple(e)] = coef
        for jn, a in ((i - 1, sub[i]), (i + 1, sup[i])):
            if 0 <= jn < n and a != 0.0:
                p = _p_add(p, {zero: a * float(x[jn])})
                e = [0] * n
                e[jn] = 1
                p = _p_add(p, {tuple(e): a})
        polys.append(p)
    return polys


def bracket_basis_analytic(model: SpinChainModel, x) -> BracketBasis:
    """Exact bracket ladder at x via jet-fed truncated Taylor arithmetic.

    Requires a time-homogeneous model and drift jets to order n-1.  Every
    constant term produced is exact: degree bookkeeping guarantees the
    truncation never reaches down to degree 0.
    """
    if model.period is not None:
        raise UsageError("bracket analysis is for time-homogeneous models")
    x = np.asarray(x, dtype=float).reshape(-1)
    n = model.volume
    if x.size != n:
        raise UsageError(f"state has {x.size} components, volume is {n}")
    cap = n - 1
    b = _drift_polys(model, x, cap)

    cols = np.zeros((n + 1, n + 1))
    cols[0, 0] = 1.0
    for i in range(n):
        cols[1 + i, 0] = _p_const(b[i])
    cols[1, 1] = 1.0

    # current bracket as polynomials; A1 = e1
    cur = [{} for _ in range(n)]
    cur[0] = {(0,) * n: 1.0}
    acc = cap  # accuracy degree of `cur`
    for depth in range(1, n):
        acc -= 1
        new = []
        for i in range(n):
            p: dict = {}
            for j in range(n):
                db = _p_diff(b[i], j)
                if db and cur[j]:
                    p = _p_add(p, _p_mul(db, cur[j], acc))
                dc = _p_diff(cur[i], j)
                if dc and b[j]:
                    p = _p_add(p, _p_mul(dc, b[j], acc), scale=-1.0)
            new.append(p)
        cur = new
        for i in range(n):
            cols[1 + i, 1 + depth] = _p_const(cur[i])
    return BracketBasis(matrix=cols, point=x)


# half-width m stencils for f'; exact on polynomials of degree <= 2m
_STENCILS = {
    1: np.array([-0.5, 0.5]),
    2: np.array([1 / 12, -2 / 3, 2 / 3, -1 / 12]),
    3: np.array([-1 / 60, 3 / 20, -3 / 4, 3 / 4, -3 / 20, 1 / 60]),
    4: np.array([1 / 280, -4 / 105, 1 / 5, -4 / 5, 4 / 5, -1 / 5, 4 / 105, -1 / 280]),
}


def _level_params(level: int, fd_step: float):
    """Step and stencil half-width for the `level`-th nested differentiation.

    Nesting a difference quotient divides the inner evaluation noise by the
    step, so a fixed tiny step drowns deep brackets in roundoff regardless of
    the integrand.  Outer levels therefore relax the step geometrically
    (fd_step^(1/(level+1))) and widen the stencil so that the polynomial
    drifts this ladder targets are still differentiated exactly: level l sees
    entries of degree max(3, 2l-2), needing half-width max(2, l-1).
    """
    h = fd_step ** (1.0 / (level + 1.0))
    m = min(max(2, level - 1), 4)
    return h, m


def _ladder_numeric(model: SpinChainModel, X: np.ndarray, depth: int,
                    fd_step: float) -> np.ndarray:
    """Depth-`depth` bracket at each row of X (batched), shape (B, n)."""
    n = model.volume
    B = X.shape[0]
    if depth == 0:
        out = np.zeros((B, n))
        out[:, 0] = 1.0
        return out
    h, m = _level_params(depth, fd_step)
    w = _STENCILS[m] / h
    offsets = np.array([k for k in range(-m, m + 1) if k != 0], dtype=float)
    # displaced points: row-major (B, j, k) ordering
    disp = np.repeat(X, n * 2 * m, axis=0).reshape(B, n, 2 * m, n)
    for j in range(n):
        disp[:, j, :, j] += offsets * h
    disp = disp.reshape(-1, n)

    b_x = drift_vector(model, 0.0, X)
    c_x = _ladder_numeric(model, X, depth - 1, fd_step)
    b_d = drift_vector(model, 0.0, disp).reshape(B, n, 2 * m, n)
    c_d = _ladder_numeric(model, disp, depth - 1, fd_step).reshape(B, n, 2 * m, n)
    # J[b, i, j] = d(field_i)/dx_j at row b
    Jb = np.einsum("bjki,k->bij", b_d, w)
    Jc = np.einsum("bjki,k->bij", c_d, w)
    return (np.einsum("bij,bj->bi", Jb, c_x)
            - np.einsum("bij,bj->bi", Jc, b_x))


def _numeric_matrices(model: SpinChainModel, X: np.ndarray, fd_step: float) -> np.ndarray:
    n = model.volume
    B = X.shape[0]
    out = np.zeros((B, n + 1, n + 1))
    out[:, 0, 0] = 1.0
    out[:, 1:, 0] = drift_vector(model, 0.0, X)
    for depth in range(0, n):
        cols = _ladder_numeric(model, X, depth, fd_step)
        if not np.all(np.isfinite(cols)):
            raise UsageError("numeric bracket produced non-finite entries")
        out[:, 1:, 1 + depth] = cols
    return out


def bracket_basis_numeric(model: SpinChainModel, x, fd_step: float = 1e-4) -> BracketBasis:
    """Bracket ladder by nested central differences of the raw fields.

    Each differentiation level uses a widened central stencil and a
    geometrically relaxed step (see `_level_params`), so polynomial drifts
    (linear, cubic) are differentiated exactly at every depth and only
    rounding noise remains.  The ladder additionally runs at fd_step and
    fd_step/2; if the two differ beyond 1e-3 relative (possible for
    non-polynomial drifts), the Richardson extrapolation of the pair is
    returned instead of the finer result.
    """
    if not (fd_step > 0.0):
        raise UsageError("fd_step must be positive")
    if model.period is not None:
        raise UsageError("bracket analysis is for time-homogeneous models")
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != model.volume:
        raise UsageError(f"state has {x.size} components, volume is {model.volume}")
    X = x[None, :]
    coarse = _numeric_matrices(model, X, fd_step)[0]
    fine = _numeric_matrices(model, X, fd_step / 2.0)[0]
    scale = max(1.0, float(np.max(np.abs(fine))))
    if float(np.max(np.abs(coarse - fine))) / scale > 1e-3:
        # difference quotients have even error series: kill the leading term
        basis = (4.0 * fine - coarse) / 3.0
    else:
        basis = fine
    return BracketBasis(matrix=basis, point=x)


def rank_check(basis: BracketBasis, tol: float = None):
    """(rank, full) by column-pivoted QR; diagonal entries of R below
    tol (default (n+1) * machine eps * largest pivot * 1e3) count as zero.
    The threshold is relative, so column rescalings do not flip the verdict.
    """
    A = basis.matrix
    m = A.shape[0]
    _, R, _ = scipy.linalg.qr(A, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    top = float(diag.max()) if diag.size else 0.0
    if tol is None:
        tol = m * np.finfo(float).eps * 1e3
    elif not (tol > 0.0):
        raise UsageError("rank tolerance must be positive")
    else:
        tol = float(tol)
    rank = int(np.sum(diag > tol * max(top, 1e-300)))
    return rank, rank == m
