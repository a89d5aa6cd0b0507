"""Weighted sequence-space geometry.

States produced anywhere in this package are finite vectors standing for
sequences padded with zeros: slot j of the array is site j+1, everything past
the stored prefix is exactly 0.  Norms over such embeddings are therefore
exact finite sums.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._errors import UsageError
from .model import WeightFamily

__all__ = [
    "WeightedNormSpec",
    "weighted_norm",
    "project",
    "embed",
    "tail_mass",
    "precompact_witness",
]


@dataclass(frozen=True)
class WeightedNormSpec:
    """Exponent p >= 1 (real, typically 2 or 2*theta) and the weight family."""

    p: float
    rho: WeightFamily

    def __post_init__(self):
        if not (self.p >= 1.0):
            raise UsageError("norm exponent p must be >= 1")


def _rho_prefix(rho: WeightFamily, n: int) -> np.ndarray:
    return np.array([rho.rho(i) for i in range(1, n + 1)], dtype=float)


def weighted_norm(x, spec: WeightedNormSpec) -> float:
    """(sum_i |x_i|^p rho(i))^(1/p) over the stored prefix of x."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if not np.all(np.isfinite(x)):
        raise UsageError("weighted_norm requires finite input")
    if x.size == 0:
        return 0.0
    w = _rho_prefix(spec.rho, x.size)
    return float(np.sum(np.abs(x) ** spec.p * w) ** (1.0 / spec.p))


def project(x, k: int) -> np.ndarray:
    """First k coordinates of the padded sequence (zero-filled past support)."""
    if k < 1:
        raise UsageError("projection length must be >= 1")
    x = np.asarray(x, dtype=float).reshape(-1)
    out = np.zeros(k)
    m = min(k, x.size)
    out[:m] = x[:m]
    return out


def embed(xn) -> np.ndarray:
    """The finite vector seen as a sequence: a defensive copy of its prefix.

    Coordinates beyond the stored length are zero by the padding convention,
    so no explicit tail is materialized.
    """
    return np.array(xn, dtype=float).reshape(-1).copy()


def tail_mass(x, n0: int, rho: WeightFamily) -> float:
    """sum_{i > n0} x_i^2 rho(i) over the stored support."""
    if n0 < 1:
        raise UsageError("tail cutoff N0 must be >= 1")
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size <= n0:
        return 0.0
    tail = x[n0:]
    w = np.array([rho.rho(i) for i in range(n0 + 1, x.size + 1)], dtype=float)
    return float(np.sum(tail * tail * w))


def precompact_witness(S, eps: float, spec: WeightedNormSpec):
    """Certificate data for relative compactness of a finite set S.

    Returns (bound, n0): the max norm over S and the least index n0 with
    sum_{i >= n0} |x_i|^p rho(i) < eps for every member.  Such an n0 always
    exists because supports are finite.
    """
    if eps <= 0.0:
        raise UsageError("eps must be positive")
    members = [np.asarray(x, dtype=float).reshape(-1) for x in S]
    if not members:
        raise UsageError("S must be nonempty")
    bound = max(weighted_norm(x, spec) for x in members)
    n0 = 1
    for x in members:
        if x.size == 0:
            continue
        w = _rho_prefix(spec.rho, x.size)
        terms = np.abs(x) ** spec.p * w
        # suffix[j] = sum over sites >= j+1
        suffix = np.concatenate([np.cumsum(terms[::-1])[::-1], [0.0]])
        k = 0
        while suffix[k] >= eps:
            k += 1
        n0 = max(n0, k + 1)
    return bound, n0
