"""Truncated Taylor-series (jet) arithmetic shared by the bracket and steering code.

A *jet* of order ``m`` at a point is the list ``[g(t), g'(t), ..., g^(m)(t)]``.
Everything here works on plain Python lists of floats; sizes are tiny (orders
rarely exceed the chain length), so clarity beats vectorization.
"""

from __future__ import annotations

import math

__all__ = ["compose_jet", "jet_add", "jet_scale", "poly_derivatives", "poly_jet"]


def _taylor_from_jet(jet: list[float]) -> list[float]:
    return [d / math.factorial(k) for k, d in enumerate(jet)]


def _jet_from_taylor(coef: list[float]) -> list[float]:
    return [c * math.factorial(k) for k, c in enumerate(coef)]


def _series_mul(a: list[float], b: list[float], order: int) -> list[float]:
    out = [0.0] * (order + 1)
    for i, ai in enumerate(a):
        if i > order or ai == 0.0:
            continue
        for j, bj in enumerate(b):
            if i + j > order:
                break
            out[i + j] += ai * bj
    return out


def compose_jet(f_jet: list[float], y_jet: list[float]) -> list[float]:
    """Jet of the composition ``t -> f(y(t))``.

    ``y_jet`` holds derivatives of ``y`` at some time up to order ``m``;
    ``f_jet`` holds derivatives of ``f`` at the point ``y_jet[0]``, and must
    reach order ``m`` as well.  Returns the derivatives of ``f ∘ y`` up to
    order ``m`` (classical Faà di Bruno, done as truncated power-series
    composition, which is less error-prone than the combinatorial sum).
    """
    m = len(y_jet) - 1
    if len(f_jet) < m + 1:
        raise ValueError(f"need f derivatives to order {m}, got order {len(f_jet) - 1}")
    if m == 0:
        return [f_jet[0]]
    # Series of y(t) - y(0): no constant term, so powers gain degree each time.
    delta = _taylor_from_jet(y_jet)
    delta[0] = 0.0
    ftay = _taylor_from_jet(f_jet[: m + 1])
    # Horner evaluation of sum_j ftay[j] * delta^j, truncated at degree m.
    acc = [ftay[m]] + [0.0] * m
    for j in range(m - 1, -1, -1):
        acc = _series_mul(acc, delta, m)
        acc[0] += ftay[j]
    return _jet_from_taylor(acc)


def jet_add(a: list[float], b: list[float], scale: float = 1.0) -> list[float]:
    """Componentwise ``a + scale*b`` on jets of equal length."""
    return [x + scale * y for x, y in zip(a, b)]


def jet_scale(a: list[float], scale: float) -> list[float]:
    return [scale * x for x in a]


def poly_derivatives(coef: list[float], max_order: int) -> list[list[float]]:
    """Coefficient lists (ascending powers) of ``p, p', ..., p^(max_order)``."""
    out = [list(coef)]
    for _ in range(max_order):
        prev = out[-1]
        out.append([k * prev[k] for k in range(1, len(prev))] or [0.0])
    return out


def poly_jet(deriv_coefs: list[list[float]], t: float, order: int) -> list[float]:
    """Evaluate a polynomial's jet at ``t`` from precomputed derivative coefficients."""
    if order >= len(deriv_coefs):
        raise ValueError("polynomial derivative table too short for requested order")
    jet = []
    for k in range(order + 1):
        c = deriv_coefs[k]
        acc = 0.0
        for a in reversed(c):
            acc = acc * t + a
        jet.append(acc)
    return jet
