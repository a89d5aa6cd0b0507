"""Jet arithmetic: composition, polynomial derivative tables, evaluation."""

import math

import numpy as np
import numpy.polynomial.polynomial as P
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from latticespin._series import (
    compose_jet,
    jet_add,
    jet_scale,
    poly_derivatives,
    poly_jet,
)


def test_compose_with_identity_returns_y_jet():
    y = [2.0, -1.5, 3.0, 0.25]
    # f(u) = u has jet [y(0), 1, 0, 0] at the base point.
    f = [y[0], 1.0, 0.0, 0.0]
    assert compose_jet(f, y) == pytest.approx(y, abs=1e-14)


def test_compose_square_second_derivative():
    # f(u) = u^2: (f∘y)'' = 2(y'^2 + y y'').  Hand expansion.
    y0, y1, y2 = 1.7, -0.3, 2.2
    f = [y0 ** 2, 2 * y0, 2.0]
    out = compose_jet(f, [y0, y1, y2])
    assert out[0] == pytest.approx(y0 ** 2)
    assert out[1] == pytest.approx(2 * y0 * y1)
    assert out[2] == pytest.approx(2 * (y1 ** 2 + y0 * y2))


def test_compose_exp_matches_closed_form():
    # f = exp, y(t) = a + b t + c t^2 at t=0: derivatives of exp(y(t)) are
    # computable by differentiating g = exp(y): g' = y' g, g'' = (y'' + y'^2) g,
    # g''' = (y''' + 3 y' y'' + y'^3) g.
    a, b, c = 0.4, -1.1, 0.7
    y = [a, b, 2 * c, 0.0]
    g0 = math.exp(a)
    f = [g0, g0, g0, g0]
    out = compose_jet(f, y)
    expect = [
        g0,
        b * g0,
        (2 * c + b ** 2) * g0,
        (0.0 + 3 * b * 2 * c + b ** 3) * g0,
    ]
    assert out == pytest.approx(expect, rel=1e-13)


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.floats(-2, 2), min_size=2, max_size=5),
    st.lists(st.floats(-2, 2), min_size=2, max_size=5),
    st.floats(-1.5, 1.5),
)
def test_compose_matches_direct_polynomial_composition(pc, yc, t):
    """Jet of p∘y computed two ways: compose_jet vs composing coefficients."""
    order = 3
    ptab = poly_derivatives(pc, order)
    ytab = poly_derivatives(yc, order)
    y_jet = poly_jet(ytab, t, order)
    f_jet = poly_jet(ptab, float(y_jet[0]), order)
    via_jets = compose_jet(f_jet, y_jet)
    # Direct route: coefficients of p(y(t)) as a polynomial in t.
    comp_coef = [0.0]
    for k in reversed(range(len(pc))):
        comp_coef = P.polyadd(P.polymul(comp_coef, yc), [pc[k]])
    ctab = poly_derivatives(list(comp_coef), order)
    direct = poly_jet(ctab, t, order)
    scale = max(1.0, max(abs(v) for v in direct))
    for u, v in zip(via_jets, direct):
        assert abs(u - v) <= 1e-9 * scale


def test_compose_rejects_short_f_jet():
    with pytest.raises(ValueError):
        compose_jet([1.0, 2.0], [0.0, 1.0, 0.0])


def test_compose_order_zero():
    assert compose_jet([5.0], [3.0]) == [5.0]


def test_jet_add_and_scale():
    a = [1.0, 2.0, 3.0]
    b = [10.0, 20.0, 30.0]
    assert jet_add(a, b, 0.5) == [6.0, 12.0, 18.0]
    assert jet_scale(a, -2.0) == [-2.0, -4.0, -6.0]


def test_poly_derivatives_cubic():
    # p(t) = t^3
    tab = poly_derivatives([0.0, 0.0, 0.0, 1.0], 4)
    assert tab[0] == [0.0, 0.0, 0.0, 1.0]
    assert tab[1] == [0.0, 0.0, 3.0]
    assert tab[2] == [0.0, 6.0]
    assert tab[3] == [6.0]
    assert tab[4] == [0.0]


def test_poly_jet_cubic_at_two():
    tab = poly_derivatives([0.0, 0.0, 0.0, 1.0], 3)
    assert poly_jet(tab, 2.0, 3) == pytest.approx([8.0, 12.0, 12.0, 6.0])


def test_poly_jet_requires_enough_derivatives():
    tab = poly_derivatives([1.0, 1.0], 1)
    with pytest.raises(ValueError):
        poly_jet(tab, 0.0, 2)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=1, max_size=6), st.floats(-2, 2))
def test_poly_jet_matches_numpy_derivatives(coef, t):
    order = len(coef)  # one past the degree, exercising the [0.0] tail
    tab = poly_derivatives(coef, order)
    jet = poly_jet(tab, t, order)
    c = np.asarray(coef, dtype=float)
    for k in range(order + 1):
        expect = P.polyval(t, P.polyder(c, k)) if k <= len(coef) else 0.0
        assert abs(jet[k] - float(expect)) <= 1e-9 * max(1.0, abs(float(expect)))
