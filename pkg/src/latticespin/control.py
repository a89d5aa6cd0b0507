"""Constructive steering of the noise-free chain through its coupling ladder.

Because every site talks only to its neighbours and the sub-diagonal
couplings never vanish, prescribing the top coordinate y_n as a smooth
function of time determines the whole trajectory: each y_{i-1} is solved
from site i's own equation, and whatever is left over at site 1 becomes the
control.  Concretely:

    y_{i-1}(t) = (y_i'(t) - a_{i,i+1} y_{i+1}(t) - f(y_i(t))) / a_{i,i-1}
    u(t)       = y_1'(t) - a_{1,2} y_2(t) - f(y_1(t))

The construction is exact: if y_n matches the jets the chain itself forces
at t=0 (from x) and t=T (from z), evaluating the ladder at the endpoints
reproduces x and z identically, before any numerical integration.  The
interpolant for y_n is a two-point Hermite polynomial — the mollified
construction in the source analysis only needs existence of a C-infinity
matcher, and a polynomial matching the same jets is simpler and exactly
differentiable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.interpolate import CubicSpline

from ._errors import BlowupError, UsageError
from ._series import compose_jet, poly_derivatives, poly_jet
from .model import SpinChainModel, coupling_arrays, drift_vector

__all__ = [
    "EndpointJets",
    "SmoothInterpolant",
    "ControlPlan",
    "endpoint_jets",
    "hermite_interpolant",
    "back_substitute",
    "verify_steering",
]


def _f_jet(model: SpinChainModel, z: float, order: int) -> list:
    """Derivatives [f, f', ..., f^(order)] at z, or a usage error when the
    drift cannot supply that many."""
    try:
        jet = model.drift.jet(0.0, float(z), order)
    except Exception as exc:  # noqa: BLE001 - normalize arbitrary jet failures
        raise UsageError(
            f"drift jet of order {order} required for steering: {exc}") from exc
    jet = list(jet)
    if len(jet) < order + 1 or not all(math.isfinite(v) for v in jet):
        raise UsageError(f"drift jet of order {order} required for steering")
    return jet


@dataclass(frozen=True)
class EndpointJets:
    """Derivatives of the top coordinate forced by the chain at both ends:
    y_n^(j)(0) from the start state and y_n^(j)(T) from the target, for
    j = 0..n-1."""

    at_start: np.ndarray
    at_end: np.ndarray
    horizon: float

    def __post_init__(self):
        if self.at_start.shape != self.at_end.shape or self.at_start.ndim != 1:
            raise UsageError("endpoint jets must be two equal-length vectors")

    @property
    def order(self) -> int:
        return self.at_start.size - 1


def _chain_taylor(model: SpinChainModel, state: np.ndarray) -> list:
    """Taylor coefficients of every coordinate of the uncontrolled flow
    through `state`, site i carried to order i-1.

    Differentiating y_i' = a_{i,i-1} y_{i-1} + a_{i,i+1} y_{i+1} + f(y_i)
    walks one site down per order, so the order-(i-1) coefficient of y_i
    reaches site 1 only through its plain value — the control never enters.
    """
    n = model.volume
    sub, sup = coupling_arrays(model, 0.0)
    coeffs = [[float(state[i])] for i in range(n)]  # coeffs[i] ~ site i+1
    for k in range(n - 1):
        # sites with budget >= k+1, i.e. 1-based index >= k+2
        f_rows = {}
        for i in range(k + 1, n):
            # Taylor coefficient k of f(y_{i+1}(t)) needs the site's jet to
            # order k; convert coefficients -> derivatives -> compose.
            yjet = [coeffs[i][m] * math.factorial(m) for m in range(k + 1)]
            fj = compose_jet(_f_jet(model, yjet[0], k), yjet)
            f_rows[i] = fj[k] / math.factorial(k)
        for i in range(n - 1, k, -1):
            rhs = sub[i] * coeffs[i - 1][k] + f_rows[i]
            if i + 1 < n:
                rhs += sup[i] * coeffs[i + 1][k]
            coeffs[i].append(rhs / (k + 1.0))
    return coeffs


def endpoint_jets(model: SpinChainModel, x, z, T: float) -> EndpointJets:
    """Jets of y_n at t=0 (through x) and t=T (through z), orders 0..n-1.

    Both ends use the same forward recursion on the uncontrolled equations;
    the drift must supply derivatives to order n-2.
    """
    if model.period is not None:
        raise UsageError("steering is defined for time-homogeneous models")
    if not (T > 0.0):
        raise UsageError("steering horizon T must be positive")
    n = model.volume
    x = np.asarray(x, dtype=float).reshape(-1)
    z = np.asarray(z, dtype=float).reshape(-1)
    if x.size != n or z.size != n:
        raise UsageError(f"states must have {n} components")
    c0 = _chain_taylor(model, x)[n - 1]
    cT = _chain_taylor(model, z)[n - 1]
    d0 = np.array([c * math.factorial(j) for j, c in enumerate(c0)])
    dT = np.array([c * math.factorial(j) for j, c in enumerate(cT)])
    return EndpointJets(at_start=d0, at_end=dT, horizon=float(T))


@dataclass(frozen=True)
class SmoothInterpolant:
    """Degree-(2n-1) polynomial whose jets at 0 and T match the endpoint
    data (two-point Hermite interpolation); coefficients ascending."""

    coefficients: tuple
    horizon: float

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    def derivative_table(self, max_order: int) -> list:
        return poly_derivatives(list(self.coefficients), max_order)

    def jet(self, t: float, order: int) -> list:
        return poly_jet(self.derivative_table(order), float(t), order)

    def value(self, t: float) -> float:
        return self.jet(t, 0)[0]


def _hermite_matrix(T: float, n: int) -> np.ndarray:
    A = np.zeros((2 * n, 2 * n))
    for j in range(n):
        A[j, j] = math.factorial(j)  # p^(j)(0)
        for m in range(j, 2 * n):
            A[n + j, m] = (math.factorial(m) / math.factorial(m - j)) * T ** (m - j)
    return A


def _jets_reproduced(poly: SmoothInterpolant, jets: EndpointJets, tol: float) -> bool:
    n = jets.order + 1
    got0 = np.array(poly.jet(0.0, n - 1))
    gotT = np.array(poly.jet(jets.horizon, n - 1))
    scale = np.maximum(1.0, np.maximum(np.abs(jets.at_start), np.abs(jets.at_end)))
    err = max(np.max(np.abs(got0 - jets.at_start) / scale),
              np.max(np.abs(gotT - jets.at_end) / scale))
    return err <= tol


def hermite_interpolant(jets: EndpointJets, T: Optional[float] = None) -> SmoothInterpolant:
    """The unique degree-(2n-1) polynomial matching all 2n jet constraints.

    Solved as a confluent-Vandermonde linear system; if its condition number
    exceeds 1e12 (long or very short horizons), the system is re-solved in
    the rescaled time t/T — exact in the same polynomial space — and only a
    second conditioning failure is fatal.
    """
    if T is None:
        T = jets.horizon
    if not (T > 0.0):
        raise UsageError("interpolation horizon must be positive")
    n = jets.order + 1
    rhs = np.concatenate([jets.at_start, jets.at_end])

    A = _hermite_matrix(T, n)
    if np.linalg.cond(A) <= 1e12:
        coefs = np.linalg.solve(A, rhs)
        poly = SmoothInterpolant(tuple(coefs), float(T))
        if _jets_reproduced(poly, jets, 1e-10):
            return poly
    # rescale to the unit interval: q(s) = p(T s), q^(j) picks up T^j
    scale = T ** np.arange(n)
    rhs_unit = np.concatenate([jets.at_start * scale, jets.at_end * scale])
    B = _hermite_matrix(1.0, n)
    if np.linalg.cond(B) > 1e12:
        raise UsageError(
            "Hermite system is ill-conditioned even after time rescaling; "
            "reduce the jet order or change the horizon")
    q = np.linalg.solve(B, rhs_unit)
    coefs = q / T ** np.arange(2 * n)
    poly = SmoothInterpolant(tuple(coefs), float(T))
    if not _jets_reproduced(poly, jets, 1e-10):
        raise UsageError("interpolant failed to reproduce the endpoint jets")
    return poly


@dataclass(frozen=True)
class ControlPlan:
    """The full steering construction sampled on a time grid.

    `states[k]` holds (y_1..y_n)(grid[k]), `derivs` their first derivatives,
    and `u` the site-1 control; all three come from exact jet arithmetic
    through the interpolant, so the chain identities hold on the grid to
    rounding error (see `residual`)."""

    interpolant: SmoothInterpolant
    grid: np.ndarray
    u: np.ndarray
    states: np.ndarray
    derivs: np.ndarray
    horizon: float

    def residual(self, model: SpinChainModel) -> float:
        """Max over the grid and sites of the defect in
        a_{i,i-1} y_{i-1} = y_i' - a_{i,i+1} y_{i+1} - f(y_i)."""
        sub, sup = coupling_arrays(model, 0.0)
        n = model.volume
        worst = 0.0
        f_of = np.empty_like(self.states)
        for j in range(n):
            f_of[:, j] = [model.drift.eval(0.0, v) for v in self.states[:, j]]
        for i in range(1, n):  # 0-based site i+1 has a sub-neighbour
            lhs = sub[i] * self.states[:, i - 1]
            rhs = self.derivs[:, i] - f_of[:, i]
            if i + 1 < n:
                rhs = rhs - sup[i] * self.states[:, i + 1]
            worst = max(worst, float(np.max(np.abs(lhs - rhs))))
        return worst

    def endpoint_defect(self, x, z) -> float:
        """Max-norm defect of the construction at the two endpoints (the
        pre-integration steering error)."""
        x = np.asarray(x, dtype=float)
        z = np.asarray(z, dtype=float)
        return float(max(np.max(np.abs(self.states[0] - x)),
                         np.max(np.abs(self.states[-1] - z))))


def back_substitute(model: SpinChainModel, interpolant: SmoothInterpolant,
                    grid=None) -> ControlPlan:
    """Solve the ladder downwards from y_n = interpolant and sample u.

    Site i's trajectory is evaluated as a jet of order i at every grid
    point (enough that y_1 still carries one derivative for the control);
    all jets flow through exact polynomial derivatives of the interpolant
    and the drift's own jet callable.
    """
    if model.period is not None:
        raise UsageError("steering is defined for time-homogeneous models")
    n = model.volume
    T = interpolant.horizon
    if grid is None:
        grid = np.linspace(0.0, T, 2048)
    grid = np.asarray(grid, dtype=float).reshape(-1)
    if grid.size < 2 or np.any(np.diff(grid) <= 0):
        raise UsageError("grid must be increasing with at least two points")
    span_tol = 1e-12 * max(1.0, T)
    if abs(grid[0]) > span_tol or abs(grid[-1] - T) > span_tol:
        raise UsageError("grid must span [0, T] exactly")
    sub, sup = coupling_arrays(model, 0.0)
    if n >= 2 and np.any(sub[1:] == 0.0):
        dead = int(np.argmin(np.abs(sub[1:])) + 2)
        raise UsageError(
            f"a_{{{dead},{dead - 1}}} = 0: the steering ladder requires every "
            "sub-diagonal coupling to be nonzero")
    table = interpolant.derivative_table(n)
    m = grid.size
    states = np.empty((m, n))
    derivs = np.empty((m, n))
    u = np.empty(m)
    for gi, t in enumerate(grid):
        jets = [None] * n
        jets[n - 1] = poly_jet(table, float(t), n)
        for i in range(n - 1, 0, -1):  # derive site i (1-based) from i+1
            up = jets[i]
            order = len(up) - 2  # one derivative is consumed
            dup = up[1:order + 2]  # derivative jet of y, shifted
            fj = compose_jet(_f_jet(model, up[0], order), up[:order + 1])
            low = [dup[k] - fj[k] for k in range(order + 1)]
            if i + 1 < n:
                above = jets[i + 1]
                low = [low[k] - sup[i] * above[k] for k in range(order + 1)]
            jets[i - 1] = [v / sub[i] for v in low]
        states[gi] = [jets[i][0] for i in range(n)]
        derivs[gi] = [jets[i][1] for i in range(n)]
        u[gi] = jets[0][1] - model.drift.eval(0.0, jets[0][0])
        if n >= 2:
            u[gi] -= sup[0] * jets[1][0]
    return ControlPlan(interpolant=interpolant, grid=grid, u=u, states=states,
                       derivs=derivs, horizon=T)


def verify_steering(model: SpinChainModel, x, z, T: float, plan: ControlPlan,
                    rk_step: float = 1e-4) -> float:
    """Integrate the controlled noise-free chain and return |y(T) - z|.

    Classical 4th-order one-step integration; the control is a cubic spline
    through the plan's samples, evaluated at the stage times.  The returned
    error is the Euclidean endpoint distance, the quantity the approximate-
    controllability statement bounds.
    """
    if not (rk_step > 0.0):
        raise UsageError("rk_step must be positive")
    if abs(plan.horizon - T) > 1e-12 * max(1.0, T):
        raise UsageError("plan was built for a different horizon")
    n = model.volume
    x = np.asarray(x, dtype=float).reshape(-1)
    z = np.asarray(z, dtype=float).reshape(-1)
    if x.size != n or z.size != n:
        raise UsageError(f"states must have {n} components")
    steps = max(1, int(round(T / rk_step)))
    h = T / steps
    spline = CubicSpline(plan.grid, plan.u)
    t_nodes = h * np.arange(steps)
    u0 = spline(t_nodes)
    um = spline(t_nodes + 0.5 * h)
    u1 = spline(t_nodes + h)
    e1 = np.zeros(n)
    e1[0] = 1.0
    y = x.copy()
    for k in range(steps):
        k1 = drift_vector(model, 0.0, y) + u0[k] * e1
        k2 = drift_vector(model, 0.0, y + 0.5 * h * k1) + um[k] * e1
        k3 = drift_vector(model, 0.0, y + 0.5 * h * k2) + um[k] * e1
        k4 = drift_vector(model, 0.0, y + h * k3) + u1[k] * e1
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not (float(np.sum(y * y)) <= 1.0e24):
            raise BlowupError(f"controlled trajectory blew up near t={k * h:.3g}")
    return float(np.linalg.norm(y - z))
