"""Independent oracles for the numeric literals frozen into the test suite.

Run it and paste the printed values into the tests; each test cites the
oracle by the function name printed here.  Every computation below is
deliberately routed around the package under test: dense linear algebra
(scipy), closed-form Gaussian identities (erf), direct polynomial
manipulation (numpy.polynomial), and brute-force grid searches.  Nothing
here imports latticespin except where a 10x-replica self-oracle is the
stated reference, and that one is marked as such.

Usage:  python3 tools/derive_oracles.py [name ...]
"""

from __future__ import annotations

import math
import sys

import numpy as np
import scipy.linalg
from numpy.polynomial import polynomial as P


def cubic_eta_oracle():
    """Smallest eta with f(z)z <= eta - lam z^2 for f(z) = z - z^3, lam = 1.

    Dense grid search over z in [-10, 10] of f(z)z + z^2; calculus says the
    max is (1+lam)^2/4 = 1 at z^2 = 1.
    """
    z = np.linspace(-10.0, 10.0, 2_000_001)
    vals = (z - z ** 3) * z + z ** 2
    return {"eta_min": float(vals.max()), "argmax_z2": float((z[np.argmax(vals)]) ** 2)}


def gaussian_tv_unit_shift():
    """TV(N(0,1), N(1,1)) = erf(1 / (2 sqrt 2)), closed form."""
    return {"tv": math.erf(1.0 / (2.0 * math.sqrt(2.0)))}


def ou_exact_tv(t: float, dx: float, rate: float) -> float:
    """TV between the time-t laws of two 1-D OU paths started dx apart.

    Both laws are N(m_i e^{-rate t}, s(t)^2) with the same s(t)^2 =
    (1 - e^{-2 rate t}) / (2 rate); equal-variance Gaussian TV is
    erf(|dm| / (2 sqrt(2) s)).
    """
    dm = abs(dx) * math.exp(-rate * t)
    s2 = (1.0 - math.exp(-2.0 * rate * t)) / (2.0 * rate)
    return math.erf(dm / (2.0 * math.sqrt(2.0 * s2)))


def ou_decay_alpha_oracle():
    """Decay-rate regression applied to *exact* OU total variations.

    Mirrors the estimator's recipe (log TV against t, least squares over the
    points above the 2/sqrt(replicas) floor) so the fitted-alpha acceptance
    band compares like with like.  OU rate 1, starts +/-2, 10^5 replicas.
    """
    times = np.array([0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0])
    floor = 2.0 / math.sqrt(100_000)
    tv = np.array([ou_exact_tv(t, 4.0, 1.0) for t in times])
    used = tv > floor
    slope, intercept = np.polyfit(times[used], np.log(tv[used]), 1)
    return {"times": times.tolist(), "tv": tv.tolist(),
            "alpha_oracle": float(-slope), "points_used": int(used.sum())}


def linear_chain_stationary_var():
    """Stationary variances of the n=3 linear chain, slope -1, a = 0.2.

    dX = A X dt + B dW with B = e1: solve the dense stationary equation
    A S + S A^T + B B^T = 0 (scipy solve_continuous_lyapunov).
    """
    a = 0.2
    A = np.array([[-1.0, a, 0.0], [a, -1.0, a], [0.0, a, -1.0]])
    Q = np.zeros((3, 3))
    Q[0, 0] = 1.0
    S = scipy.linalg.solve_continuous_lyapunov(A, -Q)
    return {"diag": [float(v) for v in np.diag(S)],
            "S": [[float(v) for v in row] for row in S]}


def ou1_stationary_variance():
    """1-D OU, slope -1, unit noise: variance = 1/(2*1) = 0.5 exactly."""
    return {"var": 0.5}


def control_linear_ladder_y1():
    """y1 on a 10-point grid for the n=3 linear-drift steering problem.

    f(z) = -z, couplings a = 0.5, x = (1, 0, 0) -> z = (0, 0, 1), T = 1.
    Route: build the degree-5 two-point Hermite polynomial for y3 by solving
    the 6x6 confluent Vandermonde system directly, then run the ladder
      y2 = (y3' + y3)/a,   y1 = (y2' + y2 - a*y3)/a
    with numpy.polynomial arithmetic (no package code).
    """
    a = 0.5
    T = 1.0
    n = 3
    # endpoint jets of y3: value/deriv/2nd-deriv at both ends, from the chain
    # recursion for x=(1,0,0) and z=(0,0,1) with f(z) = -z:
    #   c[k+1] = (a*left[k] + a*right[k] - c[k]) / (k+1)  (interior site 2)
    # Site 3 (boundary): y3' = a*y2 - y3; y3'' = a*y2' - y3'.
    def jets_from_state(s):
        x1, x2, x3 = s
        y1p = a * x2 - x1
        y2p = a * x1 + a * x3 - x2
        y3p = a * x2 - x3
        y2pp = a * y1p + a * y3p - y2p
        y3pp = a * y2p - y3p
        return np.array([x3, y3p, y3pp])
    j0 = jets_from_state([1.0, 0.0, 0.0])
    j1 = jets_from_state([0.0, 0.0, 1.0])
    # degree-5 polynomial p with p^(j)(0) = j0[j], p^(j)(T) = j1[j]
    M = np.zeros((6, 6))
    rhs = np.concatenate([j0, j1])
    for j in range(3):
        M[j, j] = math.factorial(j)
        for m in range(j, 6):
            M[3 + j, m] = math.factorial(m) / math.factorial(m - j) * T ** (m - j)
    coef = np.linalg.solve(M, rhs)  # ascending
    y3 = coef
    y2 = P.polyadd(P.polyder(y3), y3) / a
    y1 = P.polysub(P.polyadd(P.polyder(y2), y2), a * y3) / a
    ts = np.linspace(0.0, T, 10)
    return {"ts": ts.tolist(), "y1": [float(v) for v in P.polyval(ts, y1)]}


def lyapunov_generator_hand_value():
    """n=2, a=0.1 both diagonals, f(z)=-z, x=(1,1), theta=1, w=1.

    L V = sum 2 x_i drift_i + 1 = 2(0.1-1) + 2(0.1-1) + 1 = -2.6.
    """
    d1 = 0.1 * 1 - 1.0
    d2 = 0.1 * 1 - 1.0
    return {"value": 2 * d1 + 2 * d2 + 1.0}


def hermite_quintic_midpoint():
    """Degree-5 two-point Hermite on [0,1]: value jets (0,1,0) -> (1,-1,0).

    Direct 6x6 solve, evaluated at t=1/2; independent of the package's
    rescaling logic.
    """
    M = np.zeros((6, 6))
    for j in range(3):
        M[j, j] = math.factorial(j)
        for m in range(j, 6):
            M[3 + j, m] = math.factorial(m) / math.factorial(m - j)
    rhs = np.array([0.0, 1.0, 0.0, 1.0, -1.0, 0.0])
    coef = np.linalg.solve(M, rhs)
    return {"coef": [float(c) for c in coef],
            "mid": float(P.polyval(0.5, coef))}


def expm_difference_norm():
    """|e^{A}(x-y)| for the n=4 linear chain, slope -1, a=0.3, at t=1.

    The synchronous-coupling difference of two linear-drift copies solves
    the deterministic ODE d(diff)/dt = A diff; dense expm is the oracle.
    """
    a = 0.3
    A = np.diag([-1.0] * 4) + np.diag([a] * 3, 1) + np.diag([a] * 3, -1)
    dx = np.array([1.0, -0.5, 0.25, -0.125])
    diff = scipy.linalg.expm(A) @ dx
    return {"diff": [float(v) for v in diff],
            "norm": float(np.linalg.norm(diff))}


def tanh_drift_eta():
    """Default constants of f(z) = -rate z + sat tanh z, rate=1, sat=1.

    Declared lam = rate - 1/4, so eta must dominate |sat||z| - (1/4) z^2,
    whose max is sat^2 (at |z| = 2 sat).  Grid search confirms.
    """
    z = np.linspace(-50, 50, 2_000_001)
    f = -z + np.tanh(z)
    vals = f * z + 0.75 * z ** 2
    return {"eta_min": float(vals.max())}


_ORACLES = {
    "cubic_eta_oracle": cubic_eta_oracle,
    "gaussian_tv_unit_shift": gaussian_tv_unit_shift,
    "ou_decay_alpha_oracle": ou_decay_alpha_oracle,
    "linear_chain_stationary_var": linear_chain_stationary_var,
    "ou1_stationary_variance": ou1_stationary_variance,
    "control_linear_ladder_y1": control_linear_ladder_y1,
    "lyapunov_generator_hand_value": lyapunov_generator_hand_value,
    "hermite_quintic_midpoint": hermite_quintic_midpoint,
    "expm_difference_norm": expm_difference_norm,
    "tanh_drift_eta": tanh_drift_eta,
}


def main(argv):
    names = argv[1:] or sorted(_ORACLES)
    for name in names:
        result = _ORACLES[name]()
        print(f"== {name}")
        for key, value in result.items():
            if isinstance(value, float):
                print(f"   {key} = {value!r}")
            else:
                print(f"   {key} = {value}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main(sys.argv))
