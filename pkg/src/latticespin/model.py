"""Spin-chain model family: local drift, nearest-neighbour coupling, weights.

The model is a chain on sites 1..n.  Site 1 carries the only Brownian forcing;
every site feels the same scalar interaction ``f`` plus nearest-neighbour
coupling ``a_{i,i-1} x_{i-1} + a_{i,i+1} x_{i+1}``, with the convention
``a_{1,0} = 0`` and the super-diagonal term dropped at the right boundary.

Arrays are 0-indexed: array slot ``j`` is site ``j+1``.  Coupling callables
take the 1-based site index so they read like the math.

``validate_assumptions`` samples every structural assumption the theory
imposes (weak dissipativity, growth, coupling bounds, weight summability,
...) and returns a per-condition report instead of raising.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from ._errors import ModelEvaluationError, UsageError

__all__ = [
    "LocalDrift",
    "CouplingCoefficients",
    "SpinChainModel",
    "WeightFamily",
    "SamplingGrid",
    "ConditionRecord",
    "AssumptionReport",
    "linear_drift",
    "cubic_drift",
    "tanh_drift",
    "constant_coupling",
    "modulated_coupling",
    "table_coupling",
    "exponential_weights",
    "polynomial_weights",
    "table_weights",
    "drift_vector",
    "drift_values",
    "coupling_arrays",
    "validate_assumptions",
    "summability_certificate",
]


# ---------------------------------------------------------------------------
# Types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LocalDrift:
    """The scalar interaction f(t, z), shared by all sites.

    ``lam`` is the weak-dissipativity rate (written λ in the docs; the name
    ``lambda`` is reserved in Python).  Declared constants promise

        f(t, z) * z <= eta - lam * z**2          (weak dissipativity)
        |f(t, z)| <= eta0 * (1 + |z|**theta)     (growth)

    which ``validate_assumptions`` checks by dense sampling.  ``jet(t, z, k)``
    returns ``[f, f', ..., f^(k)]`` in the z variable.  ``kind``/``params``
    tag the built-in families so the compiled stepper can inline them; custom
    drifts leave them unset and take the generic (slower) path.
    """

    eval: Callable[[float, float], float]
    jet: Callable[[float, float, int], list]
    eta: float
    lam: float
    theta: float = 1.0
    eta0: float = 1.0
    period: Optional[float] = None
    kind: Optional[str] = None
    params: tuple = ()

    def __post_init__(self):
        if not (self.eta > 0.0):
            raise UsageError("eta must be positive")
        if not (self.theta >= 1.0):
            raise UsageError("theta must be >= 1")
        if self.eta0 < 0.0:
            raise UsageError("eta0 must be nonnegative")
        if self.period is not None and not (self.period > 0.0):
            raise UsageError("period must be positive when present")


@dataclass(frozen=True)
class CouplingCoefficients:
    """Nearest-neighbour coupling a_{i,i-1}(t), a_{i,i+1}(t).

    ``sub(i, t)`` is a_{i,i-1} for sites i >= 2; ``sup(i, t)`` is a_{i,i+1}
    for i >= 1 (the field is named ``sup`` because ``super`` is taken in
    Python).  ``bound`` is the declared uniform bound M.  a_{1,0} is
    identically zero by convention and is never evaluated.
    """

    sub: Callable[[int, float], float]
    sup: Callable[[int, float], float]
    bound: float
    period: Optional[float] = None
    kind: Optional[str] = None
    params: tuple = ()

    def __post_init__(self):
        if not (self.bound > 0.0):
            raise UsageError("coupling bound M must be positive")
        if self.period is not None and not (self.period > 0.0):
            raise UsageError("period must be positive when present")


@dataclass(frozen=True)
class SpinChainModel:
    """A truncated chain of ``volume`` sites with noise on site 1 only."""

    drift: LocalDrift
    coupling: CouplingCoefficients
    volume: int
    noise_sites: frozenset = frozenset({1})

    def __post_init__(self):
        if int(self.volume) != self.volume or self.volume < 1:
            raise UsageError("volume must be a positive integer")
        object.__setattr__(self, "volume", int(self.volume))
        if set(self.noise_sites) != {1}:
            raise UsageError("noise placement is fixed to site 1")
        object.__setattr__(self, "noise_sites", frozenset({1}))
        dp, cp = self.drift.period, self.coupling.period
        if dp is not None and cp is not None and not math.isclose(dp, cp, rel_tol=1e-12):
            raise UsageError(
                "drift and coupling declare different periods; give them a common one"
            )

    @property
    def period(self) -> Optional[float]:
        """Common time period, or None when the model is autonomous."""
        return self.drift.period if self.drift.period is not None else self.coupling.period

    def with_volume(self, n: int) -> "SpinChainModel":
        """Same local data on a different truncation length."""
        return SpinChainModel(self.drift, self.coupling, n, self.noise_sites)


@dataclass(frozen=True)
class WeightFamily:
    """Spatial weight rho (and optional auxiliary weight v) with declared constants.

    ``kind``/``kind_params`` certify summability analytically:
      - ("exponential", (kappa,)):      rho(i) = exp(-kappa*i)
      - ("polynomial", (power, kappa)): rho(i) = 1/(1 + kappa*i**power)
      - ("table", (values,)):           finite table, numeric checks only
    ``ratio_params = (R, N)`` declares rho(g)/rho(j) <= N for |g-j| <= R;
    ``lower_params = (r, M1)`` declares rho(n) >= M1*exp(-r*n);
    ``sup_ratio_bound`` is M2 with rho(n)/min_{i<=n} rho(i) <= M2.
    """

    rho: Callable[[int], float]
    kind: str
    kind_params: tuple
    ratio_params: tuple
    lower_params: tuple
    sup_ratio_bound: float
    v: Optional[Callable[[int], float]] = None
    v_kind: Optional[str] = None
    v_kind_params: tuple = ()

    def __post_init__(self):
        if self.kind not in ("exponential", "polynomial", "table"):
            raise UsageError(f"unknown weight kind {self.kind!r}")
        if self.v is not None and self.v_kind not in ("exponential", "polynomial", "table"):
            raise UsageError("auxiliary weight v needs a kind tag for its certificates")


@dataclass(frozen=True)
class SamplingGrid:
    """Where ``validate_assumptions`` samples the assumptions."""

    z_lo: float = -10.0
    z_hi: float = 10.0
    z_count: int = 2001
    t_count: int = 16
    site_count: int = 64
    rel_tol: float = 1e-12


@dataclass(frozen=True)
class ConditionRecord:
    """One checked condition: id, verdict, worst sampled point, worst margin.

    ``margin`` is the worst violation seen (positive = the inequality broke
    there; <= 0 means it held everywhere with that much room).  The pass
    verdict applies the grid's relative tolerance, so a margin that is
    positive but relatively negligible still passes.
    """

    condition: str
    passed: bool
    witness: Optional[tuple]
    margin: float
    note: str = ""


@dataclass(frozen=True)
class AssumptionReport:
    records: tuple

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.records)

    def record(self, condition: str) -> ConditionRecord:
        for r in self.records:
            if r.condition == condition:
                return r
        raise KeyError(condition)

    def to_jsonable(self) -> dict:
        return {
            "passed": self.passed,
            "conditions": [
                {
                    "condition": r.condition,
                    "passed": r.passed,
                    "witness": None if r.witness is None else list(r.witness),
                    "margin": r.margin,
                    "note": r.note,
                }
                for r in self.records
            ],
        }


# ---------------------------------------------------------------------------
# Built-in drift families
# ---------------------------------------------------------------------------


def linear_drift(slope: float = -1.0, *, eta: float = 0.1, lam: Optional[float] = None,
                 eta0: Optional[float] = None) -> LocalDrift:
    """f(z) = slope * z.  Dissipative when slope < -1/2 (default lam = -slope)."""
    c1 = float(slope)
    if lam is None:
        lam = -c1
    if eta0 is None:
        eta0 = abs(c1)

    def f(t, z):
        return c1 * z

    def fjet(t, z, k):
        out = [c1 * z, c1] + [0.0] * max(0, k - 1)
        return out[: k + 1]

    return LocalDrift(eval=f, jet=fjet, eta=eta, lam=float(lam), theta=1.0,
                      eta0=float(eta0), kind="linear", params=(c1,))


def cubic_drift(c1: float = 1.0, c3: float = -1.0, *, eta: Optional[float] = None,
                lam: float = 1.0) -> LocalDrift:
    """f(z) = c1*z + c3*z^3 with c3 < 0 (double-well for c1 > 0).

    With lam declared, the sharp eta is max_u ((c1+lam)u + c3*u^2) over
    u = z^2 >= 0, i.e. (c1+lam)^2 / (4|c3|) when c1+lam > 0.
    """
    c1 = float(c1)
    c3 = float(c3)
    if c3 >= 0.0:
        raise UsageError("cubic drift needs c3 < 0 to be dissipative")
    if eta is None:
        s = c1 + lam
        eta = s * s / (4.0 * abs(c3)) if s > 0.0 else 1e-9
        eta = max(eta, 1e-9)

    def f(t, z):
        return c1 * z + c3 * z ** 3

    def fjet(t, z, k):
        out = [c1 * z + c3 * z ** 3, c1 + 3.0 * c3 * z * z, 6.0 * c3 * z, 6.0 * c3]
        out += [0.0] * max(0, k - 3)
        return out[: k + 1]

    return LocalDrift(eval=f, jet=fjet, eta=float(eta), lam=float(lam), theta=3.0,
                      eta0=abs(c1) + abs(c3), kind="cubic", params=(c1, c3))


def _tanh_deriv_polys(order: int) -> list:
    """Coefficients (ascending, in u = tanh z) of d^k/dz^k tanh, k = 0..order."""
    polys = [[0.0, 1.0]]  # tanh itself
    while len(polys) <= order:
        p = polys[-1]
        dp = [j * p[j] for j in range(1, len(p))] or [0.0]
        # multiply dp by (1 - u^2)
        out = [0.0] * (len(dp) + 2)
        for j, c in enumerate(dp):
            out[j] += c
            out[j + 2] -= c
        polys.append(out)
    return polys


def tanh_drift(rate: float = 1.0, sat: float = 1.0, *, eta: Optional[float] = None,
               lam: Optional[float] = None) -> LocalDrift:
    """f(z) = -rate*z + sat*tanh(z): linear decay with a saturating kick.

    Defaults declare lam = rate - 1/4 and eta = sat^2 (from maximizing
    |sat||z| - (rate-lam) z^2), which needs rate > 3/4 to leave lam > 1/2.
    """
    rate = float(rate)
    sat = float(sat)
    if lam is None:
        lam = rate - 0.25
    if eta is None:
        delta = rate - lam
        if delta <= 0.0:
            raise UsageError("tanh drift defaults need lam < rate")
        eta = sat * sat / (4.0 * delta)
        eta = max(eta, 1e-9)

    def f(t, z):
        return -rate * z + sat * np.tanh(z)

    polys_cache: dict = {}

    def fjet(t, z, k):
        polys = polys_cache.get(k)
        if polys is None:
            polys = _tanh_deriv_polys(k)
            polys_cache[k] = polys
        u = math.tanh(z)
        out = []
        for kk in range(k + 1):
            acc = 0.0
            for c in reversed(polys[kk]):
                acc = acc * u + c
            val = sat * acc
            if kk == 0:
                val += -rate * z
            elif kk == 1:
                val += -rate
            out.append(val)
        return out

    return LocalDrift(eval=f, jet=fjet, eta=float(eta), lam=float(lam), theta=1.0,
                      eta0=rate + abs(sat), kind="tanh", params=(-rate, sat))


# ---------------------------------------------------------------------------
# Built-in coupling families
# ---------------------------------------------------------------------------


def constant_coupling(a: float = 0.1, *, a_sub: Optional[float] = None,
                      a_sup: Optional[float] = None) -> CouplingCoefficients:
    """Time-independent, site-independent coupling (sub and super default to a)."""
    lo = float(a if a_sub is None else a_sub)
    hi = float(a if a_sup is None else a_sup)
    if lo == 0.0:
        raise UsageError("sub-diagonal coupling must never vanish")
    return CouplingCoefficients(
        sub=lambda i, t: lo,
        sup=lambda i, t: hi,
        bound=max(abs(lo), abs(hi)),
        kind="constant",
        params=(lo, hi),
    )


def modulated_coupling(base: float, depth: float, period: float,
                       phase: float = 0.0) -> CouplingCoefficients:
    """a(t) = base * (1 + depth * sin(2*pi*t/period + phase)) on both diagonals.

    Needs |depth| < 1 so the sub-diagonal never vanishes.
    """
    base = float(base)
    depth = float(depth)
    period = float(period)
    phase = float(phase)
    if not (abs(depth) < 1.0):
        raise UsageError("modulation depth must satisfy |depth| < 1")
    if base == 0.0:
        raise UsageError("base coupling must be nonzero")
    omega = 2.0 * math.pi / period

    def a(i, t):
        return base * (1.0 + depth * math.sin(omega * t + phase))

    return CouplingCoefficients(
        sub=a, sup=a,
        bound=abs(base) * (1.0 + abs(depth)),
        period=period,
        kind="sinusoidal",
        params=(base, depth, period, phase),
    )


def table_coupling(sub_values, sup_values) -> CouplingCoefficients:
    """Per-site constants: sub_values[0] is a_{2,1}, sup_values[0] is a_{1,2}."""
    lo = tuple(float(x) for x in sub_values)
    hi = tuple(float(x) for x in sup_values)
    if any(x == 0.0 for x in lo):
        raise UsageError("sub-diagonal coupling must never vanish")
    vals = [abs(x) for x in lo + hi]
    if not vals:
        raise UsageError("coupling tables must be nonempty")

    def sub(i, t):
        if i - 2 >= len(lo):
            raise UsageError(f"coupling table too short for site {i}")
        return lo[i - 2]

    def sup(i, t):
        if i - 1 >= len(hi):
            raise UsageError(f"coupling table too short for site {i}")
        return hi[i - 1]

    return CouplingCoefficients(sub=sub, sup=sup, bound=max(vals),
                                kind="table", params=(lo, hi))


# ---------------------------------------------------------------------------
# Built-in weight families
# ---------------------------------------------------------------------------


def _make_weight(kind: str, params: tuple) -> Callable[[int], float]:
    if kind == "exponential":
        (kappa,) = params
        return lambda i: math.exp(-kappa * i)
    if kind == "polynomial":
        power, kappa = params
        return lambda i: 1.0 / (1.0 + kappa * i ** power)
    if kind == "table":
        (values,) = params

        def rho(i):
            if not (1 <= i <= len(values)):
                raise UsageError(f"table weight has no entry for site {i}")
            return values[i - 1]

        return rho
    raise UsageError(f"unknown weight kind {kind!r}")


def exponential_weights(kappa: float, *, v_kappa: Optional[float] = None) -> WeightFamily:
    """rho(i) = exp(-kappa*i); optionally v(i) = exp(-v_kappa*i).

    Certified constants: ratio bound N = e^kappa at range R = 1; lower bound
    rho(n) = 1 * e^{-kappa*n} exactly; monotone decreasing so M2 = 1.
    """
    kappa = float(kappa)
    if kappa <= 0.0:
        raise UsageError("exponential weights need kappa > 0")
    fam = dict(
        rho=_make_weight("exponential", (kappa,)),
        kind="exponential",
        kind_params=(kappa,),
        ratio_params=(1, math.exp(kappa)),
        lower_params=(kappa, 1.0),
        sup_ratio_bound=1.0,
    )
    if v_kappa is not None:
        v_kappa = float(v_kappa)
        if v_kappa <= 0.0:
            raise UsageError("auxiliary weight needs v_kappa > 0")
        fam.update(v=_make_weight("exponential", (v_kappa,)),
                   v_kind="exponential", v_kind_params=(v_kappa,))
    return WeightFamily(**fam)


def polynomial_weights(power: float, kappa: float = 1.0, *,
                       v_kappa: Optional[float] = None) -> WeightFamily:
    """rho(i) = 1/(1 + kappa*i^power), power > 1 for summability.

    The exponential lower bound uses r = 1: e^{n}/(1+kappa*n^power) is
    increasing once n >= power, so M1 is the minimum over the initial stretch.
    """
    power = float(power)
    kappa = float(kappa)
    if power <= 1.0:
        raise UsageError("polynomial weights need power > 1 for summability")
    if kappa <= 0.0:
        raise UsageError("polynomial weights need kappa > 0")
    rho = _make_weight("polynomial", (power, kappa))
    n_ratio = (1.0 + kappa * 2.0 ** power) / (1.0 + kappa)  # worst ratio is site 1 vs 2
    m1 = min(rho(n) * math.exp(n) for n in range(1, int(power) + 10))
    fam = dict(
        rho=rho,
        kind="polynomial",
        kind_params=(power, kappa),
        ratio_params=(1, n_ratio),
        lower_params=(1.0, m1),
        sup_ratio_bound=1.0,
    )
    if v_kappa is not None:
        fam.update(v=_make_weight("exponential", (float(v_kappa),)),
                   v_kind="exponential", v_kind_params=(float(v_kappa),))
    return WeightFamily(**fam)


def table_weights(values, *, ratio_params=None, lower_params=None,
                  sup_ratio_bound=None) -> WeightFamily:
    """An explicit finite weight table (site 1 first); constants derived from it."""
    vals = tuple(float(x) for x in values)
    if not vals or any(not (x > 0.0) or not math.isfinite(x) for x in vals):
        raise UsageError("table weights must be positive, finite, nonempty")
    if ratio_params is None:
        worst = max(vals[i] / vals[i + 1] for i in range(len(vals) - 1)) if len(vals) > 1 else 1.0
        worst = max(worst, max(vals[i + 1] / vals[i] for i in range(len(vals) - 1)) if len(vals) > 1 else 1.0)
        ratio_params = (1, worst)
    if lower_params is None:
        m1 = min(v * math.exp(i + 1) for i, v in enumerate(vals))
        lower_params = (1.0, m1)
    if sup_ratio_bound is None:
        run_min = []
        m = math.inf
        for v in vals:
            m = min(m, v)
            run_min.append(m)
        sup_ratio_bound = max(v / m for v, m in zip(vals, run_min))
    return WeightFamily(
        rho=_make_weight("table", (vals,)),
        kind="table",
        kind_params=(vals,),
        ratio_params=ratio_params,
        lower_params=lower_params,
        sup_ratio_bound=sup_ratio_bound,
    )


def summability_certificate(kind: str, params: tuple, upto: int = 100000):
    """(is_summable, upper_bound_on_total, note) for sum_{i>=1} w(i).

    exponential: exact geometric total.  polynomial: partial sum plus an
    integral tail bound.  table: the finite sum itself (nothing beyond the
    table is certified).
    """
    if kind == "exponential":
        (kappa,) = params
        total = math.exp(-kappa) / (1.0 - math.exp(-kappa))
        return True, total, "geometric series, exact"
    if kind == "polynomial":
        power, kappa = params
        if power <= 1.0:
            return False, None, "power <= 1: series diverges"
        w = _make_weight(kind, params)
        partial = sum(w(i) for i in range(1, upto + 1))
        tail = upto ** (1.0 - power) / (kappa * (power - 1.0))
        return True, partial + tail, f"partial sum to {upto} plus integral tail bound"
    if kind == "table":
        (values,) = params
        return True, float(sum(values)), "finite table, exact sum; no tail certified"
    raise UsageError(f"unknown weight kind {kind!r}")


def _ratio_sum_certificate(weights: WeightFamily):
    """Certify sum_i rho(i)/v(i) < infinity from the two kind tags."""
    rk, rp = weights.kind, weights.kind_params
    vk, vp = weights.v_kind, weights.v_kind_params
    if rk == "table" or vk == "table":
        return True, "table weights: checked on the finite table only"
    if rk == "exponential" and vk == "exponential":
        gap = rp[0] - vp[0]
        if gap > 0.0:
            return True, f"rho/v = exp(-{gap:g} i): geometric"
        return False, "v decays at least as fast as rho, rho/v is not summable"
    if rk == "exponential" and vk == "polynomial":
        return True, "polynomially corrected geometric series"
    if rk == "polynomial" and vk == "exponential":
        return False, "rho/v grows exponentially"
    # polynomial / polynomial
    gap = rp[0] - vp[0]
    if gap > 1.0:
        return True, f"rho/v ~ i^(-{gap:g})"
    return False, "rho/v decays too slowly (power gap <= 1)"


# ---------------------------------------------------------------------------
# Drift evaluation
# ---------------------------------------------------------------------------


def drift_values(drift: LocalDrift, t: float, z: np.ndarray) -> np.ndarray:
    """f(t, .) over an arbitrary array, using the built-in closed forms when tagged."""
    z = np.asarray(z, dtype=float)
    if drift.kind == "linear":
        (c1,) = drift.params
        return c1 * z
    if drift.kind == "cubic":
        c1, c3 = drift.params
        return c1 * z + c3 * z ** 3
    if drift.kind == "tanh":
        c1, s = drift.params
        return c1 * z + s * np.tanh(z)
    flat = z.reshape(-1)
    out = np.fromiter((drift.eval(t, float(x)) for x in flat), dtype=float,
                      count=flat.size)
    return out.reshape(z.shape)


def coupling_arrays(model: SpinChainModel, t: float):
    """(sub, sup) arrays of length n: sub[j] multiplies x[j-1] in row j, sup[j]
    multiplies x[j+1]; sub[0] = 0 (a_{1,0} convention) and sup[n-1] = 0
    (no super-diagonal at the boundary)."""
    n = model.volume
    c = model.coupling
    sub = np.zeros(n)
    sup = np.zeros(n)
    if c.kind == "constant":
        lo, hi = c.params
        sub[1:] = lo
        sup[:-1] = hi
    elif c.kind == "sinusoidal":
        base, depth, period, phase = c.params
        a = base * (1.0 + depth * math.sin(2.0 * math.pi * t / period + phase))
        sub[1:] = a
        sup[:-1] = a
    elif c.kind == "table":
        lo, hi = c.params
        if len(lo) < n - 1 or len(hi) < n - 1:
            raise UsageError("coupling table shorter than the volume")
        sub[1:] = lo[: n - 1]
        sup[:-1] = hi[: n - 1]
    else:
        for i in range(2, n + 1):
            sub[i - 1] = c.sub(i, t)
        for i in range(1, n):
            sup[i - 1] = c.sup(i, t)
    return sub, sup


def drift_vector(model: SpinChainModel, t: float, x) -> np.ndarray:
    """Right-hand side of the chain at time t.

    Component 1 is a_{1,2} x_2 + f(x_1); interior components add both
    neighbour terms; component n keeps only a_{n,n-1} x_{n-1} + f(x_n).
    """
    x = np.asarray(x, dtype=float)
    n = model.volume
    if x.shape[-1] != n:
        raise UsageError(f"state has {x.shape[-1]} components, model volume is {n}")
    sub, sup = coupling_arrays(model, t)
    out = drift_values(model.drift, t, x)
    if n > 1:
        out[..., 1:] += sub[1:] * x[..., :-1]
        out[..., :-1] += sup[:-1] * x[..., 1:]
    return out


def kernel_form(model: SpinChainModel):
    """Describe the model for the compiled stepper, or None if it needs the
    generic per-call path (custom callables)."""
    d = model.drift
    c = model.coupling
    if d.kind not in ("linear", "cubic", "tanh"):
        return None
    if c.kind not in ("constant", "sinusoidal", "table"):
        return None
    n = model.volume
    sub0, sup0 = coupling_arrays(model, 0.0)
    form = {
        "drift_kind": {"linear": 0, "cubic": 1, "tanh": 2}[d.kind],
        "d1": float(d.params[0]),
        "d2": float(d.params[1]) if len(d.params) > 1 else 0.0,
        "mod_kind": 0,
        "depth": 0.0,
        "omega": 0.0,
        "phase": 0.0,
        "sub0": sub0,
        "sup0": sup0,
    }
    if c.kind == "sinusoidal":
        base, depth, period, phase = c.params
        base_sub = np.zeros(n)
        base_sup = np.zeros(n)
        base_sub[1:] = base
        base_sup[: n - 1] = base
        form.update(
            mod_kind=1,
            depth=float(depth),
            omega=2.0 * math.pi / period,
            phase=float(phase),
            sub0=base_sub,
            sup0=base_sup,
        )
    return form


# ---------------------------------------------------------------------------
# Assumption validation
# ---------------------------------------------------------------------------


def _rel(excess: float, scale: float) -> float:
    return excess / max(1.0, abs(scale))


def _sampled_record(name, excess, scales, witnesses, tol, note=""):
    """Fold pointwise violations into one record.

    ``excess`` holds absolute violations (positive = inequality broken);
    the pass verdict applies the relative tolerance, the reported witness
    and margin are the largest absolute violation.
    """
    excess = np.asarray(excess, dtype=float)
    rel = excess / np.maximum(1.0, np.abs(np.asarray(scales, dtype=float)))
    j = int(np.argmax(excess))
    return ConditionRecord(name, float(np.max(rel)) <= tol, witnesses[j],
                           float(excess[j]), note)


def _check_drift_dissipativity(drift, zs, ts, tol):
    excess, scales, wits = [], [], []
    for t in ts:
        fz = drift_values(drift, t, zs)
        bad = ~np.isfinite(fz)
        if bad.any():
            j = int(np.argmax(bad))
            raise ModelEvaluationError(
                f"f({t}, {zs[j]}) is not finite", point=(float(t), float(zs[j])))
        bound = drift.eta - drift.lam * zs * zs
        excess.append(fz * zs - bound)
        scales.append(bound)
        wits.extend((float(t), float(z)) for z in zs)
    return _sampled_record("drift.weak_dissipativity", np.concatenate(excess),
                           np.concatenate(scales), wits, tol)


def _check_drift_growth(drift, zs, ts, tol):
    excess, scales, wits = [], [], []
    for t in ts:
        fz = drift_values(drift, t, zs)
        cap = drift.eta0 * (1.0 + np.abs(zs) ** drift.theta)
        excess.append(np.abs(fz) - cap)
        scales.append(cap)
        wits.extend((float(t), float(z)) for z in zs)
    return _sampled_record("drift.growth", np.concatenate(excess),
                           np.concatenate(scales), wits, tol)


def _deriv_probe(fn, t, z):
    """(f'(t,z) estimate, is_machine_accurate).

    Complex-step differentiation when the callable handles complex input
    (error at machine level); otherwise a centered difference, whose error
    floor in double precision is around 1e-10 -- callers loosen the
    tolerance to 1e-6 in that case.
    """
    try:
        val = fn(t, complex(z, 1e-150))
        if isinstance(val, complex):
            d = val.imag / 1e-150
            if math.isfinite(d):
                return d, True
    except Exception:
        pass
    h = 1e-6 * max(1.0, abs(z))
    return (fn(t, z + h) - fn(t, z - h)) / (2.0 * h), False


def _check_jets(drift, zs, ts, tol):
    sub = zs[:: max(1, len(zs) // 64)]
    worst0, wit0 = -math.inf, None
    worst1, wit1 = -math.inf, None
    tol1 = tol
    note1 = "derivative probe: complex step"
    for t in ts[:2]:
        for z in sub:
            z = float(z)
            jet = drift.jet(t, z, 1)
            f0 = drift.eval(t, z)
            m0 = _rel(abs(jet[0] - f0), f0)
            if m0 > worst0:
                worst0, wit0 = m0, (float(t), z)
            d1, accurate = _deriv_probe(drift.eval, float(t), z)
            if not accurate:
                tol1 = max(tol1, 1e-6)
                note1 = "derivative probe: centered difference (tolerance 1e-6)"
            m1 = _rel(abs(jet[1] - d1), d1)
            if m1 > worst1:
                worst1, wit1 = m1, (float(t), z)
    return [
        ConditionRecord("drift.jet_order0", worst0 <= tol, wit0, worst0),
        ConditionRecord("drift.jet_order1", worst1 <= tol1, wit1, worst1, note1),
    ]


def _check_periodic(name, fn, args_iter, period, tol):
    worst, wit = -math.inf, None
    for args in args_iter:
        a = fn(*args)
        b = fn(*args[:-1], args[-1] + period)
        m = _rel(abs(a - b), a)
        if m > worst:
            worst, wit = m, tuple(float(x) for x in args)
    return ConditionRecord(name, worst <= tol, wit, worst)


def validate_assumptions(model: SpinChainModel, weights: Optional[WeightFamily] = None,
                         sampling: Optional[SamplingGrid] = None) -> AssumptionReport:
    """Sample every declared assumption; report one record per condition.

    A record's margin is the largest relative violation over the sampling
    grid (nonpositive margins mean the inequality held at all samples).
    Raises UsageError on an empty grid and ModelEvaluationError if the drift
    produces a non-finite value.
    """
    g = sampling if sampling is not None else SamplingGrid()
    if g.z_count < 1 or g.t_count < 1 or g.site_count < 1:
        raise UsageError("sampling grid must be nonempty")
    if not (g.z_hi > g.z_lo):
        raise UsageError("sampling grid must have z_hi > z_lo")
    tol = g.rel_tol

    d = model.drift
    c = model.coupling
    zs = np.linspace(g.z_lo, g.z_hi, g.z_count)
    dts = (np.linspace(0.0, d.period, g.t_count, endpoint=False)
           if d.period is not None else np.array([0.0]))
    cts = (np.linspace(0.0, c.period, g.t_count, endpoint=False)
           if c.period is not None else np.array([0.0]))
    sites = range(1, g.site_count + 1)

    records = []

    # --- drift ---
    records.append(_check_drift_dissipativity(d, zs, dts, tol))
    records.append(_check_drift_growth(d, zs, dts, tol))
    records.extend(_check_jets(d, zs, dts, tol))
    lam_margin = _rel(0.5 - d.lam, 0.5)
    records.append(ConditionRecord("drift.lambda_above_half", d.lam > 0.5, None, lam_margin))
    if d.period is not None:
        zsub = zs[:: max(1, len(zs) // 32)]
        args = [(float(z), float(t)) for t in dts for z in zsub]
        records.append(_check_periodic(
            "drift.periodicity", lambda z, t: d.eval(t, z), args, d.period, tol))

    # --- coupling ---
    excess, wits = [], []
    nz_min, nz_wit = math.inf, None
    for t in cts:
        for i in sites:
            vals = []
            if i >= 2:
                s = c.sub(i, float(t))
                vals.append(abs(s))
                if abs(s) < nz_min:
                    nz_min, nz_wit = abs(s), (i, float(t))
            vals.append(abs(c.sup(i, float(t))))
            for vv in vals:
                excess.append(vv - c.bound)
                wits.append((i, float(t)))
    records.append(_sampled_record("coupling.bounded", excess,
                                   [c.bound] * len(excess), wits, tol))
    records.append(ConditionRecord("coupling.subdiagonal_nonzero", nz_min > 0.0,
                                   nz_wit, -nz_min))
    records.append(ConditionRecord(
        "coupling.first_link_zero", True, None, 0.0,
        "a_{1,0} = 0 by construction: it never enters the drift"))
    if c.period is not None:
        worst, wit = -math.inf, None
        for i in list(sites)[::8]:
            for t in cts:
                t = float(t)
                for fn in ((c.sub,) if i >= 2 else ()) + (c.sup,):
                    m = _rel(abs(fn(i, t) - fn(i, t + c.period)), fn(i, t))
                    if m > worst:
                        worst, wit = m, (i, t)
        records.append(ConditionRecord("coupling.periodicity", worst <= tol, wit, worst))

    # --- joint constants ---
    margin = _rel(2.0 * c.bound - (d.lam - 0.5), d.lam - 0.5)
    records.append(ConditionRecord("model.coupling_margin", margin <= tol, None, margin,
                                   "requires 2M < lambda - 1/2"))
    records.append(ConditionRecord("model.noise_site_is_first",
                                   set(model.noise_sites) == {1}, None, 0.0,
                                   "enforced at construction"))

    # --- weights ---
    if weights is not None:
        records.extend(_weight_records(weights, g, d, c))

    return AssumptionReport(tuple(records))


def _weight_records(w: WeightFamily, g: SamplingGrid, drift: LocalDrift,
                    coupling: CouplingCoefficients) -> list:
    tol = g.rel_tol
    if w.kind == "table":
        (vals,) = w.kind_params
        top = min(g.site_count, len(vals))
    else:
        top = g.site_count
    rho = [w.rho(i) for i in range(1, top + 1)]
    records = []

    R, N = w.ratio_params
    excess, wits = [], []
    for j in range(1, top + 1):
        for gsite in range(max(1, j - int(R)), min(top, j + int(R)) + 1):
            excess.append(rho[gsite - 1] / rho[j - 1] - N)
            wits.append((gsite, j))
    records.append(_sampled_record("weights.ratio_bound", excess,
                                   [N] * len(excess), wits, tol))

    ok, total, note = summability_certificate(w.kind, w.kind_params)
    mono = all(r > 0.0 and math.isfinite(r) for r in rho)
    records.append(ConditionRecord(
        "weights.summability", ok and mono, None,
        0.0 if (ok and mono) else 1.0,
        note + (f"; certified total <= {total:.6g}" if total is not None else "")))

    r_low, m1 = w.lower_params
    worst, worst_rel, wit = -math.inf, -math.inf, None
    for i in range(1, top + 1):
        floor = m1 * math.exp(-r_low * i)
        ex = floor - rho[i - 1]
        # relative to the weight's own scale: rho values get tiny down-chain
        rel = ex / max(rho[i - 1], 1e-300)
        if ex > worst:
            worst, wit = ex, (i,)
        worst_rel = max(worst_rel, rel)
    records.append(ConditionRecord("weights.lower_bound", worst_rel <= tol, wit, worst))

    m2 = w.sup_ratio_bound
    run_min = math.inf
    excess, wits = [], []
    for i in range(1, top + 1):
        run_min = min(run_min, rho[i - 1])
        excess.append(rho[i - 1] / run_min - m2)
        wits.append((i,))
    records.append(_sampled_record("weights.sup_ratio", excess,
                                   [m2] * len(excess), wits, tol))

    if w.v is not None:
        okv, totv, notev = summability_certificate(w.v_kind, w.v_kind_params)
        vvals = [w.v(i) for i in range(1, top + 1)]
        vpos = all(x > 0.0 and math.isfinite(x) for x in vvals)
        records.append(ConditionRecord(
            "weights.v_summability", okv and vpos, None, 0.0 if (okv and vpos) else 1.0,
            notev + (f"; certified total <= {totv:.6g}" if totv is not None else "")))

        okr, noter = _ratio_sum_certificate(w)
        records.append(ConditionRecord("weights.rho_over_v_summable", okr, None,
                                       0.0 if okr else 1.0, noter))

        th, lam, eta, M = drift.theta, drift.lam, drift.eta, coupling.bound
        rhs = ((2.0 * M * N + 2.0 * (2.0 * th - 1.0) * M) / (2.0 * th)
               + th + eta + 1.0 / (2.0 * th) - 0.5)
        margin = _rel(rhs - lam, rhs)
        records.append(ConditionRecord(
            "tightness.rate_inequality", margin <= tol, None, margin,
            f"declared-constant check: lambda > {rhs:.6g} using N from ratio_params"))

    return records
