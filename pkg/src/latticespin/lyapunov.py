"""Exact generator evaluation on polynomial Lyapunov functions and sampled
verification of the drift inequality L V <= -c V + C.

V has the fixed shape  V(x) = offset + sum_i w_i |x_i|^(2 theta).  The noise
acts on site 1 alone, so the second-order part of the generator touches only
the first coordinate.  Two shapes admit closed-form constants: the plain
quadratic V = 1 + |x|^2 (c=1, C=2*n*eta+2) and the offset-free auxiliary
weighted form (c=1, C = 2*theta*eta * total weight mass).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ._errors import NoClosedForm, UsageError
from .model import SpinChainModel, WeightFamily, drift_vector, summability_certificate

__all__ = [
    "LyapunovSpec",
    "SampleSpec",
    "DriftConditionReport",
    "unweighted_spec",
    "auxiliary_spec",
    "generator_apply",
    "drift_condition_check",
    "auto_constants",
]


@dataclass(frozen=True)
class LyapunovSpec:
    """V(x) = offset + sum_i w[i] * |x_i|^(2*theta).

    ``w_total``, when set, is a certified upper bound on the *infinite* sum
    of the weight family w was truncated from; the closed-form constant for
    the weighted shape needs it.  The classical unweighted function uses
    offset 1; the auxiliary-weighted chain bound is stated for the
    offset-free sum, so the offset is explicit here.
    """

    w: np.ndarray
    theta: float = 1.0
    offset: float = 1.0
    w_total: Optional[float] = None

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float)
        object.__setattr__(self, "w", w)
        if w.ndim != 1 or w.size == 0 or not np.all(w > 0.0):
            raise UsageError("Lyapunov weights must be a nonempty positive vector")
        if not (self.theta >= 1.0):
            raise UsageError("Lyapunov exponent needs theta >= 1")

    def value(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(self.offset + np.sum(self.w * np.abs(x) ** (2.0 * self.theta)))


def unweighted_spec(volume: int, theta: float = 1.0) -> LyapunovSpec:
    """V = 1 + sum |x_i|^(2 theta), the Harris-condition function."""
    return LyapunovSpec(w=np.ones(volume), theta=theta, offset=1.0)


def auxiliary_spec(weights: WeightFamily, volume: int, theta: float) -> LyapunovSpec:
    """V = sum v(i) |x_i|^(2 theta) built from the family's auxiliary weight v."""
    if weights.v is None:
        raise UsageError("weight family has no auxiliary weight v")
    w = np.array([weights.v(i) for i in range(1, volume + 1)])
    ok, total, _ = summability_certificate(weights.v_kind, weights.v_kind_params)
    if not ok:
        raise UsageError("auxiliary weight is not certifiably summable")
    return LyapunovSpec(w=w, theta=theta, offset=0.0, w_total=total)


def generator_apply(model: SpinChainModel, spec: LyapunovSpec, t: float, x) -> float:
    """L V(x) = sum_i 2 theta w_i sign(x_i)|x_i|^(2 theta - 1) drift_i(t,x)
              + theta (2 theta - 1) w_1 |x_1|^(2 theta - 2).

    Exact (no sampling): V is smooth off the axes and the formula extends
    continuously; |x|^0 is taken as 1 so theta = 1 recovers the classical
    quadratic case everywhere.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != model.volume:
        raise UsageError(f"state has {x.size} components, volume is {model.volume}")
    if spec.w.size != model.volume:
        raise UsageError("Lyapunov weights do not match the model volume")
    th = spec.theta
    b = drift_vector(model, t, x)
    first = 2.0 * th * np.sum(spec.w * np.sign(x) * np.abs(x) ** (2.0 * th - 1.0) * b)
    x1 = abs(float(x[0]))
    second = th * (2.0 * th - 1.0) * spec.w[0] * x1 ** (2.0 * th - 2.0)
    return float(first + second)


@dataclass(frozen=True)
class SampleSpec:
    """Where the drift inequality is probed: a uniform ball plus heavy-tailed
    (per-coordinate Cauchy) draws that stress the large-|x| regime."""

    count: int = 10_000
    radius: float = 1.0e3
    heavy_frac: float = 0.25
    seed: int = 20_240_601
    t_count: int = 4


@dataclass(frozen=True)
class DriftConditionReport:
    passed: bool
    max_violation: float
    witness: tuple
    c: float
    C: float

    def to_jsonable(self) -> dict:
        return {
            "pass": self.passed,
            "max_violation": self.max_violation,
            "witness": list(self.witness),
            "c": self.c,
            "C": self.C,
        }


def _sample_states(n: int, s: SampleSpec) -> np.ndarray:
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(s.seed)))
    heavy = int(s.count * s.heavy_frac)
    bulk = s.count - heavy
    g = rng.normal(size=(bulk, n))
    norms = np.maximum(np.linalg.norm(g, axis=1, keepdims=True), 1e-300)
    radii = s.radius * rng.random((bulk, 1)) ** (1.0 / n)
    ball = g / norms * radii
    tails = rng.standard_cauchy(size=(heavy, n))
    return np.vstack([ball, tails, np.zeros((1, n))])  # origin always probed


def drift_condition_check(model: SpinChainModel, spec: LyapunovSpec, c: float,
                          C: float, samples: Optional[SampleSpec] = None
                          ) -> DriftConditionReport:
    """Sampled check of  L V + c V - C <= 0; reports the worst point found."""
    if not (c > 0.0):
        raise UsageError("drift-condition rate c must be positive")
    s = samples if samples is not None else SampleSpec()
    n = model.volume
    X = _sample_states(n, s)
    if model.period is not None:
        ts = np.linspace(0.0, model.period, s.t_count, endpoint=False)
    else:
        ts = np.array([0.0])
    th = spec.theta
    worst = -math.inf
    wit = (0.0,) * n
    for t in ts:
        B = drift_vector(model, float(t), X)
        absX = np.abs(X)
        first = 2.0 * th * np.sum(spec.w * np.sign(X) * absX ** (2.0 * th - 1.0) * B,
                                  axis=1)
        second = th * (2.0 * th - 1.0) * spec.w[0] * absX[:, 0] ** (2.0 * th - 2.0)
        V = spec.offset + np.sum(spec.w * absX ** (2.0 * th), axis=1)
        viol = first + second + c * V - C
        j = int(np.argmax(viol))
        if viol[j] > worst:
            worst = float(viol[j])
            wit = tuple(float(v) for v in X[j])
    return DriftConditionReport(passed=worst <= 0.0, max_violation=worst,
                                witness=wit, c=float(c), C=float(C))


def auto_constants(model: SpinChainModel, spec: LyapunovSpec):
    """The closed-form (c, C) for the recognized Lyapunov shapes.

    unweighted theta=1, offset 1:      (1, 2 n eta + 2)
    auxiliary-weighted, offset 0:      (1, 2 theta eta * total weight mass)
    Anything else has no certified constants here -> NoClosedForm.
    """
    d = model.drift
    n = model.volume
    if spec.offset == 1.0 and spec.theta == 1.0 and np.all(spec.w == 1.0):
        return 1.0, 2.0 * n * d.eta + 2.0
    if spec.offset == 0.0 and spec.w_total is not None:
        return 1.0, 2.0 * spec.theta * d.eta * spec.w_total
    raise NoClosedForm(
        "no closed-form drift constants for this Lyapunov shape; "
        "supply (c, C) explicitly to drift_condition_check")
