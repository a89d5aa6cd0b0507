"""Backend selection for the stepping kernels.

The compiled extension `latticespin._kernels` is used when importable;
otherwise (or when LATTICESPIN_NO_EXT=1) the NumPy reference implementation
in `_kernels_py` takes over with identical semantics.  `StepperSpec` is the
flattened description of a model the kernels can inline; models with custom
callables get None from `stepper_spec` and are integrated by the generic
path in `sim`.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from . import _kernels_py
from .model import SpinChainModel, kernel_form

if os.environ.get("LATTICESPIN_NO_EXT") == "1":
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]

        BACKEND = "compiled"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"

__all__ = ["BACKEND", "StepperSpec", "stepper_spec", "path", "ensemble",
           "pair_supdiff", "ensemble_supfeature", "thread_count"]


@dataclass(frozen=True)
class StepperSpec:
    """Everything a kernel needs: drift tag + params, base coupling arrays,
    time modulation, and the taming switch."""

    drift_kind: int          # 0 linear, 1 cubic, 2 tanh-saturated
    d1: float
    d2: float
    sub0: np.ndarray         # length n, slot 0 forced to 0 (a_{1,0} = 0)
    sup0: np.ndarray         # length n, slot n-1 forced to 0 (boundary)
    mod_kind: int            # 0 constant, 1 sinusoidal factor
    depth: float
    omega: float
    phase: float
    tamed: bool

    @property
    def volume(self) -> int:
        return self.sub0.shape[0]


def stepper_spec(model: SpinChainModel, tamed: bool = False):
    """StepperSpec for kernel-friendly models, None for custom callables."""
    form = kernel_form(model)
    if form is None:
        return None
    return StepperSpec(
        drift_kind=form["drift_kind"],
        d1=form["d1"],
        d2=form["d2"],
        sub0=np.ascontiguousarray(form["sub0"], dtype=float),
        sup0=np.ascontiguousarray(form["sup0"], dtype=float),
        mod_kind=form["mod_kind"],
        depth=form["depth"],
        omega=form["omega"],
        phase=form["phase"],
        tamed=bool(tamed),
    )


def thread_count(requested=None) -> int:
    """Worker count: explicit argument, else LATTICESPIN_THREADS, else 1.

    Results never depend on this (replicas write disjoint rows); it is purely
    a wall-clock knob.
    """
    if requested is not None:
        return max(1, int(requested))
    env = os.environ.get("LATTICESPIN_THREADS", "")
    try:
        return max(1, int(env))
    except ValueError:
        return 1


def _args(spec: StepperSpec):
    return (spec.drift_kind, spec.d1, spec.d2, spec.sub0, spec.sup0,
            spec.mod_kind, spec.depth, spec.omega, spec.phase, int(spec.tamed))


def path(spec, x0, dw, h, t0=0.0, record_every=1, threads=None):
    return _impl.run_path(*_args(spec), np.ascontiguousarray(x0, dtype=float),
                          np.ascontiguousarray(dw, dtype=float), float(h),
                          float(t0), int(record_every), thread_count(threads))


def ensemble(spec, X0, dw, h, t0=0.0, threads=None):
    return _impl.run_ensemble(*_args(spec), np.ascontiguousarray(X0, dtype=float),
                              np.ascontiguousarray(dw, dtype=float), float(h),
                              float(t0), thread_count(threads))


def pair_supdiff(spec_a, spec_b, X0a, X0b, dw, h, t0=0.0, k_coords=1, wts=None,
                 threads=None):
    if wts is None:
        wts = np.ones(k_coords)
    return _impl.run_pair_supdiff(
        spec_a.drift_kind, spec_a.d1, spec_a.d2,
        spec_a.sub0, spec_a.sup0, spec_b.sub0, spec_b.sup0,
        spec_a.mod_kind, spec_a.depth, spec_a.omega, spec_a.phase,
        int(spec_a.tamed),
        np.ascontiguousarray(X0a, dtype=float),
        np.ascontiguousarray(X0b, dtype=float),
        np.ascontiguousarray(dw, dtype=float), float(h), float(t0),
        int(k_coords), np.ascontiguousarray(wts, dtype=float),
        thread_count(threads))


def ensemble_supfeature(spec, X0, dw, h, t0=0.0, wts=None, q=2.0, threads=None):
    X0 = np.ascontiguousarray(X0, dtype=float)
    if wts is None:
        wts = np.ones(X0.shape[1])
    return _impl.run_ensemble_supfeature(
        *_args(spec), X0, np.ascontiguousarray(dw, dtype=float), float(h),
        float(t0), np.ascontiguousarray(wts, dtype=float), float(q),
        thread_count(threads))
