"""Batch front door: config parsing, experiment dispatch, artifact emission.

One process runs one experiment, described by a JSON file that must pass
the packaged schema (``latticespin schema`` prints it).  The contract is
built for scripting:

* exit 0   — experiment ran; artifacts and ``summary.json`` written.
* exit 2   — the config is unusable (unreadable, schema-invalid, or
             semantically inconsistent).  A machine-readable error list is
             printed as JSON; nothing is written.
* exit 3   — the model failed assumption validation and the requested
             experiment only means something for valid models.
* exit 4   — the run itself blew up (a path left the trust region, or too
             much of an ensemble did).

``summary.json`` is written for every run that gets past config checks —
also on exits 3 and 4 — and references every other emitted file, so a
directory can always be audited from the summary alone.  Data files carry
no wall-clock content; re-running a config byte-reproduces every CSV.

Seeding is explicit: the config's ``seed`` drives all randomness, and there
is no fallback to the clock.  Internal parallelism comes from ``--threads``,
else the config's ``threads`` key, else ``LATTICESPIN_THREADS``, else the
available parallelism; it never changes the numbers, only the wall time.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import platform
import sys
import time
from functools import lru_cache
from importlib import resources
from typing import Optional

import jsonschema
import numpy as np
import scipy

from . import __version__
from ._emit import write_csv, write_json
from ._errors import (BlowupError, ConfigError, EstimationError,
                      ModelEvaluationError, NoClosedForm, UsageError)
from .control import (back_substitute, endpoint_jets, hermite_interpolant,
                      verify_steering)
from .ergodics import (_model_hash, ergodic_decay, estimate_invariant,
                       tail_bound_check, tightness_diagnostic,
                       volume_convergence)
from .hormander import bracket_basis_analytic, bracket_basis_numeric, rank_check
from .lyapunov import (SampleSpec, auto_constants, auxiliary_spec,
                       drift_condition_check, unweighted_spec)
from .model import (SpinChainModel, constant_coupling, cubic_drift,
                    exponential_weights, linear_drift, modulated_coupling,
                    polynomial_weights, tanh_drift, validate_assumptions)
from .periodic import (_measure_rows, average_lift, estimate_periodic_measure,
                       transport_check, write_phase_csvs)
from .sim import make_noise, simulate, write_trajectory_csv

_EXIT_OK = 0
_EXIT_CONFIG = 2
_EXIT_INVALID_MODEL = 3
_EXIT_BLOWUP = 4

#: Experiments whose output is meaningless when the standing assumptions
#: fail; these are gated behind ``validate_assumptions`` (exit 3).
_NEEDS_VALID_MODEL = frozenset(
    {"invariant", "decay", "converge", "tails", "lyapunov", "periodic"})

# Per-kind parameter whitelists.  The schema keeps one flat namespace for
# experiment parameters, so without this a typo like putting "rk_step" on a
# decay experiment would be silently ignored instead of rejected.
_EXP_FIELDS = {
    "validate": set(),
    "simulate": {"h", "horizon", "scheme", "record_every", "t0", "x0"},
    "invariant": {"burn_in", "n_samples", "thinning", "h", "scheme", "bins",
                  "x0"},
    "decay": {"x", "y", "check_times", "replicas", "h", "scheme", "bins"},
    "converge": {"k", "volumes", "horizon", "replicas", "x", "h", "scheme"},
    "tails": {"volumes", "x", "t", "n0_ladder", "replicas", "h", "scheme",
              "tightness"},
    "lyapunov": {"theta", "shape", "c", "C", "probe_count", "probe_radius"},
    "hormander": {"states", "method", "fd_step", "rank_tol"},
    "control": {"x", "z", "horizon", "grid_points", "rk_step"},
    "periodic": {"s", "burn_cycles", "cycles", "h", "scheme", "bins", "x0",
                 "phases", "transport"},
}

_DRIFT_FIELDS = {
    "linear": {"slope", "eta", "lam", "eta0"},
    "cubic": {"c1", "c3", "eta", "lam"},
    "tanh": {"rate", "sat", "eta", "lam"},
}

_COUPLING_FIELDS = {
    "constant": {"a", "a_sub", "a_sup"},
    "modulated": {"base", "depth", "period", "phase"},
}

_WEIGHT_FIELDS = {
    "exponential": {"kappa", "v_kappa"},
    "polynomial": {"power", "kappa", "v_kappa"},
}


@lru_cache(maxsize=1)
def _schema_text() -> str:
    return resources.files("latticespin").joinpath(
        "config.schema.json").read_text(encoding="utf-8")


def _schema() -> dict:
    return json.loads(_schema_text())


def _violation(path: str, message: str) -> dict:
    return {"path": path, "message": message}


def _schema_violations(cfg) -> list:
    validator = jsonschema.Draft202012Validator(_schema())
    out = []
    for err in validator.iter_errors(cfg):
        path = "/".join(str(p) for p in err.absolute_path) or "(root)"
        out.append(_violation(path, err.message))
    out.sort(key=lambda v: (v["path"], v["message"]))
    return out


def _fail_config(violations) -> int:
    print(json.dumps({"error": "invalid-config", "violations": violations},
                     indent=2, sort_keys=True))
    return _EXIT_CONFIG


def _extra_keys(block: dict, allowed: set, path: str, label: str) -> list:
    extras = sorted(set(block) - allowed - {"kind"})
    return [_violation(f"{path}/{k}", f"not a parameter of the {label}")
            for k in extras]


# ---------------------------------------------------------------------------
# config -> model objects


def _build_drift(block: dict, violations: list):
    kind = block["kind"]
    violations.extend(_extra_keys(block, _DRIFT_FIELDS[kind], "model/drift",
                                  f"{kind} drift"))
    opts = {k: block[k] for k in ("eta", "lam") if k in block}
    try:
        if kind == "linear":
            if "eta0" in block:
                opts["eta0"] = block["eta0"]
            return linear_drift(block["slope"], **opts)
        if kind == "cubic":
            return cubic_drift(block["c1"], block["c3"], **opts)
        return tanh_drift(block["rate"], block["sat"], **opts)
    except UsageError as exc:
        violations.append(_violation("model/drift", str(exc)))
        return None


def _build_coupling(block: dict, violations: list):
    kind = block["kind"]
    violations.extend(_extra_keys(block, _COUPLING_FIELDS[kind],
                                  "model/coupling", f"{kind} coupling"))
    try:
        if kind == "constant":
            if "a" in block:
                return constant_coupling(block["a"],
                                         a_sub=block.get("a_sub"),
                                         a_sup=block.get("a_sup"))
            if "a_sub" in block and "a_sup" in block:
                return constant_coupling(a_sub=block["a_sub"],
                                         a_sup=block["a_sup"])
            violations.append(_violation(
                "model/coupling",
                "constant coupling needs 'a', or both 'a_sub' and 'a_sup'"))
            return None
        return modulated_coupling(block["base"], block["depth"],
                                  block["period"],
                                  phase=block.get("phase", 0.0))
    except UsageError as exc:
        violations.append(_violation("model/coupling", str(exc)))
        return None


def _build_weights(block: Optional[dict], violations: list):
    if block is None:
        return None
    kind = block["kind"]
    violations.extend(_extra_keys(block, _WEIGHT_FIELDS[kind], "weights",
                                  f"{kind} weights"))
    try:
        if kind == "exponential":
            return exponential_weights(block["kappa"],
                                       v_kappa=block.get("v_kappa"))
        return polynomial_weights(block["power"],
                                  kappa=block.get("kappa", 1.0),
                                  v_kappa=block.get("v_kappa"))
    except UsageError as exc:
        violations.append(_violation("weights", str(exc)))
        return None


def _build_model(cfg: dict, violations: list):
    mb = cfg["model"]
    drift = _build_drift(mb["drift"], violations)
    coupling = _build_coupling(mb["coupling"], violations)
    weights = _build_weights(cfg.get("weights"), violations)
    if violations or drift is None or coupling is None:
        return None, weights
    try:
        model = SpinChainModel(drift=drift, coupling=coupling,
                               volume=mb["volume"])
    except UsageError as exc:
        violations.append(_violation("model", str(exc)))
        return None, weights
    return model, weights


# ---------------------------------------------------------------------------
# semantic checks (schema-valid JSON whose contents don't fit together)


def _site_vector(exp: dict, key: str, n: int, violations: list):
    if key not in exp:
        return None
    vec = np.asarray(exp[key], dtype=float)
    if vec.size != n:
        violations.append(_violation(
            f"experiment/{key}",
            f"has {vec.size} components but the volume is {n}"))
    return vec


def _semantic_violations(cfg: dict, model: SpinChainModel, weights) -> list:
    exp = cfg["experiment"]
    kind = exp["kind"]
    n = model.volume
    v: list = []
    v.extend(_extra_keys(exp, _EXP_FIELDS[kind], "experiment",
                         f"{kind} experiment"))

    periodic_model = model.period is not None
    if kind in ("decay", "control", "hormander") and periodic_model:
        v.append(_violation(
            "model/coupling",
            f"the {kind} experiment needs a time-homogeneous model"))
    if kind == "periodic" and not periodic_model:
        v.append(_violation(
            "model/coupling",
            "the periodic experiment needs time-periodic coupling"))

    if kind in ("simulate", "invariant", "periodic"):
        _site_vector(exp, "x0", n, v)
    if kind == "decay":
        _site_vector(exp, "x", n, v)
        _site_vector(exp, "y", n, v)
    if kind == "converge":
        volumes = exp["volumes"]
        if len(set(volumes)) != len(volumes):
            v.append(_violation("experiment/volumes",
                                "volumes must be distinct"))
        elif exp["k"] >= min(volumes):
            v.append(_violation(
                "experiment/k",
                f"k={exp['k']} must be smaller than every volume "
                f"(smallest is {min(volumes)})"))
    if kind == "tails" and weights is None:
        v.append(_violation("weights",
                            "the tails experiment needs a weights block"))
    if kind == "lyapunov":
        if exp.get("shape", "unweighted") == "auxiliary" and weights is None:
            v.append(_violation(
                "weights",
                "the auxiliary Lyapunov shape needs a weights block "
                "with an auxiliary weight (v_kappa)"))
        if ("c" in exp) != ("C" in exp):
            v.append(_violation(
                "experiment/c",
                "give both drift constants c and C, or neither"))
    if kind == "hormander":
        for i, state in enumerate(exp["states"]):
            if len(state) != n:
                v.append(_violation(
                    f"experiment/states/{i}",
                    f"has {len(state)} components but the volume is {n}"))
        if model.drift.kind == "tanh" and exp.get("method", "both") != "numeric":
            v.append(_violation(
                "experiment/method",
                "analytic brackets need a polynomial drift; "
                "use method='numeric' with a tanh drift"))
    if kind == "control":
        _site_vector(exp, "x", n, v)
        _site_vector(exp, "z", n, v)
    if kind == "periodic" and "transport" in exp:
        if exp["transport"]["t"] < exp.get("s", 0.0):
            v.append(_violation(
                "experiment/transport/t",
                "transport target time must not precede the start phase"))
    v.sort(key=lambda item: (item["path"], item["message"]))
    return v


# ---------------------------------------------------------------------------
# emission helpers


class _Outputs:
    """Tracks every artifact name so summary.json can reference them all,
    including files already written when a run later fails."""

    def __init__(self, directory: str):
        self.directory = directory
        self.files: list = []

    def path(self, name: str) -> str:
        self.files.append(name)
        return os.path.join(self.directory, name)

    def add_existing(self, name: str) -> None:
        self.files.append(name)


def _write_measure_csvs(out: _Outputs, base: str, measure) -> None:
    n = measure.volume
    header = ["bin_left", "bin_right"] + [f"site_{j + 1}" for j in range(n)]
    write_csv(out.path(f"{base}_histogram.csv"), header,
              _measure_rows(measure), provenance=measure.provenance)
    se = measure.se or {}
    mom_header = ["site", "m1", "m2", "m4", "m2theta", "m1_se", "m2_se"]
    rows = []
    for j in range(n):
        rows.append([
            j + 1,
            measure.moments["m1"][j], measure.moments["m2"][j],
            measure.moments["m4"][j], measure.moments["m2theta"][j],
            se["m1"][j] if "m1" in se else "",
            se["m2"][j] if "m2" in se else "",
        ])
    write_csv(out.path(f"{base}_moments.csv"), mom_header, rows,
              provenance=measure.provenance)


def _slope_se(t: np.ndarray, logv: np.ndarray, slope: float,
              intercept: float) -> Optional[float]:
    """Standard error of a least-squares slope from its residuals."""
    m = t.size
    if m < 3:
        return None
    resid = logv - (slope * t + intercept)
    spread = float(np.sum((t - t.mean()) ** 2))
    if spread <= 0.0:
        return None
    return math.sqrt(float(np.sum(resid ** 2)) / (m - 2) / spread)


# ---------------------------------------------------------------------------
# experiment runners (each returns the summary headline)


def _run_validate(cfg, model, weights, seed, threads, out):
    report = validate_assumptions(model, weights)
    write_json(out.path("assumptions.json"), report.to_jsonable())
    rows = [[r.condition, r.passed, r.margin] for r in report.records]
    write_csv(out.path("assumptions.csv"), ["condition", "passed", "margin"],
              rows, provenance={"kind": "validate",
                                "model": _model_hash(model)})
    failed = [r.condition for r in report.records if not r.passed]
    return {"passed": report.passed, "conditions": len(report.records),
            "failed": failed}


def _run_simulate(cfg, model, weights, seed, threads, out):
    exp = cfg["experiment"]
    h, horizon = exp["h"], exp["horizon"]
    scheme = exp.get("scheme", "euler")
    x0 = np.asarray(exp.get("x0", np.zeros(model.volume)), dtype=float)
    noise = make_noise(seed, h, horizon)
    traj = simulate(model, x0, noise, scheme=scheme,
                    t0=exp.get("t0", 0.0),
                    record_every=exp.get("record_every", 1),
                    threads=threads)
    write_trajectory_csv(traj, out.path("trajectory.csv"),
                         provenance={"kind": "simulate", "seed": seed,
                                     "h": h, "scheme": scheme,
                                     "model": _model_hash(model)})
    if traj.blowup:
        raise BlowupError(
            "the trajectory left the trust region; trajectory.csv holds "
            "the truncated path")
    final = traj.final()
    return {"steps": noise.steps, "h": h, "scheme": scheme,
            "final_norm": float(np.linalg.norm(final)),
            "recorded": int(traj.times.size)}


def _run_invariant(cfg, model, weights, seed, threads, out):
    exp = cfg["experiment"]
    mu = estimate_invariant(model, exp["burn_in"], exp["n_samples"],
                            exp["thinning"], seed,
                            h=exp.get("h", 0.01),
                            scheme=exp.get("scheme", "euler"),
                            x0=exp.get("x0"),
                            bins=exp.get("bins", 64), threads=threads)
    _write_measure_csvs(out, "invariant", mu)
    return {"samples": mu.count,
            "m1_max_abs": float(np.max(np.abs(mu.moments["m1"]))),
            "m2_max": float(np.max(mu.moments["m2"]))}


def _run_decay(cfg, model, weights, seed, threads, out):
    exp = cfg["experiment"]
    fit = ergodic_decay(model, np.asarray(exp["x"], dtype=float),
                        np.asarray(exp["y"], dtype=float),
                        exp["check_times"], exp["replicas"], seed,
                        h=exp.get("h", 0.01),
                        scheme=exp.get("scheme", "euler"),
                        bins=exp.get("bins", 64), threads=threads)
    rows = [[t, tv, used] for t, tv, used in zip(fit.times, fit.tv, fit.used)]
    write_csv(out.path("decay.csv"), ["t", "tv", "used"], rows,
              provenance={"kind": "decay", "seed": seed,
                          "replicas": exp["replicas"],
                          "model": _model_hash(model)})
    alpha_se = None
    if fit.alpha is not None:
        alpha_se = _slope_se(fit.times[fit.used], np.log(fit.tv[fit.used]),
                             -fit.alpha, fit.intercept)
    payload = fit.to_jsonable()
    payload["alpha_se"] = alpha_se
    write_json(out.path("decay_fit.json"), payload)
    return {"alpha": fit.alpha, "alpha_se": alpha_se,
            "r_squared": fit.r_squared, "noise_floor": fit.noise_floor,
            "note": fit.note}


def _run_converge(cfg, model, weights, seed, threads, out):
    exp = cfg["experiment"]
    vm = volume_convergence(model, exp["k"], exp["volumes"],
                            np.asarray(exp.get("x", [0.0]), dtype=float),
                            exp["horizon"], exp["replicas"], seed,
                            h=exp.get("h", 0.01),
                            scheme=exp.get("scheme", "euler"),
                            threads=threads)
    rows = []
    for i, nv in enumerate(vm.volumes):
        for j, mv in enumerate(vm.volumes):
            if i < j:
                rows.append([nv, mv, vm.D[i, j], vm.SE[i, j]])
    write_csv(out.path("volume_matrix.csv"),
              ["volume_n", "volume_m", "sup_diff_sq", "se"], rows,
              provenance={"kind": "converge", "seed": seed, "k": vm.k,
                          "model": _model_hash(model)})
    return {"k": vm.k, "horizon": vm.horizon,
            "worst_pair_above": {str(k): v for k, v in vm.headline().items()}}


def _run_tails(cfg, model, weights, seed, threads, out):
    exp = cfg["experiment"]
    h = exp.get("h", 0.01)
    scheme = exp.get("scheme", "euler")
    table = tail_bound_check(model, exp["volumes"],
                             np.asarray(exp["x"], dtype=float), exp["t"],
                             exp["n0_ladder"], weights, exp["replicas"],
                             seed, h=h, scheme=scheme, threads=threads)
    rows = []
    for i, vol in enumerate(table.volumes):
        for j, n0 in enumerate(table.n0_ladder):
            rows.append([vol, n0, table.estimates[i, j], table.ses[i, j]])
    write_csv(out.path("tail_mass.csv"),
              ["volume", "n0", "estimate", "se"], rows,
              provenance={"kind": "tails", "seed": seed, "t": table.t,
                          "model": _model_hash(model)})
    headline = {"t": table.t,
                "sup_by_n0": {str(n0): float(s) for n0, s in
                              zip(table.n0_ladder, table.sup_by_n0())}}
    tight = exp.get("tightness")
    if tight is not None:
        # tightness_diagnostic needs one common binning; let the largest
        # volume pick the edges and reuse them for the rest.
        vols = list(exp["volumes"])
        measures: list = [None] * len(vols)
        edges = None
        for i in sorted(range(len(vols)), key=lambda j: -vols[j]):
            mu = estimate_invariant(model.with_volume(vols[i]),
                                    tight["burn_in"], tight["n_samples"],
                                    tight["thinning"], seed, h=h,
                                    scheme=scheme, edges=edges,
                                    threads=threads)
            if edges is None:
                edges = mu.edges
            measures[i] = mu
        tt = tightness_diagnostic(measures, weights, tight["eps_ladder"],
                                  model.drift)
        rows = [[eps, *outside, sup] for eps, outside, sup in
                zip(tt.eps_ladder, tt.outside, tt.sup)]
        write_csv(out.path("tightness.csv"),
                  ["eps"] + [f"outside_n{vol}" for vol in exp["volumes"]]
                  + ["sup"],
                  rows, provenance={"kind": "tightness", "seed": seed,
                                    "model": _model_hash(model)})
        headline["box_constant"] = tt.box_constant
        headline["tightness_sup"] = {
            str(eps): float(s) for eps, s in zip(tt.eps_ladder, tt.sup)}
    return headline


def _run_lyapunov(cfg, model, weights, seed, threads, out):
    exp = cfg["experiment"]
    theta = exp.get("theta", 1.0)
    if exp.get("shape", "unweighted") == "auxiliary":
        spec = auxiliary_spec(weights, model.volume, theta)
    else:
        spec = unweighted_spec(model.volume, theta)
    if "c" in exp:
        c, C = exp["c"], exp["C"]
    else:
        c, C = auto_constants(model, spec)
    probes = SampleSpec(count=exp.get("probe_count", 10_000),
                        radius=exp.get("probe_radius", 1.0e3),
                        seed=seed)
    report = drift_condition_check(model, spec, c, C, probes)
    payload = report.to_jsonable()
    payload["theta"] = theta
    payload["shape"] = exp.get("shape", "unweighted")
    write_json(out.path("drift_condition.json"), payload)
    return {"passed": report.passed, "max_violation": report.max_violation,
            "c": report.c, "C": report.C}


def _run_hormander(cfg, model, weights, seed, threads, out):
    exp = cfg["experiment"]
    method = exp.get("method", "both")
    methods = ("analytic", "numeric") if method == "both" else (method,)
    tol = exp.get("rank_tol")
    rows = []
    min_rank = model.volume + 1
    for idx, state in enumerate(exp["states"]):
        for name in methods:
            if name == "analytic":
                basis = bracket_basis_analytic(model, state)
            else:
                basis = bracket_basis_numeric(
                    model, state, fd_step=exp.get("fd_step", 1e-4))
            rank, full = (rank_check(basis) if tol is None
                          else rank_check(basis, tol))
            rows.append([idx, name, rank, full, model.volume + 1])
            min_rank = min(min_rank, rank)
    write_csv(out.path("bracket_ranks.csv"),
              ["state_index", "method", "rank", "full", "dimension"], rows,
              provenance={"kind": "hormander", "model": _model_hash(model)})
    return {"dimension": model.volume + 1, "min_rank": min_rank,
            "all_full": min_rank == model.volume + 1,
            "states": len(exp["states"])}


def _run_control(cfg, model, weights, seed, threads, out):
    exp = cfg["experiment"]
    x = np.asarray(exp["x"], dtype=float)
    z = np.asarray(exp["z"], dtype=float)
    T = exp["horizon"]
    jets = endpoint_jets(model, x, z, T)
    poly = hermite_interpolant(jets)
    grid = np.linspace(0.0, T, exp.get("grid_points", 2048))
    plan = back_substitute(model, poly, grid=grid)
    rk_step = exp.get("rk_step", 1e-4)
    error = verify_steering(model, x, z, T, plan, rk_step=rk_step)
    header = ["t", "u"] + [f"x{i}" for i in range(1, model.volume + 1)]
    rows = ([t, u] + list(row) for t, u, row in
            zip(plan.grid, plan.u, plan.states))
    write_csv(out.path("control.csv"), header, rows,
              provenance={"kind": "control", "horizon": T,
                          "model": _model_hash(model)})
    return {"horizon": T, "rk_step": rk_step,
            "endpoint_defect": plan.endpoint_defect(x, z),
            "residual": plan.residual(model),
            "steering_error": error}


def _run_periodic(cfg, model, weights, seed, threads, out):
    exp = cfg["experiment"]
    s = exp.get("s", 0.0)
    h = exp.get("h", 0.01)
    scheme = exp.get("scheme", "euler")
    bins = exp.get("bins", 64)
    x0 = exp.get("x0")
    mu_s = estimate_periodic_measure(model, s, exp["burn_cycles"],
                                     exp["cycles"], seed, h=h, scheme=scheme,
                                     x0=x0, bins=bins, threads=threads)
    _write_measure_csvs(out, "mu_s", mu_s)
    headline = {"period": model.period, "s": s, "samples": mu_s.count}
    transport = exp.get("transport")
    if transport is not None:
        mu_t = estimate_periodic_measure(model, transport["t"],
                                         exp["burn_cycles"], exp["cycles"],
                                         seed, h=h, scheme=scheme, x0=x0,
                                         bins=bins, threads=threads)
        _write_measure_csvs(out, "mu_t", mu_t)
        report = transport_check(model, s, transport["t"], mu_s, mu_t,
                                 transport["replicas"], seed, h=h,
                                 scheme=scheme, threads=threads)
        payload = report.to_jsonable()
        payload["within_2x"] = report.within()
        write_json(out.path("transport.json"), payload)
        headline["transport_gap"] = report.gap
        headline["transport_floor"] = report.noise_floor
        headline["transport_within_2x"] = report.within()
    phases = exp.get("phases")
    if phases is not None:
        avg = average_lift(model, phases, exp["cycles"], seed,
                           burn_cycles=exp["burn_cycles"], h=h,
                           scheme=scheme, x0=x0, bins=bins, threads=threads)
        manifest = write_phase_csvs(avg, out.directory)
        for entry in manifest["phases"]:
            out.add_existing(entry["file"])
        out.add_existing(manifest["mixture"])
        out.add_existing("phase_manifest.json")
        headline["phases"] = phases
        headline["phase_uniformity_p"] = manifest["phase_uniformity"]["p_value"]
    return headline


_RUNNERS = {
    "validate": _run_validate,
    "simulate": _run_simulate,
    "invariant": _run_invariant,
    "decay": _run_decay,
    "converge": _run_converge,
    "tails": _run_tails,
    "lyapunov": _run_lyapunov,
    "hormander": _run_hormander,
    "control": _run_control,
    "periodic": _run_periodic,
}


# ---------------------------------------------------------------------------
# run plumbing


def _resolve_threads(cli_value: Optional[int], cfg: dict) -> Optional[int]:
    if cli_value is not None:
        if cli_value < 1:
            raise ConfigError("--threads must be a positive integer")
        return cli_value
    if "threads" in cfg:
        return cfg["threads"]
    env = os.environ.get("LATTICESPIN_THREADS")
    if env is not None and env != "":
        try:
            value = int(env)
        except ValueError:
            value = 0
        if value < 1:
            raise ConfigError(
                f"LATTICESPIN_THREADS must be a positive integer, got {env!r}")
        return value
    return None


def _write_summary(outdir: str, *, status: str, kind: str, cfg_sha: str,
                   seed: int, threads: Optional[int], headline: dict,
                   files: list, wall: float, error: Optional[str] = None):
    obj = {
        "status": status,
        "experiment": kind,
        "config_sha256": cfg_sha,
        "seed": seed,
        "threads": threads if threads is not None else (os.cpu_count() or 1),
        "versions": {
            "latticespin": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
        "wall_time_s": wall,
        "headline": headline,
        "files": files,
    }
    if error is not None:
        obj["error"] = error
    write_json(os.path.join(outdir, "summary.json"), obj)


def _cmd_run(args: argparse.Namespace) -> int:
    try:
        with open(args.config, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        return _fail_config([_violation("(file)", str(exc))])
    try:
        cfg = json.loads(raw)
    except json.JSONDecodeError as exc:
        return _fail_config([_violation("(json)", str(exc))])

    violations = _schema_violations(cfg)
    if violations:
        return _fail_config(violations)

    violations = []
    model, weights = _build_model(cfg, violations)
    if violations:
        return _fail_config(violations)
    violations = _semantic_violations(cfg, model, weights)
    if violations:
        return _fail_config(violations)

    try:
        threads = _resolve_threads(args.threads, cfg)
    except ConfigError as exc:
        return _fail_config([_violation("threads", str(exc))])

    outdir = args.out if args.out is not None else cfg.get("out", ".")
    os.makedirs(outdir, exist_ok=True)
    seed = cfg["seed"]
    kind = cfg["experiment"]["kind"]
    cfg_sha = hashlib.sha256(raw).hexdigest()
    started = time.perf_counter()

    def summary(status, headline, files, error=None):
        _write_summary(outdir, status=status, kind=kind, cfg_sha=cfg_sha,
                       seed=seed, threads=threads, headline=headline,
                       files=files, wall=time.perf_counter() - started,
                       error=error)

    if kind in _NEEDS_VALID_MODEL:
        report = validate_assumptions(model, weights)
        if not report.passed:
            failed = [r.condition for r in report.records if not r.passed]
            summary("model-invalid", {"assumptions": report.to_jsonable()}, [])
            print(json.dumps({"error": "model-invalid", "conditions": failed},
                             indent=2, sort_keys=True))
            return _EXIT_INVALID_MODEL

    out = _Outputs(outdir)
    try:
        headline = _RUNNERS[kind](cfg, model, weights, seed, threads, out)
    except (BlowupError, EstimationError, ModelEvaluationError) as exc:
        summary("blowup", {}, out.files, error=str(exc))
        print(json.dumps({"error": "blowup", "message": str(exc)},
                         indent=2, sort_keys=True))
        return _EXIT_BLOWUP
    except (UsageError, NoClosedForm, ConfigError) as exc:
        summary("config-error", {}, out.files, error=str(exc))
        return _fail_config([_violation("experiment", str(exc))])
    summary("ok", headline, out.files)
    print(f"wrote {os.path.join(outdir, 'summary.json')}")
    return _EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="latticespin",
        description="Spin-chain experiment runner: one JSON config in, "
                    "CSV/JSON artifacts plus summary.json out.")
    sub = parser.add_subparsers(dest="command", required=True)
    run_p = sub.add_parser("run", help="execute one experiment config")
    run_p.add_argument("config", help="path to a JSON experiment config")
    run_p.add_argument("--out", metavar="DIR", default=None,
                       help="output directory (default: config's 'out', "
                            "else the working directory)")
    run_p.add_argument("--threads", metavar="N", type=int, default=None,
                       help="internal parallelism (default: config key, "
                            "else LATTICESPIN_THREADS, else all cores)")
    sub.add_parser("schema", help="print the config JSON schema and exit")
    args = parser.parse_args(argv)
    if args.command == "schema":
        sys.stdout.write(_schema_text())
        return _EXIT_OK
    return _cmd_run(args)


if __name__ == "__main__":
    raise SystemExit(main())
