"""Experiment drivers: alpha sweeps, existence-time probes and validation runs.

Every report is a plain dataclass with ``as_dict``; timing information is
kept in separate attributes so serialized reports are byte-deterministic.
"""
from __future__ import annotations

import json
import logging
import math
import time as _time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import diagnostics
from .dynamics import BlowUpError, SolverParams, simulate
from .fields import random_divfree_field, taylor_green
from .spectral import SpectralGrid, VectorField, resample

__all__ = [
    "SweepReport",
    "ProbeReport",
    "run_alpha_sweep",
    "threshold_probe",
    "validate_taylor_green",
    "refinement_study",
    "trajectory_summary",
    "standard_suite",
    "CALIBRATION_SUITE",
    "calibration_field",
    "calibrate_k",
    "verify_identities",
    "operator_checks",
    "empirical_orders",
    "write_json",
]

log = logging.getLogger(__name__)


# -- small helpers ---------------------------------------------------------------


def empirical_orders(errors, steps):
    """Pairwise slopes log(e_i/e_{i+1}) / log(s_i/s_{i+1}); None where undefined."""
    out = []
    for (e0, e1), (s0, s1) in zip(zip(errors, errors[1:]), zip(steps, steps[1:])):
        if e0 is None or e1 is None or not (e0 > 0 and e1 > 0) or s0 == s1:
            out.append(None)
        else:
            out.append(math.log(e0 / e1) / math.log(s0 / s1))
    return out


def _finite_max(values):
    vals = [v for v in values if v is not None and math.isfinite(v)]
    return max(vals) if vals else None


def _finite_range(values):
    vals = [v for v in values if v is not None and math.isfinite(v)]
    return [min(vals), max(vals)] if vals else None


def trajectory_summary(traj):
    """Monitor summary of one run, JSON-ready."""
    recs = traj.records
    held = diagnostics.bootstrap_history(traj) if recs else []
    interior = recs[1:-1] if len(recs) > 2 else recs
    return {
        "n_samples": len(recs),
        "t_final": recs[-1].time if recs else None,
        "blowup": traj.blowup,
        "h1_residual_max": _finite_max(r.h1_residual for r in recs),
        "h2_residual_max": _finite_max(r.h2_residual for r in interior),
        "lemma1_ratio_range": _finite_range(r.lemma1_ratio for r in recs),
        "cond_held_all": bool(all(held)),
        "gronwall_ok": bool(all(r.gronwall_ok for r in recs)),
        "final_bound_ok": bool(all(r.final_bound_ok for r in recs)),
        "grad_l2_max": _finite_max(r.grad_l2 for r in recs),
    }


def write_json(path, payload):
    """Deterministic JSON: sorted keys, fixed indent, LF line ending.

    Non-finite floats are written as the strings "inf", "nan".
    """
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(diagnostics.jsonable(payload), fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def _run(u0, params, monitors, keep_states=True):
    """simulate() that returns the partial trajectory on blow-up."""
    try:
        return simulate(u0, params, monitors, keep_states=keep_states)
    except BlowUpError as err:
        return err.trajectory


# -- alpha sweep ----------------------------------------------------------------


@dataclass
class SweepReport:
    """Errors sup_t ||u_alpha(t) - u_0(t)|| against the alpha = 0 run.

    ``errors[i]`` is None when run ``i`` blew up. ``wall_times`` is excluded
    from :meth:`as_dict` so the serialized report is deterministic.
    """

    alphas: list
    errors: list
    empirical_orders: list
    summaries: list
    reference_summary: dict
    params: dict
    wall_times: dict = field(default_factory=dict)

    def as_dict(self):
        d = asdict(self)
        d.pop("wall_times")
        return d


def _sweep_member(payload):
    dim, n, coeffs, params, monitors = payload
    grid = SpectralGrid(dim, n)
    u0 = VectorField(grid, coeffs, divergence_free=True)
    start = _time.perf_counter()
    traj = _run(u0, params, monitors)
    wall = _time.perf_counter() - start
    series = [s.u.coeffs for s in traj.states]
    return traj.times, series, trajectory_summary(traj), wall


def run_alpha_sweep(u0, alphas, params, monitors=None, workers=1):
    """Run ``u0`` for each alpha and for alpha = 0 with otherwise identical ``params``.

    Parameters
    ----------
    alphas : sequence of float
        Strictly decreasing, positive.
    workers : int
        Process count; 1 runs everything in-process.
    """
    alphas = [float(a) for a in alphas]
    if not alphas or any(a <= 0 for a in alphas):
        raise ValueError("alphas must be positive")
    if any(a1 >= a0 for a0, a1 in zip(alphas, alphas[1:])):
        raise ValueError("alphas must be strictly decreasing")
    if monitors is None:
        monitors = diagnostics.MonitorConstants()
    grid = u0.grid
    jobs = [(grid.dim, grid.n, u0.coeffs, replace(params, alpha=a), monitors) for a in [0.0] + alphas]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            results = list(pool.map(_sweep_member, jobs))
    else:
        results = [_sweep_member(j) for j in jobs]

    ref_times, ref_series, ref_summary, ref_wall = results[0]
    errors, summaries, walls = [], [], {"0": ref_wall}
    for a, (times, series, summary, wall) in zip(alphas, results[1:]):
        walls[repr(a)] = wall
        summaries.append(summary)
        if summary["blowup"] is not None or ref_summary["blowup"] is not None:
            errors.append(None)
            continue
        if len(times) != len(ref_times):
            raise RuntimeError("sweep members sampled at different times")
        errors.append(max(grid.l2(s - r) for s, r in zip(series, ref_series)))
    params_d = asdict(params)
    params_d.pop("alpha")
    return SweepReport(
        alphas=alphas,
        errors=errors,
        empirical_orders=empirical_orders(errors, alphas),
        summaries=summaries,
        reference_summary=ref_summary,
        params=params_d,
        wall_times=walls,
    )


# -- local existence probe --------------------------------------------------------


@dataclass
class ProbeReport:
    """Achieved monitor horizon against the guaranteed existence time.

    The horizon is the last sample time up to which ||grad u|| <= M held at
    every sample, with M = 2 sqrt(3) max(||grad u0||, sqrt(alpha) ||P Lap u0||).
    ``horizon_ok`` compares it with min(predicted_T, t_end); a blow-up before
    that time also fails the comparison.
    """

    amplitudes: list
    outcomes: list
    predicted_T: list
    horizons: list
    horizon_ok: list
    bounds_M: list
    lip_ok_all: list
    smallness: list
    first_failure_amplitude: float | None
    alpha: float
    nu: float
    K: float
    t_end: float

    def as_dict(self):
        return asdict(self)


def _probe_bound(u0, alpha):
    g, c = u0.grid, u0.coeffs
    grad, pdelta, _ = diagnostics._f_parts(g, c, alpha)
    return 2.0 * math.sqrt(3.0) * max(grad, math.sqrt(alpha) * pdelta)


def threshold_probe(base_field, amplitudes, alpha, nu, params, monitors=None):
    """Scale ``base_field`` to each amplitude (relative factor) and run it.

    ``params`` supplies dt, t_end and sampling; its alpha and nu are replaced.
    """
    amplitudes = [float(a) for a in amplitudes]
    if any(a1 <= a0 for a0, a1 in zip(amplitudes, amplitudes[1:])):
        raise ValueError("amplitudes must be increasing")
    if any(a < 0 for a in amplitudes):
        raise ValueError("amplitudes must be non-negative")
    if monitors is None:
        monitors = diagnostics.MonitorConstants()
    params = replace(params, alpha=alpha, nu=nu)
    rep = ProbeReport([], [], [], [], [], [], [], [], None, alpha, nu, monitors.K, params.t_end)
    for amp in amplitudes:
        u0 = base_field.with_coeffs(amp * base_field.coeffs)
        T = diagnostics.local_time_bound(u0, alpha, nu, monitors.K)
        M = _probe_bound(u0, alpha)
        small = diagnostics.check_smallness(u0, alpha, nu, monitors.epsilon, monitors.K, monitors.epsilon1)
        traj = _run(u0, params, replace(monitors, M=M if M > 0 else None), keep_states=False)
        horizon = 0.0
        for r in traj.records:
            if M > 0 and r.grad_l2 > M:
                break
            horizon = r.time
        violated = M > 0 and any(r.grad_l2 > M for r in traj.records)
        if traj.blowup is not None:
            outcome = "blew_up"
        elif violated:
            outcome = "monitors_violated"
        else:
            outcome = "completed"
        target = min(T, params.t_end)
        ok = horizon >= target * (1 - 1e-12)
        if outcome != "completed" and rep.first_failure_amplitude is None:
            rep.first_failure_amplitude = amp
        rep.amplitudes.append(amp)
        rep.outcomes.append(outcome)
        rep.predicted_T.append(T)
        rep.horizons.append(horizon)
        rep.horizon_ok.append(bool(ok))
        rep.bounds_M.append(M)
        rep.lip_ok_all.append(bool(all(r.cond_ok[0] for r in traj.records)))
        rep.smallness.append(small.as_dict())
        log.info("probe amplitude %.3g: %s, horizon %.4g, predicted %.4g", amp, outcome, horizon, T)
    return rep


# -- calibration of K --------------------------------------------------------------

CALIBRATION_SUITE = {
    "dim": 3,
    "n": 16,
    "seed": 0,
    "slope": -2.0,
    "k_max": 3,
    "base_rms": 1.0,
    "amplitudes": (0.01, 0.1, 1.0, 10.0, 100.0),
    "alpha": 0.01,
    "nu": 0.05,
    "dt": 2e-3,
    "t_end": 0.5,
    "sample_every": 5,
}


def calibration_field(suite=None):
    """Base field of the calibration suite, scaled to rms velocity ``base_rms``."""
    s = CALIBRATION_SUITE if suite is None else suite
    grid = SpectralGrid(s["dim"], s["n"])
    amp = s["base_rms"] * math.sqrt(grid.volume)
    return random_divfree_field(grid, s["seed"], s["slope"], s["k_max"], amp)


def calibration_probe(K=None, suite=None):
    s = CALIBRATION_SUITE if suite is None else suite
    monitors = diagnostics.MonitorConstants() if K is None else diagnostics.MonitorConstants(K=K)
    params = SolverParams(alpha=s["alpha"], nu=s["nu"], dt=s["dt"], t_end=s["t_end"],
                          sample_every=s["sample_every"])
    return threshold_probe(calibration_field(s), s["amplitudes"], s["alpha"], s["nu"], params, monitors)


def calibrate_k(suite=None):
    """Smallest K (two significant digits, rounded up) meeting the horizon on the suite.

    With K = 1 the probe gives T1 per amplitude; K must satisfy
    T1 / K <= horizon wherever the horizon falls short of t_end.
    """
    s = CALIBRATION_SUITE if suite is None else suite
    rep = calibration_probe(K=1.0, suite=s)
    need = 1.0
    for T1, h in zip(rep.predicted_T, rep.horizons):
        if min(T1, s["t_end"]) > h:
            need = max(need, math.inf if h == 0 else T1 / h)
    if not math.isfinite(need):
        return need, rep
    digits = 10 ** (math.floor(math.log10(need)) - 1)
    return math.ceil(need / digits) * digits, rep


# -- validation ------------------------------------------------------------------


def validate_taylor_green(alpha, nu, n, dt, t_end=1.0, integrator="if_rk4", amplitude=1.0,
                          sample_every=10):
    """2D Taylor-Green run against u0 exp(-2 nu t / (1 + 2 alpha))."""
    grid = SpectralGrid(2, n)
    u0 = taylor_green(grid, amplitude)
    params = SolverParams(alpha=alpha, nu=nu, dt=dt, t_end=t_end, integrator=integrator,
                          sample_every=sample_every)
    start = _time.perf_counter()
    traj = simulate(u0, params)
    wall = _time.perf_counter() - start
    rate = 2.0 * nu / (1.0 + 2.0 * alpha)
    norm0 = grid.l2(u0.coeffs)
    errors = [grid.l2(s.u.coeffs - math.exp(-rate * t) * u0.coeffs) / (math.exp(-rate * t) * norm0)
              for t, s in zip(traj.times, traj.states)]
    return {
        "alpha": alpha, "nu": nu, "n": n, "dt": dt, "t_end": t_end, "integrator": integrator,
        "times": list(traj.times),
        "errors": errors,
        "max_rel_error": max(errors),
        "summary": trajectory_summary(traj),
        "records": [r.as_dict() for r in traj.records],
        "wall_time": wall,
        "trajectory": traj,
    }


def _common_error(a, b):
    """L2 distance of two velocities on the coarser of their grids."""
    coarse = a.grid if a.grid.n <= b.grid.n else b.grid
    return coarse.l2(resample(a, coarse).coeffs - resample(b, coarse).coeffs)


def refinement_study(u0, params, levels, monitors=None):
    """Residuals and cross-formulation gaps over (n, dt) refinement levels.

    ``levels`` is a sequence of (n, dt) pairs from coarse to fine. The
    trajectory error of each level is its final velocity against the finest
    level (zero there by construction). Sampling keeps a fixed time spacing,
    so ``params.sample_every`` refers to the first level's dt.
    """
    if monitors is None:
        monitors = diagnostics.MonitorConstants()
    levels = [(int(n), float(dt)) for n, dt in levels]
    spacing = params.sample_every * levels[0][1]
    rows, finals = [], []
    for n, dt in levels:
        grid = SpectralGrid(u0.grid.dim, n)
        start = resample(u0, grid)
        every = max(1, int(round(spacing / dt)))
        p = replace(params, dt=dt, sample_every=every)
        vel = simulate(start, replace(p, formulation="velocity"), monitors)
        curl = simulate(start, replace(p, formulation="curl"), monitors)
        gap = max(grid.l2(a.u.coeffs - b.u.coeffs) for a, b in zip(vel.states, curl.states))
        summary = trajectory_summary(vel)
        finals.append(vel.final.u)
        rows.append({"n": n, "dt": dt, "h1_residual": summary["h1_residual_max"] or 0.0,
                     "h2_residual": summary["h2_residual_max"] or 0.0, "formulation_gap": gap})
    for row, final in zip(rows, finals):
        row["trajectory_error"] = _common_error(final, finals[-1])
    dts = [r["dt"] for r in rows]
    orders = {key: empirical_orders([r[key] for r in rows], dts)
              for key in ("h1_residual", "h2_residual", "formulation_gap")}
    orders["trajectory_error"] = empirical_orders([r["trajectory_error"] for r in rows[:-1]], dts[:-1])
    return {"levels": rows, "orders": orders}


# -- standard suite --------------------------------------------------------------

# (name, seed, rms velocity); rms 0 marks the Taylor-Green member
SUITE_MEMBERS = (
    ("taylor_green", None, 1.0),
    ("random_small", 11, 0.005),
    ("random_medium", 12, 1.5),
    ("random_large", 13, 2.5),
)
SUITE_K_MAX = 4


def standard_suite(dim, n):
    """Taylor-Green plus three seeded random fields of increasing size.

    Returns a list of (name, velocity) pairs; random fields have slope -2,
    k_max 4 and the stated rms velocity.
    """
    grid = SpectralGrid(dim, n)
    out = []
    for name, seed, rms in SUITE_MEMBERS:
        if seed is None:
            out.append((name, taylor_green(grid, rms)))
        else:
            amp = rms * math.sqrt(grid.volume)
            out.append((name, random_divfree_field(grid, seed, -2.0, SUITE_K_MAX, amp)))
    return out


# -- identity verification ---------------------------------------------------------


def operator_checks(grid, n_fields, seed):
    """Worst relative Leray divergence, Helmholtz round trip and P/Lap commutator.

    Fields are seeded generic (non-solenoidal) dealiased vectors; each gets
    its own log-uniform alpha in [1e-4, 1].
    """
    rng = np.random.default_rng(seed)
    worst = {"leray_divergence": 0.0, "helmholtz_roundtrip": 0.0, "leray_laplacian_commutator": 0.0}
    for _ in range(n_fields):
        raw = rng.standard_normal((grid.dim,) + grid.shape)
        c = grid.to_spectral(raw) * grid.dealias_mask
        c[(slice(None),) + (0,) * grid.dim] = 0.0
        alpha = float(10 ** rng.uniform(-4, 0))
        p = grid.leray(c)
        knorm = np.sqrt(grid.k2)
        div = np.abs(grid.div(p)).max() / max(float((knorm * np.abs(p)).max()), 1e-300)
        back = grid.helmholtz(grid.inverse_helmholtz(c, alpha), alpha)
        rt = np.abs(back - c).max() / np.abs(c).max()
        comm = grid.leray(grid.laplacian(c)) - grid.laplacian(grid.leray(c))
        cm = np.abs(comm).max() / max(float(np.abs(grid.laplacian(c)).max()), 1e-300)
        worst["leray_divergence"] = max(worst["leray_divergence"], float(div))
        worst["helmholtz_roundtrip"] = max(worst["helmholtz_roundtrip"], float(rt))
        worst["leray_laplacian_commutator"] = max(worst["leray_laplacian_commutator"], float(cm))
    return worst


def verify_identities(u0, params, monitors=None, n_fields=20, seed=0):
    """Operator exactness, cancellation witnesses and the energy balances for one run.

    Returns a JSON-ready dict of worst-case values plus pass flags at the
    default tolerances.
    """
    if monitors is None:
        monitors = diagnostics.MonitorConstants()
    grid = u0.grid
    ops = operator_checks(grid, n_fields, seed)
    w = random_divfree_field(grid, seed + 1, -1.0, grid.k_retained, 1.0)
    phi = random_divfree_field(grid, seed + 2, -1.0, grid.k_retained, 1.0)
    cancel = {
        "transport": diagnostics.transport_cancellation(u0, w) if grid.l2(u0.coeffs) > 0 else 0.0,
        "gradient": diagnostics.gradient_cancellation(u0, phi) if grid.l2(u0.coeffs) > 0 else 0.0,
    }
    traj = _run(u0, params, monitors, keep_states=False)
    summary = trajectory_summary(traj)
    checks = {
        "leray_divergence": ops["leray_divergence"] <= 1e-12,
        "helmholtz_roundtrip": ops["helmholtz_roundtrip"] <= 1e-13,
        "leray_laplacian_commutator": ops["leray_laplacian_commutator"] <= 1e-12,
        "transport_cancellation": cancel["transport"] <= 1e-10,
        "gradient_cancellation": cancel["gradient"] <= 1e-10,
        "energy_identity": (summary["h1_residual_max"] or 0.0) <= 1e-6,
        "h2_balance": (summary["h2_residual_max"] or 0.0) <= 1e-3,
        "gronwall": summary["gronwall_ok"] or not summary["cond_held_all"],
        "final_bound": summary["final_bound_ok"] or not summary["cond_held_all"],
        "no_blowup": traj.blowup is None,
    }
    return {"operators": ops, "cancellation": cancel, "run": summary, "checks": checks,
            "passed": bool(all(checks.values()))}
