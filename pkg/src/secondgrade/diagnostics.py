"""Monitors for the energy identities, a-priori bounds and smallness conditions.

Nothing here alters a solution: every check reads sampled states and reports
flags and margins. A margin is the ratio of the left side of an inequality
to its right side, so a condition holds iff its margin is at most 1.

Unknown domain constants (epsilon, epsilon_1, K, C_f) are runtime parameters;
the defaults live in :mod:`secondgrade.calibration`.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import calibration
from .fields import NormReport, norm_report

__all__ = [
    "MonitorConstants",
    "DiagnosticsRecord",
    "ConditionReport",
    "SmallnessReport",
    "CSV_COLUMNS",
    "e_alpha",
    "f_functional",
    "lemma1_ratio",
    "h2_terms",
    "sample_record",
    "finalize_records",
    "energy_identity_residual",
    "h2_balance_residual",
    "check_pointwise_conditions",
    "check_smallness",
    "bootstrap_history",
    "gronwall_check",
    "final_bound_check",
    "local_time_bound",
    "transport_cancellation",
    "gradient_cancellation",
    "write_records_csv",
    "write_records_jsonl",
    "write_table_csv",
    "jsonable",
]


@dataclass(frozen=True)
class MonitorConstants:
    epsilon: float = calibration.EPSILON
    epsilon1: float = calibration.EPSILON1
    K: float = calibration.K
    C_f: float = calibration.C_F
    gronwall_tol: float = 1e-6
    # bound on ||grad u||, only checked when set
    M: float | None = None

    def __post_init__(self):
        for name in ("epsilon", "epsilon1", "K", "C_f"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class DiagnosticsRecord:
    time: float
    norms: NormReport
    e_alpha: float
    dissipation_integral: float
    grad_l2: float
    pdelta_l2: float
    omega_alpha_l2: float
    f_value: float
    lemma1_ratio: float
    h2_energy: float
    h2_dissipation: float
    h2_rhs: float
    h2_scale: float
    cond_ok: tuple
    cond_margins: tuple
    h1_residual: float = float("nan")
    h2_lhs: float = float("nan")
    h2_residual: float = float("nan")
    cond_held: bool | None = None
    gronwall_ok: bool | None = None
    final_bound_ok: bool | None = None

    def row(self):
        """Flat mapping in :data:`CSV_COLUMNS` order."""
        d = {"time": self.time}
        for k, v in self.norms.as_dict().items():
            d[f"norm_{k}"] = v
        for f in fields(self):
            if f.name in ("time", "norms", "cond_ok", "cond_margins"):
                continue
            d[f.name] = getattr(self, f.name)
        d["cond_lip_ok"], d["cond_l3_ok"] = self.cond_ok
        d["cond_lip_margin"], d["cond_l3_margin"] = self.cond_margins
        return {c: d[c] for c in CSV_COLUMNS}

    def as_dict(self):
        d = asdict(self)
        d["cond_ok"] = list(self.cond_ok)
        d["cond_margins"] = list(self.cond_margins)
        return d


CSV_COLUMNS = (
    "time",
    "norm_l2", "norm_h1", "norm_h2", "norm_h3", "norm_l3", "norm_l6", "norm_lip",
    "e_alpha", "dissipation_integral", "h1_residual",
    "grad_l2", "pdelta_l2", "omega_alpha_l2", "f_value", "lemma1_ratio",
    "h2_energy", "h2_dissipation", "h2_lhs", "h2_rhs", "h2_scale", "h2_residual",
    "cond_lip_ok", "cond_l3_ok", "cond_lip_margin", "cond_l3_margin",
    "cond_held", "gronwall_ok", "final_bound_ok",
)


# -- functionals -------------------------------------------------------------


def _sq(grid, c):
    return grid.volume * float(np.sum(c.real ** 2 + c.imag ** 2))


def e_alpha(u, alpha):
    """||u||^2 + alpha ||grad u||^2."""
    g, c = u.grid, u.coeffs
    return _sq(g, c) + alpha * _sq(g, np.sqrt(g.k2) * c)


def _f_parts(grid, c, alpha):
    grad = math.sqrt(_sq(grid, np.sqrt(grid.k2) * c))
    pdelta = math.sqrt(_sq(grid, grid.leray(grid.laplacian(c))))
    omega_alpha = math.sqrt(_sq(grid, grid.inverse_helmholtz(grid.curl(c), alpha)))
    return grad, pdelta, omega_alpha


def f_functional(u, alpha):
    """||grad u|| + sqrt(alpha) ||P Lap u|| + ||curl u - alpha Lap curl u||."""
    grad, pdelta, omega_alpha = _f_parts(u.grid, u.coeffs, alpha)
    return grad + math.sqrt(alpha) * pdelta + omega_alpha


def lemma1_ratio(u, alpha):
    """F(u) / (||u||_H1 + alpha ||u||_H3); bounded above and below uniformly in alpha."""
    g, c = u.grid, u.coeffs
    denom = math.sqrt(_sq(g, np.sqrt(1 + g.k2) * c)) + alpha * math.sqrt(_sq(g, (1 + g.k2) ** 1.5 * c))
    if denom == 0:
        raise ValueError("lemma1_ratio is undefined for the zero field")
    return f_functional(u, alpha) / denom


def h2_terms(u, alpha):
    """The two right-hand integrals of the H^2 balance.

    Returns ``(int u.grad(u).w, -alpha int sum_j w_j grad(u_j).w)`` with
    w = P Lap u. The triple products are band-limited below the grid
    Nyquist frequency, so collocation quadrature is exact.
    """
    g, c = u.grid, u.coeffs
    U = g.to_physical(c)
    G = g.physical_grad(c)  # G[i, j] = d_j u_i
    W = g.to_physical(g.leray(g.laplacian(c)))
    convect = g.cell_volume * float(np.einsum("j...,ij...,i...->...", U, G, W).sum())
    stretch = g.cell_volume * float(np.einsum("j...,ji...,i...->...", W, G, W).sum())
    return convect, -alpha * stretch


# -- per-sample records ----------------------------------------------------------


def sample_record(state, params, monitors):
    """Diagnostics for one sampled :class:`SimState`.

    Fields that need the whole time series (residuals, Gronwall flags) are
    filled in by :func:`finalize_records`.
    """
    u = state.u
    g, c, alpha = u.grid, u.coeffs, params.alpha
    norms = norm_report(u)
    grad, pdelta, omega_alpha = _f_parts(g, c, alpha)
    f_value = grad + math.sqrt(alpha) * pdelta + omega_alpha
    denom = norms.h1 + alpha * norms.h3
    convect, stretch = h2_terms(u, alpha)
    cond = check_pointwise_conditions(u, alpha, params.nu, monitors.epsilon1, M=monitors.M, norms=norms)
    return DiagnosticsRecord(
        time=state.time,
        norms=norms,
        e_alpha=norms.l2 ** 2 + alpha * grad ** 2,
        dissipation_integral=state.dissipated,
        grad_l2=grad,
        pdelta_l2=pdelta,
        omega_alpha_l2=omega_alpha,
        f_value=f_value,
        lemma1_ratio=f_value / denom if denom > 0 else float("nan"),
        h2_energy=grad ** 2 + alpha * pdelta ** 2,
        h2_dissipation=params.nu * pdelta ** 2,
        h2_rhs=convect + stretch,
        h2_scale=params.nu * pdelta ** 2 + abs(convect) + abs(stretch),
        cond_ok=(cond.lip_ok, cond.l3_ok),
        cond_margins=(cond.lip_margin, cond.l3_margin),
    )


def _h2_balance(records):
    """Left side and relative residual of the H^2 balance per record."""
    times = np.array([r.time for r in records])
    energy = np.array([r.h2_energy for r in records])
    if len(records) >= 3:
        rate = np.gradient(energy, times, edge_order=2)
    elif len(records) == 2:
        rate = np.full(2, (energy[1] - energy[0]) / (times[1] - times[0]))
    else:
        rate = np.full(len(records), np.nan)
    lhs = [0.5 * float(dE) + r.h2_dissipation for r, dE in zip(records, rate)]
    res = []
    for r, left in zip(records, lhs):
        err = abs(left - r.h2_rhs)
        res.append(err / r.h2_scale if r.h2_scale > 0 else err)
    return lhs, res


def finalize_records(records, monitors=None):
    """Fill the time-series fields of ``records`` in place."""
    if not records:
        return records
    if monitors is None:
        monitors = MonitorConstants()
    e0 = records[0].e_alpha
    for r in records:
        r.h1_residual = abs(r.e_alpha + r.dissipation_integral - e0) / e0 if e0 > 0 else \
            abs(r.e_alpha + r.dissipation_integral - e0)
    for r, (lhs, res) in zip(records, zip(*_h2_balance(records))):
        r.h2_lhs, r.h2_residual = lhs, res
    for r, held in zip(records, _cond_history(records)):
        r.cond_held = held
    for r, ok in zip(records, _gronwall_flags(records, monitors.gronwall_tol)):
        r.gronwall_ok = ok
    for r, ok in zip(records, _final_bound_flags(records, monitors.C_f)):
        r.final_bound_ok = ok
    return records


def _records(trajectory):
    return trajectory.records if hasattr(trajectory, "records") else list(trajectory)


def energy_identity_residual(trajectory):
    """Relative defect of ||u||^2 + alpha||grad u||^2 + 2 nu int ||grad u||^2 = const."""
    return np.array([r.h1_residual for r in _records(trajectory)])


def h2_balance_residual(trajectory, stride=1):
    """Relative defect of the H^2 balance, time derivative by centered differences.

    ``stride`` > 1 recomputes the defect from every stride-th sample only,
    i.e. at a coarser sample spacing.
    """
    recs = _records(trajectory)
    if stride == 1:
        return np.array([r.h2_residual for r in recs])
    return np.array(_h2_balance(recs[::stride])[1])


# -- conditions ---------------------------------------------------------------


@dataclass(frozen=True)
class ConditionReport:
    lip_ok: bool
    l3_ok: bool
    grad_ok: bool | None
    lip_margin: float
    l3_margin: float
    grad_margin: float | None

    @property
    def ok(self):
        return self.lip_ok and self.l3_ok and self.grad_ok is not False


def check_pointwise_conditions(u, alpha, nu, epsilon1, M=None, norms=None):
    """alpha Lip(u) <= nu/2 and ||u||_L3 <= epsilon1 nu; optionally ||grad u|| <= M."""
    if norms is None:
        norms = norm_report(u)
    lip_margin = alpha * norms.lip / (nu / 2)
    l3_margin = norms.l3 / (epsilon1 * nu)
    grad_margin = None
    if M is not None:
        grad = math.sqrt(_sq(u.grid, np.sqrt(u.grid.k2) * u.coeffs))
        grad_margin = grad / M if M > 0 else (0.0 if grad == 0 else math.inf)
    return ConditionReport(
        lip_ok=lip_margin <= 1,
        l3_ok=l3_margin <= 1,
        grad_ok=None if grad_margin is None else grad_margin <= 1,
        lip_margin=lip_margin,
        l3_margin=l3_margin,
        grad_margin=grad_margin,
    )


SMALLNESS_KEYS = ("small1", "small2_l2h2", "small2_h1h2", "small2_h3", "hyplocal_h1", "hyplocal_h3")


@dataclass(frozen=True)
class SmallnessReport:
    small1_ok: bool
    small2_ok: tuple
    hyplocal_ok: tuple
    margins: dict
    epsilon: float
    epsilon1: float
    K: float
    note: str = ""

    @property
    def all_ok(self):
        return self.small1_ok and all(self.small2_ok) and all(self.hyplocal_ok)

    def as_dict(self):
        d = asdict(self)
        d["small2_ok"] = list(self.small2_ok)
        d["hyplocal_ok"] = list(self.hyplocal_ok)
        d["all_ok"] = self.all_ok
        return d


def check_smallness(u0, alpha, nu, epsilon, K=None, epsilon1=None):
    """Global-existence smallness conditions and the local-existence hypothesis.

    Margins, in :data:`SMALLNESS_KEYS` order:

    * ||u0|| ||u0||_H1 <= eps^2 nu^2
    * ||u0|| ||u0||_H2 <= eps^2 nu^2 alpha^-1/2
    * ||u0||_H1 ||u0||_H2 <= eps^2 nu^2 alpha^-1
    * ||u0||_H3 <= eps nu alpha^-5/4
    * ||u0||_H1 <= eps nu alpha^-1/4          (local hypothesis)
    * ||u0||_H3 <= eps nu alpha^-5/4          (local hypothesis)

    With alpha = 0 the alpha-weighted right sides are infinite and those
    conditions hold with margin 0.
    """
    l2, h1, h2, h3 = (float(np.sqrt(_sq(u0.grid, (1 + u0.grid.k2) ** (m / 2) * u0.coeffs)))
                      for m in range(4))
    e2n2 = (epsilon * nu) ** 2
    en = epsilon * nu

    def ratio(lhs, power):
        # lhs / (scale * alpha**-power) = lhs * alpha**power / scale
        return lhs * alpha ** power

    margins = {
        "small1": l2 * h1 / e2n2,
        "small2_l2h2": ratio(l2 * h2, 0.5) / e2n2,
        "small2_h1h2": ratio(h1 * h2, 1.0) / e2n2,
        "small2_h3": ratio(h3, 1.25) / en,
        "hyplocal_h1": ratio(h1, 0.25) / en,
        "hyplocal_h3": ratio(h3, 1.25) / en,
    }
    flags = {k: v <= 1 for k, v in margins.items()}
    return SmallnessReport(
        small1_ok=flags["small1"],
        small2_ok=(flags["small2_l2h2"], flags["small2_h1h2"], flags["small2_h3"]),
        hyplocal_ok=(flags["hyplocal_h1"], flags["hyplocal_h3"]),
        margins=margins,
        epsilon=epsilon,
        epsilon1=calibration.EPSILON1 if epsilon1 is None else epsilon1,
        K=calibration.K if K is None else K,
        note="alpha = 0: alpha-weighted conditions hold vacuously" if alpha == 0 else "",
    )


def _cond_history(records):
    held = True
    out = []
    for r in records:
        held = held and all(r.cond_ok)
        out.append(held)
    return out


def _gronwall_flags(records, tol=1e-6):
    if not records:
        return []
    w0 = records[0].omega_alpha_l2 ** 2
    sup_grad = 0.0
    out = []
    for r in records:
        sup_grad = max(sup_grad, r.grad_l2 ** 2)
        out.append(r.omega_alpha_l2 ** 2 <= (w0 + 4 * sup_grad) * (1 + tol))
    return out


def _final_bound_flags(records, C_f):
    if not records:
        return []
    f0 = records[0].f_value
    return [r.f_value <= C_f * f0 for r in records]


def bootstrap_history(trajectory):
    """Per sample: whether both bootstrap conditions have held at every sample so far.

    The Gronwall and final bounds are only claimed where this is true.
    """
    return _cond_history(_records(trajectory))


def gronwall_check(trajectory, tol=1e-6):
    """Per sample: ||w(t)||^2 <= (||w(0)||^2 + 4 sup_{s<=t} ||grad u(s)||^2)(1 + tol).

    w is the filtered vorticity. The inequality is evaluated at every
    sample; combine with :func:`bootstrap_history` for where it is claimed.
    """
    return _gronwall_flags(_records(trajectory), tol)


def final_bound_check(trajectory, C_f=3.0):
    """Per sample: F(t) <= C_f F(0)."""
    return _final_bound_flags(_records(trajectory), C_f)


def local_time_bound(u0, alpha, nu, K):
    """Guaranteed existence time nu^3 / (K (||u0||_H1 + sqrt(alpha) ||u0||_H2)^4).

    Returns ``math.inf`` for the zero field.
    """
    g, c = u0.grid, u0.coeffs
    h1 = math.sqrt(_sq(g, np.sqrt(1 + g.k2) * c))
    h2 = math.sqrt(_sq(g, (1 + g.k2) * c))
    size = h1 + math.sqrt(alpha) * h2
    if size == 0:
        return math.inf
    return nu ** 3 / (K * size ** 4)


# -- serialization ----------------------------------------------------------------


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, str):
        return value
    return format(float(value), ".17g")


def write_records_csv(path, records):
    """One row per sample, columns in :data:`CSV_COLUMNS` order, LF endings."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in records:
            writer.writerow([_fmt(v) for v in r.row().values()])


def write_table_csv(path, header, rows):
    """Generic CSV with the same number formatting as :func:`write_records_csv`."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def jsonable(value):
    """Recursively convert numpy scalars; non-finite floats become strings."""
    return _jsonable(value)


def _jsonable(value):
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (float, np.floating)):
        v = float(value)
        return v if math.isfinite(v) else repr(v)
    if isinstance(value, np.integer):
        return int(value)
    return value


def write_records_jsonl(path, records):
    with open(path, "w", newline="\n") as fh:
        for r in records:
            fh.write(json.dumps(_jsonable(r.as_dict()), sort_keys=False) + "\n")


# -- cancellation witnesses -------------------------------------------------------


def transport_cancellation(u, w):
    """Relative size of int (u.grad w).w, which vanishes for divergence-free u.

    Normalized by ||u||_Linf ||grad w|| ||w||.
    """
    g = u.grid
    U = g.to_physical(u.coeffs)
    W = g.to_physical(w.coeffs)
    GW = g.physical_grad(w.coeffs)
    integral = g.cell_volume * float(np.einsum("j...,ij...,i...->...", U, GW, W).sum())
    scale = (float(np.sqrt(np.sum(U * U, axis=0)).max())
             * math.sqrt(_sq(g, g.grad(w.coeffs))) * math.sqrt(_sq(g, w.coeffs)))
    return abs(integral) / scale if scale > 0 else abs(integral)


def gradient_cancellation(u, phi):
    """Relative size of <P(sum_j u_j grad u_j), phi>; the projected field is a pure gradient.

    Normalized by ||u||_Linf ||grad u|| ||phi||.
    """
    g = u.grid
    U = g.to_physical(u.coeffs)
    G = g.physical_grad(u.coeffs)
    prod = np.einsum("j...,ji...->i...", U, G)
    projected = g.leray(g.to_spectral(prod) * g.dealias_mask)
    value = g.inner(projected, phi.coeffs)
    scale = (float(np.sqrt(np.sum(U * U, axis=0)).max())
             * math.sqrt(_sq(g, g.grad(u.coeffs))) * math.sqrt(_sq(g, phi.coeffs)))
    return abs(value) / scale if scale > 0 else abs(value)
