"""Time integration of the second-grade fluid equations on the torus.

Two equivalent evolved variables are supported:

* ``velocity``: v = u - alpha*Lap(u), with
  dv/dt = P[nu*Lap(u) - u.grad(v) - sum_j v_j grad(u_j)]
* ``curl``: w = curl(u) - alpha*Lap(curl(u)), with
  dw/dt = nu*Lap(curl u) - u.grad(w) + w.grad(u)   (stretching absent in 2D)

In both, u is recovered by inverting (1 - alpha*Lap) and the linear part is
the diagonal multiplier -nu|k|^2 / (1 + alpha|k|^2), integrated exactly by the
``if_rk4`` scheme. alpha = 0 is the Navier-Stokes equation.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import diagnostics
from .spectral import VectorField

__all__ = [
    "SolverParams",
    "SimState",
    "Trajectory",
    "BlowUpError",
    "CFLWarning",
    "initial_state",
    "rhs_velocity_form",
    "rhs_curl_form",
    "velocity_from_vorticity",
    "step",
    "simulate",
]

log = logging.getLogger(__name__)

BLOWUP_NORM = 1e12
FORMULATIONS = ("velocity", "curl")
INTEGRATORS = ("if_rk4", "imex_euler")


class BlowUpError(RuntimeError):
    """The solution became non-finite or exceeded the blow-up norm.

    Attributes
    ----------
    time : float
        Time of the last successfully completed step.
    record : DiagnosticsRecord or None
        The last diagnostics sample taken before the failure.
    trajectory : Trajectory or None
        Everything sampled up to the failure (set by :func:`simulate`).
    """

    def __init__(self, message, time, record=None, trajectory=None):
        super().__init__(message)
        self.time = time
        self.record = record
        self.trajectory = trajectory


class CFLWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class SolverParams:
    alpha: float
    nu: float
    dt: float
    t_end: float
    formulation: str = "velocity"
    integrator: str = "if_rk4"
    cfl_limit: float = 0.5
    sample_every: int = 1
    # test hook: drop the quadratic terms
    nonlinear: bool = True

    def __post_init__(self):
        if not 0 <= self.alpha <= 1:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if not self.nu > 0:
            raise ValueError(f"nu must be positive, got {self.nu}")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.t_end >= 0:
            raise ValueError(f"t_end must be non-negative, got {self.t_end}")
        if self.formulation not in FORMULATIONS:
            raise ValueError(f"formulation must be one of {FORMULATIONS}")
        if self.integrator not in INTEGRATORS:
            raise ValueError(f"integrator must be one of {INTEGRATORS}")
        if not self.cfl_limit > 0:
            raise ValueError("cfl_limit must be positive")
        if int(self.sample_every) != self.sample_every or self.sample_every < 1:
            raise ValueError("sample_every must be a positive integer")

    @property
    def n_steps(self):
        return int(round(self.t_end / self.dt))


@dataclass(frozen=True)
class SimState:
    """Evolved variable ``v`` plus the velocity ``u`` it determines.

    ``dissipated`` accumulates 2*nu*int_0^t ||grad u||^2 with the same
    Runge-Kutta stages that advance ``v``.
    """

    time: float
    v: VectorField
    u: VectorField
    dissipated: float = 0.0


@dataclass
class Trajectory:
    grid: object
    params: SolverParams
    times: list = field(default_factory=list)
    states: list = field(default_factory=list)
    records: list = field(default_factory=list)
    blowup: dict | None = None

    @property
    def final(self):
        return self.states[-1] if self.states else None


# -- building blocks --------------------------------------------------------------


def _linear_multiplier(grid, params):
    return -params.nu * grid.k2 / (1.0 + params.alpha * grid.k2)


def _velocity(grid, v, params):
    if params.formulation == "velocity":
        return grid.helmholtz(v, params.alpha)
    return grid.biot_savart(grid.helmholtz(v, params.alpha))


def initial_state(u0, params):
    """Map a velocity field to the evolved variable of the chosen formulation."""
    grid, c = u0.grid, u0.coeffs
    if params.formulation == "velocity":
        v = grid.inverse_helmholtz(c, params.alpha)
    else:
        v = grid.inverse_helmholtz(grid.curl(c), params.alpha)
    return _make_state(grid, 0.0, v, params, 0.0)


def _make_state(grid, time, v, params, dissipated):
    u = _velocity(grid, v, params)
    return SimState(
        time=time,
        v=VectorField(grid, v, divergence_free=params.formulation == "velocity" or grid.dim == 3),
        u=VectorField(grid, u, divergence_free=True),
        dissipated=dissipated,
    )


def _check_cfl(grid, uphys, params):
    umax = float(np.max(np.abs(uphys), initial=0.0))
    courant = params.dt * umax / (2 * np.pi / grid.n)
    if courant > params.cfl_limit:
        warnings.warn(f"CFL number {courant:.3g} exceeds limit {params.cfl_limit}",
                      CFLWarning, stacklevel=3)
    return courant


def _nonlinear_velocity(grid, v, params, check_cfl=False):
    """-P[u.grad(v) + sum_j v_j grad(u_j)], products dealiased."""
    u = grid.helmholtz(v, params.alpha)
    U = grid.to_physical(u)
    GU = grid.physical_grad(u)
    if params.alpha == 0:
        V, GV = U, GU
    else:
        V = grid.to_physical(v)
        GV = grid.physical_grad(v)
    if check_cfl:
        _check_cfl(grid, U, params)
    # GV[i, j] = d_j v_i
    prod = np.einsum("j...,ij...->i...", U, GV) + np.einsum("j...,ji...->i...", V, GU)
    return -grid.leray(grid.to_spectral(prod) * grid.dealias_mask)


def _nonlinear_curl(grid, w, params, check_cfl=False):
    """-u.grad(w) + w.grad(u), products dealiased; no stretching in 2D."""
    u = grid.biot_savart(grid.helmholtz(w, params.alpha))
    U = grid.to_physical(u)
    GW = grid.physical_grad(w)
    if check_cfl:
        _check_cfl(grid, U, params)
    if grid.dim == 2:
        prod = -np.einsum("j...,j...->...", U, GW)
    else:
        W = grid.to_physical(w)
        GU = grid.physical_grad(u)
        prod = -np.einsum("j...,ij...->i...", U, GW) + np.einsum("j...,ij...->i...", W, GU)
    return grid.to_spectral(prod) * grid.dealias_mask


def _nonlinear(grid, v, params, check_cfl=False):
    if not params.nonlinear:
        return np.zeros_like(v)
    if params.formulation == "velocity":
        return _nonlinear_velocity(grid, v, params, check_cfl)
    return _nonlinear_curl(grid, v, params, check_cfl)


def _tendency(state, params, formulation):
    if params.formulation != formulation:
        params = replace(params, formulation=formulation)
    grid, v = state.v.grid, state.v.coeffs
    out = _linear_multiplier(grid, params) * v + _nonlinear(grid, v, params)
    return state.v.with_coeffs(out)


def rhs_velocity_form(state, params):
    """Full tendency dv/dt of the velocity formulation at ``state``."""
    return _tendency(state, params, "velocity")


def rhs_curl_form(state, params):
    """Full tendency of the filtered vorticity w = curl u - alpha*Lap(curl u)."""
    return _tendency(state, params, "curl")


def velocity_from_vorticity(omega):
    """Fourier Biot-Savart: u_k = i k x w_k / |k|^2 (scalar w in 2D)."""
    grid, c = omega.grid, omega.coeffs
    mean = c[(Ellipsis,) + (0,) * grid.dim]
    if np.any(np.abs(mean) > 1e-12 * max(float(np.abs(c).max()), 1e-300)):
        raise ValueError("vorticity must have zero mean")
    return VectorField(grid, grid.biot_savart(c), mean_zero=True, divergence_free=True)


# -- stepping ---------------------------------------------------------------


def _dissipation_rate(grid, v, params):
    u = _velocity(grid, v, params)
    return 2.0 * params.nu * grid.volume * float(np.sum(grid.k2 * (u.real ** 2 + u.imag ** 2)))


def _if_rk4(grid, v, params):
    dt = params.dt
    E = np.exp(_linear_multiplier(grid, params) * (dt / 2))
    E2 = E * E
    s1 = v
    k1 = _nonlinear(grid, s1, params, check_cfl=True)
    s2 = E * (v + (dt / 2) * k1)
    k2 = _nonlinear(grid, s2, params)
    s3 = E * v + (dt / 2) * k2
    k3 = _nonlinear(grid, s3, params)
    s4 = E2 * v + dt * E * k3
    k4 = _nonlinear(grid, s4, params)
    v_new = E2 * v + (dt / 6) * (E2 * k1 + 2 * E * (k2 + k3) + k4)
    g = [_dissipation_rate(grid, s, params) for s in (s1, s2, s3, s4)]
    dissipated = (dt / 6) * (g[0] + 2 * g[1] + 2 * g[2] + g[3])
    return v_new, dissipated


def _imex_euler(grid, v, params):
    dt = params.dt
    L = _linear_multiplier(grid, params)
    v_new = (v + dt * _nonlinear(grid, v, params, check_cfl=True)) / (1.0 - dt * L)
    dissipated = 0.5 * dt * (_dissipation_rate(grid, v, params) + _dissipation_rate(grid, v_new, params))
    return v_new, dissipated


def step(state, params, n=None):
    """Advance one time step of size ``params.dt``.

    ``n`` is the index of the new step; when given, the new time is
    ``n * dt`` exactly rather than an accumulated sum.
    """
    grid = state.v.grid
    advance = _if_rk4 if params.integrator == "if_rk4" else _imex_euler
    with np.errstate(over="ignore", invalid="ignore"):
        v_new, dissipated = advance(grid, state.v.coeffs, params)
    v_new = grid.symmetrize(v_new)
    # the nonlinear terms have zero mean; drop the roundoff
    v_new[(Ellipsis,) + (0,) * grid.dim] = 0.0
    size = grid.l2(v_new)
    if not math.isfinite(size) or size > BLOWUP_NORM:
        raise BlowUpError(f"solution blew up after t={state.time:.6g} (norm {size:.3g})", state.time)
    time = state.time + params.dt if n is None else n * params.dt
    return _make_state(grid, time, v_new, params, state.dissipated + dissipated)


def simulate(initial, params, monitors=None, keep_states=True):
    """Integrate from ``initial`` velocity to ``params.t_end``.

    A :class:`DiagnosticsRecord` is taken at t=0, every ``sample_every``
    steps and at the final step. On blow-up the partial trajectory is
    finalized, attached to the raised :class:`BlowUpError` and re-raised.
    """
    grid = initial.grid
    if monitors is None:
        monitors = diagnostics.MonitorConstants()
    div = initial.divergence_defect() if initial.coeffs.shape[0] == grid.dim else np.inf
    if div > 1e-10:
        raise ValueError(f"initial velocity is not divergence-free (max |k.u_k|/|u_k| = {div:.3g})")
    mean = np.abs(initial.coeffs[(slice(None),) + (0,) * grid.dim]).max()
    if mean > 0:
        raise ValueError("initial velocity must have zero mean")

    traj = Trajectory(grid=grid, params=params)
    state = initial_state(initial, params)

    def sample(s):
        traj.times.append(s.time)
        traj.records.append(diagnostics.sample_record(s, params, monitors))
        if keep_states:
            traj.states.append(s)

    sample(state)
    nsteps = params.n_steps
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", CFLWarning)
        try:
            for i in range(1, nsteps + 1):
                try:
                    state = step(state, params, n=i)
                except BlowUpError as err:
                    diagnostics.finalize_records(traj.records, monitors)
                    err.record = traj.records[-1]
                    err.trajectory = traj
                    traj.blowup = {"time": err.time, "message": str(err)}
                    log.warning("%s", err)
                    raise
                if i % params.sample_every == 0 or i == nsteps:
                    sample(state)
        finally:
            cfl = [w for w in caught if issubclass(w.category, CFLWarning)]
            other = [w for w in caught if not issubclass(w.category, CFLWarning)]
    for w in other:
        warnings.warn_explicit(w.message, w.category, w.filename, w.lineno)
    if cfl:
        # one warning per run, not per step
        warnings.warn(f"{cfl[0].message} ({len(cfl)} steps over the limit)", CFLWarning, stacklevel=2)
    diagnostics.finalize_records(traj.records, monitors)
    return traj
