import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import sin_x_field
from secondgrade import calibration, diagnostics as dg
from secondgrade.dynamics import SolverParams, simulate
from secondgrade.fields import random_divfree_field, taylor_green
from secondgrade.spectral import SpectralGrid, VectorField

PI = math.pi
S = math.sqrt(4 * PI ** 3)  # L2 norm of sin x on the 3D torus


def _zero(grid):
    return VectorField(grid, np.zeros((grid.dim,) + grid.shape, dtype=complex))


def _numpy_physical(grid, c):
    n, d = grid.n, grid.dim
    return np.real(np.fft.ifftn(c * n ** d, axes=tuple(range(c.ndim - d, c.ndim))))


def _quad_l2(grid, values):
    return math.sqrt(grid.cell_volume * float(np.sum(values ** 2)))


# -- functionals ---------------------------------------------------------------------


def test_e_alpha_sin_x(grid3):
    u = sin_x_field(grid3)
    assert dg.e_alpha(u, 0.3) == pytest.approx(4 * PI ** 3 * 1.3, rel=1e-13)


def test_f_functional_sin_x(grid3):
    u = sin_x_field(grid3)
    assert dg.f_functional(_zero(grid3), 0.5) == 0.0
    # alpha = 0: ||grad u|| + ||curl u||; the sqrt(alpha) term is absent
    assert dg.f_functional(u, 0.0) == pytest.approx(2 * S, rel=1e-13)
    # alpha = 0.25: S + 0.5 S + (1 + 0.25) S
    assert dg.f_functional(u, 0.25) == pytest.approx(2.75 * S, rel=1e-13)


def test_f_functional_matches_quadrature(grid3):
    alpha = 0.25
    u = random_divfree_field(grid3, 12, -1.0, 5, 2.0)
    c = u.coeffs
    n = grid3.n
    k1 = np.fft.fftfreq(n, 1.0 / n)
    K = np.meshgrid(k1, k1, k1, indexing="ij")
    k2 = K[0] ** 2 + K[1] ** 2 + K[2] ** 2
    grad = np.stack([_numpy_physical(grid3, 1j * K[j] * c[i]) for i in range(3) for j in range(3)])
    # divergence-free u: P Lap u = Lap u
    lap = _numpy_physical(grid3, -k2 * c)
    w = np.stack([1j * (K[1] * c[2] - K[2] * c[1]), 1j * (K[2] * c[0] - K[0] * c[2]),
                  1j * (K[0] * c[1] - K[1] * c[0])])
    w_alpha = _numpy_physical(grid3, (1 + alpha * k2) * w)
    expected = _quad_l2(grid3, grad) + math.sqrt(alpha) * _quad_l2(grid3, lap) + _quad_l2(grid3, w_alpha)
    assert dg.f_functional(u, alpha) == pytest.approx(expected, rel=1e-12)


def test_lemma1_ratio_sin_x(grid3):
    assert dg.lemma1_ratio(sin_x_field(grid3), 0.0) == pytest.approx(math.sqrt(2), rel=1e-13)
    with pytest.raises(ValueError):
        dg.lemma1_ratio(_zero(grid3), 0.1)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31), slope=st.floats(-3, 0), k_max=st.integers(1, 5))
def test_lemma1_ratio_alpha_zero_bounds(seed, slope, k_max):
    # mode-wise: F = 2||grad u|| and ||grad u|| <= ||u||_H1 <= sqrt(2)||grad u||
    u = random_divfree_field(SpectralGrid(3, 16), seed, slope, k_max, 1.0)
    r = dg.lemma1_ratio(u, 0.0)
    assert math.sqrt(2) * (1 - 1e-12) <= r <= 2 * (1 + 1e-12)
    assert 1 / math.sqrt(2) <= r <= 3


def test_h2_terms_vanish_for_taylor_green(grid2):
    convect, stretch = dg.h2_terms(taylor_green(grid2, 3.0), 0.4)
    assert abs(convect) <= 1e-12
    assert abs(stretch) <= 1e-12


# -- conditions -----------------------------------------------------------------------


def test_pointwise_conditions_zero(grid3):
    rep = dg.check_pointwise_conditions(_zero(grid3), 0.1, 1.0, 0.5, M=0.0)
    assert rep.ok and rep.lip_margin == 0 and rep.l3_margin == 0 and rep.grad_margin == 0


def test_pointwise_lip_margin_taylor_green(grid2):
    a = 2.0
    rep = dg.check_pointwise_conditions(taylor_green(grid2, a), 0.1, 1.0, 0.5)
    # Lip of Taylor-Green under the Frobenius norm is sqrt(2) a
    assert rep.lip_margin == pytest.approx(0.1 * math.sqrt(2) * a / 0.5, rel=1e-13)
    twice = dg.check_pointwise_conditions(taylor_green(grid2, 2 * a), 0.1, 1.0, 0.5)
    assert twice.lip_margin == pytest.approx(2 * rep.lip_margin, rel=1e-13)
    assert twice.l3_margin == pytest.approx(2 * rep.l3_margin, rel=1e-13)


def test_smallness_zero_holds(grid3):
    rep = dg.check_smallness(_zero(grid3), 0.1, 0.1, 0.5, K=1.0)
    assert rep.all_ok
    assert set(rep.margins) == set(dg.SMALLNESS_KEYS)


def test_smallness_alpha_limit_and_scaling(grid3):
    u = random_divfree_field(grid3, 2, -2.0, 4, 1.0)
    big = dg.check_smallness(u, 1e-2, 0.1, 0.5)
    small = dg.check_smallness(u, 1e-6, 0.1, 0.5)
    for key in dg.SMALLNESS_KEYS[1:]:
        assert small.margins[key] < big.margins[key]
    assert small.margins["small1"] == big.margins["small1"]
    zero = dg.check_smallness(u, 0.0, 0.1, 0.5)
    assert all(zero.margins[k] == 0 for k in dg.SMALLNESS_KEYS[1:])
    assert zero.note
    lam = dg.check_smallness(u.with_coeffs(3 * u.coeffs), 1e-2, 0.1, 0.5)
    assert lam.margins["small1"] == pytest.approx(9 * big.margins["small1"], rel=1e-12)
    assert lam.margins["hyplocal_h1"] == pytest.approx(3 * big.margins["hyplocal_h1"], rel=1e-12)
    assert big.K == calibration.K and big.epsilon1 == calibration.EPSILON1


def test_local_time_bound(grid3):
    u = random_divfree_field(grid3, 2, -2.0, 4, 1.0)
    h1 = math.sqrt(float(np.sum((1 + grid3.k2) * np.abs(u.coeffs) ** 2)) * grid3.volume)
    h2 = math.sqrt(float(np.sum((1 + grid3.k2) ** 2 * np.abs(u.coeffs) ** 2)) * grid3.volume)
    alpha = 0.04
    unit = u.with_coeffs(u.coeffs / (h1 + math.sqrt(alpha) * h2))
    assert dg.local_time_bound(unit, alpha, 1.0, 1.0) == pytest.approx(1.0, rel=1e-12)
    T = dg.local_time_bound(u, alpha, 0.3, 2.0)
    assert dg.local_time_bound(u.with_coeffs(2 * u.coeffs), alpha, 0.3, 2.0) == pytest.approx(T / 16, rel=1e-12)
    assert dg.local_time_bound(u, 1e-14, 0.3, 2.0) == pytest.approx(0.3 ** 3 / (2.0 * h1 ** 4), rel=1e-6)
    assert dg.local_time_bound(_zero(grid3), alpha, 0.3, 2.0) == math.inf


# -- cancellations -----------------------------------------------------------------------


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_cancellation_witnesses(seed):
    g = SpectralGrid(3, 16)
    u = random_divfree_field(g, seed, -1.0, 5, 1.0)
    w = random_divfree_field(g, seed + 1, -1.0, 5, 1.0)
    assert dg.transport_cancellation(u, w) <= 1e-12
    assert dg.gradient_cancellation(u, w) <= 1e-12


# -- trajectories ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def tg_traj():
    g = SpectralGrid(2, 32)
    p = SolverParams(alpha=0.1, nu=0.1, dt=1e-3, t_end=1.0, sample_every=10)
    return simulate(taylor_green(g, 1.0), p, dg.MonitorConstants(C_f=1 + 1e-9))


@pytest.fixture(scope="module")
def small_traj():
    g = SpectralGrid(3, 16)
    u0 = random_divfree_field(g, 11, -2.0, 4, 0.005 * math.sqrt(g.volume))
    p = SolverParams(alpha=0.01, nu=0.05, dt=2e-3, t_end=0.4, sample_every=5)
    return simulate(u0, p)


def test_zero_solution_residuals(grid3):
    traj = simulate(_zero(grid3), SolverParams(alpha=0.1, nu=0.1, dt=1e-2, t_end=0.05))
    assert np.all(dg.energy_identity_residual(traj) == 0)
    assert np.all(dg.h2_balance_residual(traj) == 0)
    assert all(dg.gronwall_check(traj)) and all(dg.final_bound_check(traj))


def test_taylor_green_energy_identity(tg_traj):
    assert dg.energy_identity_residual(tg_traj).max() <= 1e-7


def test_taylor_green_h2_balance(tg_traj):
    assert dg.h2_balance_residual(tg_traj)[1:-1].max() <= 1e-5


def test_taylor_green_gronwall_and_final_bound(tg_traj):
    assert all(dg.gronwall_check(tg_traj))
    assert all(dg.final_bound_check(tg_traj, C_f=1 + 1e-9))
    f = [r.f_value for r in tg_traj.records]
    assert all(b < a for a, b in zip(f, f[1:]))


def test_dissipation_integral_nondecreasing(tg_traj):
    d = [r.dissipation_integral for r in tg_traj.records]
    assert d[0] == 0 and all(b >= a for a, b in zip(d, d[1:]))
    assert all(r.e_alpha >= 0 for r in tg_traj.records)


def test_small_data_bootstrap(small_traj):
    assert all(dg.bootstrap_history(small_traj))
    assert all(dg.gronwall_check(small_traj))
    assert all(dg.final_bound_check(small_traj, C_f=3.0))


def test_energy_residual_refinement():
    g = SpectralGrid(2, 32)
    u0 = random_divfree_field(g, 5, -2.0, 6, 80.0)
    res = []
    for dt in (4e-3, 2e-3, 1e-3):
        p = SolverParams(alpha=0.01, nu=0.05, dt=dt, t_end=0.2, sample_every=int(round(0.02 / dt)))
        res.append(dg.energy_identity_residual(simulate(u0, p, keep_states=False)).max())
    assert res[0] / res[1] >= 8 and res[1] / res[2] >= 8


def test_h2_residual_first_order_in_spacing():
    g = SpectralGrid(2, 32)
    u0 = random_divfree_field(g, 5, -2.0, 6, 40.0)
    traj = simulate(u0, SolverParams(alpha=0.01, nu=0.05, dt=1e-3, t_end=0.2, sample_every=5), keep_states=False)
    fine = dg.h2_balance_residual(traj)[2:-2].max()
    coarse = dg.h2_balance_residual(traj, stride=2)[1:-1].max()
    assert coarse / fine >= 2


# -- serialization -------------------------------------------------------------------------


def test_csv_and_jsonl(tmp_path, small_traj):
    path = tmp_path / "t.csv"
    dg.write_records_csv(path, small_traj.records)
    raw = path.read_bytes()
    assert b"\r\n" not in raw
    lines = raw.decode().splitlines()
    assert lines[0].split(",") == list(dg.CSV_COLUMNS)
    assert len(lines) == len(small_traj.records) + 1
    first = dict(zip(dg.CSV_COLUMNS, lines[1].split(",")))
    assert float(first["e_alpha"]) == small_traj.records[0].e_alpha
    jl = tmp_path / "d.jsonl"
    dg.write_records_jsonl(jl, small_traj.records)
    rows = [json.loads(x) for x in jl.read_text().splitlines()]
    assert rows[-1]["time"] == small_traj.records[-1].time
    assert isinstance(rows[0]["cond_ok"], list)


def test_monitor_constants_validate():
    with pytest.raises(ValueError):
        dg.MonitorConstants(K=0.0)
    m = dg.MonitorConstants()
    assert m.epsilon == calibration.EPSILON and m.C_f == 3.0
