"""Norms and field constructors.

Sobolev norms use the Bessel weight (1 + |k|^2)^m, which is equivalent to the
multi-index definition up to dimension-only constants and makes the
interpolation inequality ||u||_{H^m} <= ||u||_{H^{m-1}}^{1/2} ||u||_{H^{m+1}}^{1/2}
hold without slack. All norms are unnormalized integrals over the torus.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .spectral import SpectralGrid, VectorField

__all__ = [
    "NormReport",
    "sobolev_norm",
    "lebesgue_norm",
    "norm_report",
    "random_divfree_field",
    "taylor_green",
    "gn_ratios",
    "estimate_gn_constants",
]


@dataclass(frozen=True)
class NormReport:
    """Every norm the energy estimates use, for one velocity field.

    ``l6`` is the L6 norm of the velocity gradient and ``lip`` the grid max
    of its pointwise Frobenius norm.
    """

    l2: float
    h1: float
    h2: float
    h3: float
    l3: float
    l6: float
    lip: float

    def as_dict(self):
        return asdict(self)


def _sobolev(grid, coeffs, m):
    weight = (1.0 + grid.k2) ** m if m else 1.0
    total = np.sum(weight * (coeffs.real ** 2 + coeffs.imag ** 2))
    return float(np.sqrt(grid.volume * total))


def sobolev_norm(field, m):
    """Bessel-weight H^m norm, ((2 pi)^d sum_k (1+|k|^2)^m |u_k|^2)^(1/2)."""
    if m not in (0, 1, 2, 3):
        raise ValueError(f"Sobolev index must be 0..3, got {m}")
    return _sobolev(field.grid, field.coeffs, m)


def _pointwise_magnitude(grid, values):
    lead = values.ndim - grid.dim
    if lead == 0:
        return np.abs(values)
    return np.sqrt(np.sum(values * values, axis=tuple(range(lead))))


def _lebesgue(grid, values, p):
    mag = _pointwise_magnitude(grid, values)
    if p == "inf":
        return float(mag.max())
    return float((grid.cell_volume * np.sum(mag ** p)) ** (1.0 / p))


def lebesgue_norm(field, p):
    """Collocation-quadrature L^p norm.

    ``p`` is 2, 3, 6 or ``"inf"`` for the field itself, or ``"inf_grad"`` for
    the grid max of the Frobenius norm of the gradient (the Lipschitz
    seminorm used by the bootstrap conditions).
    """
    grid = field.grid
    if p == "inf_grad":
        grad = grid.physical_grad(field.coeffs)
        return _lebesgue(grid, grad, "inf")
    if p not in (2, 3, 6, "inf"):
        raise ValueError(f"unsupported Lebesgue exponent {p!r}")
    return _lebesgue(grid, field.physical(), p)


def norm_report(field):
    g, c = field.grid, field.coeffs
    u = g.to_physical(c)
    grad = g.physical_grad(c)
    return NormReport(
        l2=_sobolev(g, c, 0),
        h1=_sobolev(g, c, 1),
        h2=_sobolev(g, c, 2),
        h3=_sobolev(g, c, 3),
        l3=_lebesgue(g, u, 3),
        l6=_lebesgue(g, grad, 6),
        lip=_lebesgue(g, grad, "inf"),
    )


def random_divfree_field(grid, seed, spectrum_slope=-2.0, k_max=4, amplitude=1.0):
    """Seeded random mean-zero divergence-free velocity.

    Modes with 0 < |k| <= k_max get magnitude |k|^spectrum_slope and uniform
    random phases per component; the result is Leray-projected,
    symmetrized to a real field and scaled to L2 norm ``amplitude``.
    """
    if k_max > grid.k_retained:
        raise ValueError(f"k_max={k_max} exceeds the dealiasing range |k| <= {grid.k_retained}")
    if k_max < 1:
        raise ValueError("k_max must be at least 1")
    rng = np.random.default_rng(seed)
    kmag = np.sqrt(grid.k2)
    band = (kmag > 0) & (kmag <= k_max)
    shell = np.where(band, np.where(band, kmag, 1.0) ** spectrum_slope, 0.0)
    phases = rng.uniform(0.0, 2 * np.pi, size=(grid.dim,) + grid.shape)
    coeffs = shell * np.exp(1j * phases)
    coeffs = grid.symmetrize(grid.leray(coeffs))
    coeffs[(slice(None),) + (0,) * grid.dim] = 0.0
    norm = grid.l2(coeffs)
    if amplitude == 0 or norm == 0:
        coeffs = np.zeros_like(coeffs)
    else:
        coeffs *= amplitude / norm
    return VectorField(grid, coeffs, mean_zero=True, divergence_free=True)


def taylor_green(grid, amplitude=1.0):
    """Taylor-Green vortex a*(sin x cos y, -cos x sin y), z-independent in 3D.

    Built directly from its eight Fourier coefficients, so the divergence
    vanishes identically.
    """
    coeffs = np.zeros((grid.dim,) + grid.shape, dtype=complex)
    rest = (0,) * (grid.dim - 2)
    for k1 in (1, -1):
        for k2 in (1, -1):
            idx = (k1 % grid.n, k2 % grid.n) + rest
            # sin x cos y -> -i sgn(k1)/4 ; -cos x sin y -> i sgn(k2)/4
            coeffs[(0,) + idx] = -0.25j * k1 * amplitude
            coeffs[(1,) + idx] = 0.25j * k2 * amplitude
    return VectorField(grid, coeffs, mean_zero=True, divergence_free=True)


def gn_ratios(field):
    """Ratios whose suprema estimate the Gagliardo-Nirenberg constants.

    Keys: ``l3`` = ||u||_L3 / (||u||^1/2 ||u||_H1^1/2),
    ``l6_grad`` = ||grad u||_L6 / ||grad u||_H1,
    ``lip`` = Lip(u) / (||u||_H1^1/4 ||u||_H3^3/4),
    ``linf`` = ||u||_Linf / (||u||_H1^1/2 ||u||_H2^1/2).
    """
    g, c = field.grid, field.coeffs
    rep = norm_report(field)
    grad_h1 = _sobolev(g, g.grad(c), 1)
    linf = _lebesgue(g, g.to_physical(c), "inf")
    return {
        "l3": rep.l3 / np.sqrt(rep.l2 * rep.h1),
        "l6_grad": rep.l6 / grad_h1,
        "lip": rep.lip / (rep.h1 ** 0.25 * rep.h3 ** 0.75),
        "linf": linf / np.sqrt(rep.h1 * rep.h2),
    }


def estimate_gn_constants(grids=None, seeds=range(20), slopes=(-1.0, -2.0, -3.0), k_max=None):
    """Suite maxima of :func:`gn_ratios` over seeded random fields.

    The default suite is 2D n=32 and 3D n=16 grids, every seed and slope,
    with ``k_max`` defaulting to the dealiasing limit of each grid.
    """
    if grids is None:
        grids = (SpectralGrid(2, 32), SpectralGrid(3, 16))
    best = {}
    for grid in grids:
        km = grid.k_retained if k_max is None else k_max
        for slope in slopes:
            for seed in seeds:
                u = random_divfree_field(grid, seed, slope, km, 1.0)
                for key, val in gn_ratios(u).items():
                    best[key] = max(best.get(key, 0.0), float(val))
    return best
