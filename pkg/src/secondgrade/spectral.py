"""Fourier representation of fields on the periodic torus [0, 2pi)^d.

Fields are stored as full-complex coefficient arrays with the convention

    u(x) = sum_k u_hat[k] exp(i k.x)

so that ``u_hat = fftn(u) / n**d``. A coefficient array has shape
``leading + grid.shape``; ``leading`` is ``()`` for scalars, ``(d,)`` for
vectors and ``(d, d)`` for gradient tensors.

Every operator here is a diagonal Fourier multiplier, so they all commute
with each other.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

__all__ = [
    "GridSizeError",
    "SpectralGrid",
    "VectorField",
    "make_grid",
    "spectral_transform",
    "differentiate",
    "leray_project",
    "helmholtz_solve",
    "dealias",
    "resample",
]


class GridSizeError(ValueError):
    """Raised for unsupported grid sizes or mismatched array shapes."""


@dataclass(frozen=True, eq=False)
class SpectralGrid:
    """Uniform collocation grid on the torus with its wavenumber lattice.

    Parameters
    ----------
    dim : int
        Spatial dimension, 2 or 3.
    n : int
        Points per axis; even and at least 8.
    """

    dim: int
    n: int
    k: tuple = field(init=False, repr=False)
    k2: np.ndarray = field(init=False, repr=False)
    inv_k2: np.ndarray = field(init=False, repr=False)
    dealias_mask: np.ndarray = field(init=False, repr=False)
    _cache: dict = field(init=False, repr=False, default_factory=dict)

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise GridSizeError(f"dim must be 2 or 3, got {self.dim}")
        if self.n < 8 or self.n % 2:
            raise GridSizeError(f"n must be even and >= 8, got {self.n}")
        axis = np.fft.fftfreq(self.n, 1.0 / self.n)
        # Nyquist labelled +n/2 so the axis reads [-n/2+1, n/2]
        axis[self.n // 2] = self.n // 2
        k = np.meshgrid(*([axis] * self.dim), indexing="ij", sparse=True)
        k2 = sum(ki * ki for ki in k)
        with np.errstate(divide="ignore"):
            inv_k2 = np.where(k2 == 0, 0.0, 1.0 / np.where(k2 == 0, 1.0, k2))
        keep = np.abs(axis) <= self.n / 3
        mask = np.ones(self.shape, dtype=bool)
        for i in range(self.dim):
            shp = [1] * self.dim
            shp[i] = self.n
            mask = mask & keep.reshape(shp)
        object.__setattr__(self, "k", tuple(k))
        object.__setattr__(self, "k2", np.broadcast_to(k2, self.shape).copy())
        object.__setattr__(self, "inv_k2", np.broadcast_to(inv_k2, self.shape).copy())
        object.__setattr__(self, "dealias_mask", mask)
        m = self.n // 2 + 1
        object.__setattr__(self, "_ik_half", tuple(1j * ki[..., :m] for ki in k))

    @property
    def shape(self):
        return (self.n,) * self.dim

    @property
    def axes(self):
        return tuple(range(-self.dim, 0))

    @property
    def volume(self):
        return (2 * np.pi) ** self.dim

    @property
    def cell_volume(self):
        return (2 * np.pi / self.n) ** self.dim

    @property
    def wavenumbers(self):
        """The integer wavenumbers along one axis in storage order."""
        return self.k[0].ravel().astype(int)

    @property
    def k_retained(self):
        """Largest |k_i| kept by the 2/3 rule."""
        return self.n // 3

    def coordinates(self):
        """Collocation points, one broadcastable array per axis."""
        x = 2 * np.pi * np.arange(self.n) / self.n
        return np.meshgrid(*([x] * self.dim), indexing="ij", sparse=True)

    def check(self, coeffs):
        coeffs = np.asarray(coeffs)
        if coeffs.shape[coeffs.ndim - self.dim:] != self.shape:
            raise GridSizeError(
                f"array of shape {coeffs.shape} does not end in grid shape {self.shape}")
        return coeffs

    # -- transforms ---------------------------------------------------------

    def to_physical(self, coeffs):
        """Real physical-space samples of a Hermitian-symmetric coefficient array.

        Uses the half spectrum; the input is assumed Hermitian, which every
        operator in this package preserves.
        """
        m = self.n // 2 + 1
        half = coeffs[..., :m]
        return sfft.irfftn(half, s=self.shape, axes=self.axes, norm="forward")

    def physical_grad(self, coeffs):
        """Physical samples of ``grad(coeffs)`` without forming the full spectrum."""
        m = self.n // 2 + 1
        half = coeffs[..., :m]
        lead = half.shape[:half.ndim - self.dim]
        d = np.empty(lead + (self.dim,) + half.shape[-self.dim:], dtype=complex)
        for j, ik in enumerate(self._ik_half):
            np.multiply(ik, half, out=d[(Ellipsis, j) + (slice(None),) * self.dim])
        return sfft.irfftn(d, s=self.shape, axes=self.axes, norm="forward")

    def to_spectral(self, values):
        """Full-complex coefficients of a real physical-space array."""
        return sfft.fftn(values, axes=self.axes, norm="forward")

    def symmetrize(self, coeffs):
        """Project onto coefficients of real fields: (c_k + conj(c_{-k})) / 2."""
        rev = (-np.arange(self.n)) % self.n
        mirror = coeffs
        for ax in self.axes:
            mirror = np.take(mirror, rev, axis=ax)
        return 0.5 * (coeffs + np.conj(mirror))

    # -- multipliers on raw arrays ---------------------------------------------

    def grad(self, f):
        """Gradient; appends a leading axis indexing the derivative direction.

        For a vector ``u`` the result ``G`` has ``G[i, j] = d_j u_i``.
        """
        return np.stack([1j * ki * f for ki in self.k], axis=f.ndim - self.dim)

    def div(self, f):
        rest = (slice(None),) * self.dim
        return sum(1j * self.k[i] * f[(Ellipsis, i) + rest] for i in range(self.dim))

    def curl(self, f):
        k = self.k
        if self.dim == 2:
            return 1j * k[0] * f[1] - 1j * k[1] * f[0]
        return np.stack([
            1j * (k[1] * f[2] - k[2] * f[1]),
            1j * (k[2] * f[0] - k[0] * f[2]),
            1j * (k[0] * f[1] - k[1] * f[0]),
        ])

    def laplacian(self, f):
        return -self.k2 * f

    def leray(self, f):
        kdotf = sum(self.k[i] * f[i] for i in range(self.dim))
        return np.stack([f[i] - self.k[i] * kdotf * self.inv_k2 for i in range(self.dim)])

    def helmholtz(self, f, alpha):
        """Solve (1 - alpha*Laplacian) u = f."""
        if alpha == 0:
            return f.copy()
        key = ("helmholtz", alpha)
        if key not in self._cache:
            self._cache[key] = 1.0 / (1.0 + alpha * self.k2)
        return f * self._cache[key]

    def inverse_helmholtz(self, f, alpha):
        """Apply (1 - alpha*Laplacian)."""
        if alpha == 0:
            return f.copy()
        return f * (1.0 + alpha * self.k2)

    def biot_savart(self, omega):
        """Velocity whose curl is ``omega`` (scalar in 2D, vector in 3D)."""
        k = self.k
        if self.dim == 2:
            return np.stack([1j * k[1] * omega * self.inv_k2,
                             -1j * k[0] * omega * self.inv_k2])
        return self.curl(omega) * self.inv_k2

    def inner(self, f, g):
        """L2 inner product of the physical fields, summed over components."""
        return self.volume * np.vdot(f, g).real

    def l2(self, f):
        return np.sqrt(max(self.inner(f, f), 0.0))


def make_grid(dim, n):
    """Build a :class:`SpectralGrid`, rejecting odd or too-small ``n``."""
    return SpectralGrid(dim, n)


@dataclass(frozen=True, eq=False)
class VectorField:
    """Spectral coefficients of a real field together with its grid.

    ``coeffs`` has shape ``leading + grid.shape``. Scalar fields (2D
    vorticity) have empty ``leading``.
    """

    grid: SpectralGrid
    coeffs: np.ndarray
    mean_zero: bool = True
    divergence_free: bool = False

    def __post_init__(self):
        self.grid.check(self.coeffs)

    @classmethod
    def from_physical(cls, grid, values, **flags):
        return cls(grid, grid.to_spectral(np.asarray(values, dtype=float)), **flags)

    @property
    def n_components(self):
        return int(np.prod(self.coeffs.shape[:-self.grid.dim], dtype=int))

    def physical(self):
        return self.grid.to_physical(self.coeffs)

    def with_coeffs(self, coeffs, **flags):
        kw = {"mean_zero": self.mean_zero, "divergence_free": self.divergence_free}
        kw.update(flags)
        return VectorField(self.grid, coeffs, **kw)

    def hermitian_defect(self):
        """Max |c_k - conj(c_{-k})| relative to the largest coefficient."""
        scale = np.max(np.abs(self.coeffs), initial=0.0)
        if scale == 0:
            return 0.0
        sym = self.grid.symmetrize(self.coeffs)
        return float(2 * np.max(np.abs(self.coeffs - sym)) / scale)

    def divergence_defect(self):
        """max_k |k.u_k| relative to max_k |k| |u_k|.

        Measured against the largest mode rather than mode by mode so that
        roundoff-level coefficients do not dominate.
        """
        g = self.grid
        kdotu = np.abs(sum(g.k[i] * self.coeffs[i] for i in range(g.dim)))
        size = np.sqrt(g.k2 * sum(np.abs(self.coeffs[i]) ** 2 for i in range(g.dim)))
        scale = size.max(initial=0.0)
        if scale == 0:
            return 0.0
        return float(kdotu.max() / scale)


def resample(field, grid):
    """Copy the coefficients of ``field`` onto ``grid`` (zero-pad or truncate).

    Modes outside the 2/3 mask of the coarser grid are dropped so the result
    stays band-limited on both grids.
    """
    src = field.grid
    if src.dim != grid.dim:
        raise GridSizeError("cannot resample across dimensions")
    lead = field.coeffs.shape[:-src.dim]
    out = np.zeros(lead + grid.shape, dtype=complex)
    kc = min(src.k_retained, grid.k_retained)
    idx = np.r_[0:kc + 1, -kc:0]
    sel_src = np.ix_(*([idx % src.n] * src.dim))
    sel_dst = np.ix_(*([idx % grid.n] * grid.dim))
    out[(Ellipsis,) + sel_dst] = field.coeffs[(Ellipsis,) + sel_src]
    return VectorField(grid, out, mean_zero=field.mean_zero, divergence_free=field.divergence_free)


def spectral_transform(field, direction):
    """Move between spectral coefficients and physical samples.

    ``direction="to_physical"`` takes a :class:`VectorField` and returns real
    samples; ``direction="to_spectral"`` takes ``(grid, values)`` and returns a
    :class:`VectorField`.
    """
    if direction == "to_physical":
        return field.physical()
    if direction == "to_spectral":
        grid, values = field
        values = grid.check(values)
        return VectorField.from_physical(grid, values, mean_zero=False)
    raise ValueError(f"unknown direction {direction!r}")


def differentiate(field, kind):
    """Exact Fourier-multiplier derivatives: ``grad``, ``div``, ``curl``, ``laplacian``.

    ``grad`` of a vector returns the tensor ``G[i, j] = d_j u_i``. In 2D ``curl`` returns the scalar ik1*u2 - ik2*u1.
    """
    g, c = field.grid, field.coeffs
    lead = c.shape[:c.ndim - g.dim]
    if kind == "grad":
        return field.with_coeffs(g.grad(c), divergence_free=False)
    if kind == "laplacian":
        return field.with_coeffs(g.laplacian(c))
    if kind in ("div", "curl") and lead != (g.dim,):
        raise ValueError(f"{kind} needs a {g.dim}-component vector field, got leading shape {lead}")
    if kind == "div":
        return field.with_coeffs(sum(1j * g.k[i] * c[i] for i in range(g.dim)), divergence_free=False)
    if kind == "curl":
        return field.with_coeffs(g.curl(c), divergence_free=g.dim == 3)
    raise ValueError(f"unknown derivative kind {kind!r}")


def leray_project(field):
    """L2-orthogonal projection onto divergence-free fields; mean mode passes through."""
    g = field.grid
    if field.coeffs.shape[:-g.dim] != (g.dim,):
        raise GridSizeError("Leray projection needs a vector field")
    return field.with_coeffs(g.leray(field.coeffs), divergence_free=True)


def helmholtz_solve(field, alpha):
    """Invert (1 - alpha*Laplacian) mode by mode."""
    if alpha < 0:
        raise ValueError(f"alpha must be non-negative, got {alpha}")
    return field.with_coeffs(field.grid.helmholtz(field.coeffs, alpha))


def dealias(field):
    """Zero every mode outside the 2/3-rule mask."""
    return field.with_coeffs(field.coeffs * field.grid.dealias_mask)
