"""Binary checkpoints of a velocity field.

Layout, all little-endian::

    b"G2CK"  version:u32  dim:u32  n:u32  alpha:f64  nu:f64  time:f64
    dim * n**dim complex coefficients as (re, im) f64 pairs, row-major

The coefficients are the full-complex Fourier coefficients of u.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .spectral import SpectralGrid, VectorField

__all__ = ["MAGIC", "VERSION", "Checkpoint", "CheckpointError", "save_checkpoint", "load_checkpoint"]

MAGIC = b"G2CK"
VERSION = 1
_HEADER = struct.Struct("<4sIIIddd")


class CheckpointError(ValueError):
    pass


@dataclass(frozen=True)
class Checkpoint:
    velocity: VectorField
    alpha: float
    nu: float
    time: float
    version: int = VERSION

    @property
    def grid(self):
        return self.velocity.grid


def save_checkpoint(path, velocity, alpha, nu, time):
    grid = velocity.grid
    header = _HEADER.pack(MAGIC, VERSION, grid.dim, grid.n, float(alpha), float(nu), float(time))
    body = np.ascontiguousarray(velocity.coeffs, dtype="<c16").tobytes()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(body)


def load_checkpoint(path):
    """Read a checkpoint written by :func:`save_checkpoint`.

    Raises
    ------
    CheckpointError
        On a bad magic, unknown version, implausible header or a file
        shorter than its header promises ("truncated at byte N").
    """
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _HEADER.size:
        raise CheckpointError(f"{path}: truncated at byte {len(data)} (header needs {_HEADER.size})")
    magic, version, dim, n, alpha, nu, time = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise CheckpointError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    if dim not in (2, 3) or n < 8 or n % 2 or n > 4096:
        raise CheckpointError(f"{path}: implausible grid dim={dim} n={n}")
    count = dim * n ** dim
    expected = _HEADER.size + 16 * count
    if len(data) < expected:
        raise CheckpointError(f"{path}: truncated at byte {len(data)} (expected {expected})")
    if len(data) > expected:
        raise CheckpointError(f"{path}: {len(data) - expected} trailing bytes after byte {expected}")
    coeffs = np.frombuffer(data, dtype="<c16", count=count, offset=_HEADER.size)
    grid = SpectralGrid(dim, n)
    coeffs = coeffs.astype(complex).reshape((dim,) + grid.shape)
    return Checkpoint(VectorField(grid, coeffs, divergence_free=True), alpha, nu, time, version)
