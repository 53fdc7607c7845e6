import warnings

import numpy as np
import pytest

from secondgrade.dynamics import CFLWarning
from secondgrade.spectral import SpectralGrid, VectorField


@pytest.fixture(autouse=True)
def _quiet_cfl():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CFLWarning)
        yield


def random_field(grid, rng, components=None, project=False):
    """Generic real, mean-zero, dealiased field (not divergence-free unless projected)."""
    comps = grid.dim if components is None else components
    shape = grid.shape if comps == 0 else (comps,) + grid.shape
    c = grid.to_spectral(rng.standard_normal(shape)) * grid.dealias_mask
    c[(Ellipsis,) + (0,) * grid.dim] = 0.0
    if project:
        c = grid.leray(c)
    return VectorField(grid, c, divergence_free=project)


def sin_x_field(grid):
    """u = (0, sin x, 0) sampled on the grid."""
    x = grid.coordinates()
    u = np.zeros((grid.dim,) + grid.shape)
    u[1] = np.sin(x[0])
    return VectorField.from_physical(grid, u, divergence_free=True)


@pytest.fixture
def grid3():
    return SpectralGrid(3, 16)


@pytest.fixture
def grid2():
    return SpectralGrid(2, 16)


# criterion number -> one-line verdict, printed at the end of the session
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[key])
