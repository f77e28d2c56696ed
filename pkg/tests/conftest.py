import sys

import numpy as np
import pytest

from stochpe.grid import Grid, SpectralField


@pytest.fixture(scope="session")
def g16():
    return Grid(16, 16, 16)


@pytest.fixture(scope="session")
def g8():
    return Grid(8, 8, 8)


def physical(grid, fn, ncomp=2):
    """Sample ``fn(x, y, z) -> tuple of components`` on the collocation grid."""
    x, y, z = grid.coords()
    vals = np.zeros((ncomp,) + grid.shape)
    for c, comp in enumerate(fn(x, y, z)):
        vals[c] = np.broadcast_to(comp, grid.shape)
    return vals


def field(grid, fn, ncomp=2):
    return SpectralField.from_physical(grid, physical(grid, fn, ncomp))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
