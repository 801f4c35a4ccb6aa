import numpy as np
import pytest

from hierdecomp.grid import Field, TorusGrid


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_field(grid: TorusGrid, rng, components: int = 1, zero_mean: bool = True) -> Field:
    a = rng.standard_normal((components,) + grid.shape)
    if zero_mean:
        a -= a.reshape(components, -1).mean(axis=1).reshape((components,) + (1,) * grid.dim)
    return Field(grid, a)


def quad(values: np.ndarray, grid: TorusGrid) -> float:
    """Riemann sum with the cell volume, written out independently."""
    return float(np.prod([2 * np.pi / n for n in grid.shape]) * np.sum(values))
