import numpy as np
import pytest

from splap.mesh import Field, Grid
from splap.noise import make_noise_model
from splap.plaplace import PLaplaceOperator
from splap.skeleton import StepperConfig


@pytest.fixture
def grid1d():
    return Grid(1, 1.0, 17)


@pytest.fixture
def grid2d():
    return Grid(2, 1.0, 9)


def interior_random_field(grid, rng, scale=1.0):
    values = np.zeros(grid.n_nodes)
    idx = np.flatnonzero(grid.interior_mask())
    values[idx] = scale * rng.standard_normal(len(idx))
    return Field(grid, values)


def sine_initial(grid, amplitude=1.0):
    xi = (grid.coords() + grid.half_width) / (2 * grid.half_width)
    return Field(grid, amplitude * np.prod(np.sin(np.pi * xi), axis=1))


def rough_initial(grid, amplitude=1.0, roughness=0.3):
    u = sine_initial(grid, amplitude)
    parity = np.indices(grid.shape).sum(axis=0).ravel() % 2
    vals = u.values + roughness * (2.0 * parity - 1.0)
    vals[~grid.interior_mask()] = 0.0
    return Field(grid, vals)


def small_setup(multiplier="bounded", p=3.0, delta=1e-4, n=33, modes=4,
                rough=True):
    """Small 1D configuration shared by the solver-level tests."""
    grid = Grid(1, 1.0, n)
    noise = make_noise_model(grid, modes, multiplier)
    u0 = rough_initial(grid) if rough else sine_initial(grid)
    return StepperConfig(PLaplaceOperator(p, delta), noise, u0)
