import numpy as np
import pytest

from src.data_utils.synth import load_phantom
from src.transform_utils.grids import build_polar_grid, build_sphere_grid
from src.transform_utils.polarfft import BesselImage
from src.transform_utils.spharm import SphVolume


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def polar_grid():
    return build_polar_grid(8.0, 8, 24)


@pytest.fixture
def sphere_grid():
    return build_sphere_grid(4.0, 4, 4)


@pytest.fixture(scope="session")
def phantom():
    return load_phantom()


@pytest.fixture
def random_bessel(rng):
    """Factory for Bessel images with iid complex Gaussian coefficients."""

    def make(grid):
        shape = (grid.R, grid.Q)
        return BesselImage(grid=grid, coeffs=rng.standard_normal(shape) + 1j * rng.standard_normal(shape))

    return make


@pytest.fixture
def random_volume(rng):
    """Factory for band-limited volumes with iid complex Gaussian coefficients."""

    def make(grid):
        shape = (grid.R, grid.n_lm)
        return SphVolume(grid=grid, coeffs=rng.standard_normal(shape) + 1j * rng.standard_normal(shape))

    return make
