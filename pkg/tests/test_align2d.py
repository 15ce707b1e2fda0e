import numpy as np
import pytest

from src.align_utils.align2d import (
    Landscape1D, argmax_refine, brute_force_landscape_2d, landscape_2d, landscape_2d_batch, landscape_from_spectrum,
)
from src.errors import ValidationFailure
from src.eval_utils.bench import PhaseTimer
from src.transform_utils.grids import build_polar_grid
from src.transform_utils.polarfft import BesselImage, rotate_bessel


@pytest.mark.parametrize("seed", range(20))
def test_fft_path_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    grid = build_polar_grid(5.0, 8, 24)
    shape = (grid.R, grid.Q)
    a = BesselImage(grid=grid, coeffs=rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
    b = BesselImage(grid=grid, coeffs=rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
    for Q_out in (24, 40):
        fast = landscape_2d(a, b, Q_out).values
        slow = brute_force_landscape_2d(a, b, Q_out).values
        assert np.max(np.abs(fast - slow)) <= 1e-10 * np.max(np.abs(slow))


def test_peak_at_planted_angle(polar_grid, random_bessel):
    a = random_bessel(polar_grid)
    shift = 7
    b = rotate_bessel(a, shift * polar_grid.dpsi)
    landscape = landscape_2d(a, b)
    assert landscape.argmax_index == shift
    assert landscape.gammas[landscape.argmax_index] == pytest.approx(shift * polar_grid.dpsi)
    assert landscape.max_value == pytest.approx(2.0 * np.pi * np.sum(polar_grid.w_radial[:, None] * np.abs(a.coeffs) ** 2))


def test_shift_covariance(polar_grid, random_bessel):
    a, b = random_bessel(polar_grid), random_bessel(polar_grid)
    base = landscape_2d(a, b).values
    for shift in (1, 5, 23):
        moved = landscape_2d(a, rotate_bessel(b, shift * polar_grid.dpsi)).values
        assert np.max(np.abs(moved - np.roll(base, shift))) < 1e-10 * np.max(np.abs(base))


def test_padding_refines_the_same_function(polar_grid, random_bessel):
    a, b = random_bessel(polar_grid), random_bessel(polar_grid)
    coarse = landscape_2d(a, b).values
    fine = landscape_2d(a, b, 3 * polar_grid.Q).values
    assert np.allclose(fine[::3], coarse, atol=1e-10 * np.max(np.abs(coarse)))


def test_argmax_refine_recovers_parabola_vertex():
    n = 32
    step = 2.0 * np.pi / n
    vertex = 10.3 * step
    gammas = step * np.arange(n)
    landscape = Landscape1D(values=-(gammas - vertex) ** 2)
    assert argmax_refine(landscape) == pytest.approx(vertex, abs=1e-3)
    assert argmax_refine(landscape, refine=False) == pytest.approx(10 * step)


def test_argmax_ties_go_to_first_index():
    landscape = Landscape1D(values=np.array([1.0, 3.0, 3.0, 0.0]))
    assert landscape.argmax_index == 1
    assert argmax_refine(Landscape1D(values=np.ones(6))) == 0.0


def test_spectrum_padding_layout():
    xhat = np.zeros(4, dtype=complex)
    xhat[1] = 1.0
    values = landscape_from_spectrum(xhat, 8)
    assert np.allclose(values, np.cos(2.0 * np.pi * np.arange(8) / 8))


def test_batch_matches_pairs_and_is_worker_independent(polar_grid, random_bessel):
    images = [random_bessel(polar_grid) for _ in range(5)]
    targets = [random_bessel(polar_grid) for _ in range(3)]
    timer = PhaseTimer()
    single = landscape_2d_batch(images, targets, 30, block_size=2, workers=1, timer=timer)
    threaded = landscape_2d_batch(images, targets, 30, block_size=2, workers=4)
    assert single.shape == (5, 3, 30)
    assert np.array_equal(single, threaded)
    scale = np.max(np.abs(single))
    for i, a in enumerate(images):
        for j, b in enumerate(targets):
            assert np.max(np.abs(single[i, j] - landscape_2d(a, b, 30).values)) < 1e-12 * scale
    assert {"per_pair.step1", "per_pair.step2"} <= set(timer.medians())


def test_invalid_inputs(polar_grid, random_bessel):
    a = random_bessel(polar_grid)
    with pytest.raises(ValidationFailure):
        landscape_2d(a, a, polar_grid.Q - 2)
    other = random_bessel(build_polar_grid(8.0, 7, 24))
    with pytest.raises(ValidationFailure):
        landscape_2d(a, other)
    with pytest.raises(ValidationFailure):
        landscape_2d_batch([a], [other])
    with pytest.raises(ValidationFailure):
        Landscape1D(values=np.array([]))
