import numpy as np
import pytest

from src.errors import ValidationFailure
from src.transform_utils.grids import build_polar_grid
from src.transform_utils.polarfft import (
    CartImage, PolarImage, bessel_forward, bessel_inverse, check_same_grid, ring_power, rotate_bessel,
    sample_polar, signed_frequencies,
)


def random_polar(grid, rng):
    shape = (grid.R, grid.Q)
    return PolarImage(grid=grid, values=rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def test_signed_frequencies():
    assert signed_frequencies(6).tolist() == [0, 1, 2, 3, -2, -1]


def test_single_angular_mode(polar_grid):
    values = np.exp(1j * polar_grid.psi_nodes)[None, :].repeat(polar_grid.R, axis=0)
    coeffs = bessel_forward(PolarImage(grid=polar_grid, values=values)).coeffs
    assert np.allclose(coeffs[:, 1], 2.0 * np.pi, atol=1e-12)
    rest = np.delete(coeffs, 1, axis=1)
    assert np.max(np.abs(rest)) < 1e-12


def test_bessel_round_trip(polar_grid, rng):
    p = random_polar(polar_grid, rng)
    assert np.max(np.abs(bessel_inverse(bessel_forward(p)).values - p.values)) < 1e-12


def test_ring_plancherel(polar_grid, rng):
    a, b = random_polar(polar_grid, rng), random_polar(polar_grid, rng)
    lhs = np.sum(np.conj(a.values) * b.values, axis=1) * polar_grid.dpsi
    rhs = np.sum(np.conj(bessel_forward(a).coeffs) * bessel_forward(b).coeffs, axis=1) / (2.0 * np.pi)
    assert np.max(np.abs(lhs - rhs)) < 1e-12 * np.max(np.abs(lhs))


def test_rotation_by_one_slot_shifts_samples(polar_grid, rng):
    p = random_polar(polar_grid, rng)
    rotated = bessel_inverse(rotate_bessel(bessel_forward(p), polar_grid.dpsi))
    assert np.max(np.abs(rotated.values - np.roll(p.values, 1, axis=1))) < 1e-12


def test_rotations_compose(polar_grid, random_bessel):
    b = random_bessel(polar_grid)
    twice = rotate_bessel(rotate_bessel(b, 0.4), 1.3)
    once = rotate_bessel(b, 1.7)
    assert np.max(np.abs(twice.coeffs - once.coeffs)) < 1e-14 * np.max(np.abs(b.coeffs)) * 10


def test_rotation_preserves_ring_power(polar_grid, random_bessel):
    b = random_bessel(polar_grid)
    assert np.allclose(ring_power(rotate_bessel(b, 2.1)), ring_power(b), rtol=1e-12)


def test_sample_polar_matches_literal_sum(rng):
    grid = build_polar_grid(6.0, 3, 4)
    img = CartImage(values=rng.standard_normal((8, 8)))
    x = img.pixel_centers
    out = sample_polar(img, grid).values
    for r, q in [(0, 0), (1, 3), (2, 1), (2, 2), (0, 3)]:
        kx = grid.k_nodes[r] * np.cos(grid.psi_nodes[q])
        ky = grid.k_nodes[r] * np.sin(grid.psi_nodes[q])
        total = 0.0 + 0.0j
        for i in range(8):
            for j in range(8):
                total += img.values[i, j] * np.exp(-1j * (kx * x[i] + ky * x[j]))
        assert abs(out[r, q] - total * img.dx ** 2) < 1e-12 * max(1.0, abs(total))


@pytest.mark.parametrize("N", [16, 64])
def test_separable_sampler_agrees_with_direct(rng, N):
    grid = build_polar_grid(10.0, 6, 12)
    img = CartImage(values=rng.standard_normal((N, N)))
    direct = sample_polar(img, grid, method="direct").values
    separable = sample_polar(img, grid, method="separable").values
    assert np.max(np.abs(direct - separable)) < 1e-9 * np.max(np.abs(direct))


def test_unknown_sampler_is_rejected(polar_grid):
    with pytest.raises(ValidationFailure):
        sample_polar(CartImage(values=np.zeros((4, 4))), polar_grid, method="nufft")


def test_cartesian_image_validation():
    with pytest.raises(ValidationFailure):
        CartImage(values=np.zeros((4, 5)))
    with pytest.raises(ValidationFailure):
        CartImage(values=np.full((4, 4), np.nan))
    assert CartImage(values=np.zeros((4, 4))).pixel_centers.tolist() == [-0.75, -0.25, 0.25, 0.75]


def test_shape_and_grid_checks(polar_grid):
    with pytest.raises(ValidationFailure):
        PolarImage(grid=polar_grid, values=np.zeros((polar_grid.R, polar_grid.Q + 1)))
    other = build_polar_grid(8.0, 9, 24)
    a = PolarImage(grid=polar_grid, values=np.zeros((polar_grid.R, polar_grid.Q)))
    b = PolarImage(grid=other, values=np.zeros((other.R, other.Q)))
    with pytest.raises(ValidationFailure):
        check_same_grid(a, b)
