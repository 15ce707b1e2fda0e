import numpy as np
import pytest

from src.align_utils.align3d import (
    Landscape3D, brute_force_landscape_3d, default_beta_grid, euler_fft, landscape_3d, landscape_3d_batch,
    wigner_stack,
)
from src.errors import ValidationFailure
from src.eval_utils.bench import PhaseTimer
from src.transform_utils.grids import build_sphere_grid
from src.transform_utils.spharm import EulerAngles, SphVolume, rotate_sph


def test_default_beta_grid():
    assert np.allclose(default_beta_grid(4), [-np.pi, -np.pi / 2, 0.0, np.pi / 2])
    assert default_beta_grid(33).size == 33
    for bad in (0, -2, 2.5):
        with pytest.raises(ValidationFailure):
            default_beta_grid(bad)


def test_sixteen_degrees_give_thirty_three_angles():
    assert build_sphere_grid(16.0, 4, 16).M == 33


@pytest.mark.parametrize("seed", range(20))
def test_fft_path_matches_brute_force(seed):
    rng = np.random.default_rng(1000 + seed)
    grid = build_sphere_grid(3.0, 4, 4)
    shape = (grid.R, grid.n_lm)
    a = SphVolume(grid=grid, coeffs=rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
    b = SphVolume(grid=grid, coeffs=rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
    betas = rng.uniform(-np.pi, np.pi, 3)
    fast = landscape_3d(a, b, betas).values
    slow = brute_force_landscape_3d(a, b, betas).values
    assert np.max(np.abs(fast - slow)) <= 1e-10 * np.max(np.abs(slow))


def test_self_alignment_peaks_at_identity(sphere_grid, random_volume):
    a = random_volume(sphere_grid)
    landscape = landscape_3d(a, a, default_beta_grid(4))
    self_value = np.sum(sphere_grid.w_radial[:, None] * np.abs(a.coeffs) ** 2)
    identity = landscape.values[2, 0, 0]
    assert identity == pytest.approx(self_value, rel=1e-12)
    assert np.all(landscape.values <= identity + 1e-9 * self_value)
    assert landscape.max_value >= identity - 1e-9 * self_value


def test_rotated_copy_reaches_self_alignment_value(sphere_grid, random_volume):
    a = random_volume(sphere_grid)
    M = sphere_grid.M
    betas = default_beta_grid(4)
    step = 2.0 * np.pi / M
    tau0 = EulerAngles(gamma=3 * step, beta=np.pi / 2, alpha=2 * step)
    landscape = landscape_3d(a, rotate_sph(a, tau0), betas)
    self_value = np.sum(sphere_grid.w_radial[:, None] * np.abs(a.coeffs) ** 2)
    assert landscape.max_value == pytest.approx(self_value, rel=1e-9)
    # the inverse rotation (-alpha0, -beta0, -gamma0) lies on the grid
    assert landscape.values[1, (-3) % M, (-2) % M] == pytest.approx(self_value, rel=1e-9)


def test_landscape_indexing(sphere_grid, random_volume):
    a, b = random_volume(sphere_grid), random_volume(sphere_grid)
    landscape = landscape_3d(a, b, [0.3, 1.1])
    assert landscape.values.shape == (2, sphere_grid.M, sphere_grid.M)
    j, ia, ig = np.unravel_index(landscape.argmax_index, landscape.values.shape)
    tau = landscape.argmax_tau
    assert tau.beta == landscape.betas[j]
    assert tau.alpha == pytest.approx(2.0 * np.pi * ia / sphere_grid.M)
    assert tau.gamma == pytest.approx(2.0 * np.pi * ig / sphere_grid.M)
    with pytest.raises(ValidationFailure):
        Landscape3D(betas=np.zeros(3), values=np.zeros((2, 3, 3)))


def test_euler_fft_single_order():
    L, M = 2, 5
    xhat = np.zeros((M, M), dtype=complex)
    xhat[L + 1, L] = 1.0
    values = euler_fft(xhat)
    alphas = 2.0 * np.pi * np.arange(M) / M
    assert np.allclose(values, np.cos(alphas)[:, None] * np.ones(M)[None, :])


def test_batch_matches_pairs_and_is_worker_independent(sphere_grid, random_volume):
    volumes = [random_volume(sphere_grid) for _ in range(5)]
    target = random_volume(sphere_grid)
    betas = default_beta_grid(3)
    timer = PhaseTimer()
    tables = wigner_stack(betas, sphere_grid.L)
    single = landscape_3d_batch(volumes, target, betas, block_size=2, workers=1, tables=tables, timer=timer)
    threaded = landscape_3d_batch(volumes, target, betas, block_size=2, workers=3)
    assert single.shape == (5, 3, sphere_grid.M, sphere_grid.M)
    assert np.array_equal(single, threaded)
    scale = np.max(np.abs(single))
    for i, vol in enumerate(volumes):
        assert np.max(np.abs(single[i] - landscape_3d(vol, target, betas).values)) < 1e-12 * scale
    assert {"per_pair.step1", "per_pair.step2", "per_pair.step3"} <= set(timer.medians())


def test_invalid_inputs(sphere_grid, random_volume):
    a = random_volume(sphere_grid)
    with pytest.raises(ValidationFailure):
        landscape_3d(a, a, [])
    other = random_volume(build_sphere_grid(4.0, 4, 3))
    with pytest.raises(ValidationFailure):
        landscape_3d(a, other, [0.0])
    with pytest.raises(ValidationFailure):
        landscape_3d_batch([], a, [0.0])
