import numpy as np
import pytest

from src.align_utils.align3d import default_beta_grid, landscape_3d, landscape_3d_batch
from src.align_utils.compress2d import KernelKind, PrincipalBasis, principal_basis, radial_scale_factors
from src.align_utils.compress3d import (
    compress_volume, compress_wigner, compressed_volume_landscapes, full_degree_basis, kernel_3d_degree,
    kernel_3d_radial, landscape_3d_compressed, landscape_3d_compressed_batch, principal_degree_tensor,
    shell_degree_power,
)
from src.data_utils.synth import NoiseSpec, make_volume_set, phantom_sph_volume
from src.errors import ValidationFailure
from src.eval_utils.bench import PhaseTimer
from src.eval_utils.metrics import rel_frobenius
from src.transform_utils.grids import angular_sphere_nodes, build_sphere_grid
from src.transform_utils.spharm import (
    EulerAngles, SphVolume, degree_of_index, lm_index, rotate_coeffs, rotate_sph, wigner_d,
)


def degree_vector(v):
    v = np.asarray(v, dtype=float)
    return PrincipalBasis(
        vectors=v[:, None], eigenvalues=np.ones(1), scale_factors=np.ones(v.size), kind=KernelKind.DEGREE_3D,
    )


@pytest.mark.parametrize("build", [kernel_3d_radial, kernel_3d_degree])
def test_kernels_are_symmetric_psd(sphere_grid, random_volume, build):
    kern = build(random_volume(sphere_grid))
    assert np.max(np.abs(kern.entries - kern.entries.T)) < 1e-12 * np.max(np.abs(kern.entries))
    kern.check_psd()


def test_radial_kernel_and_degree_diagonal_are_rotation_invariant(sphere_grid, random_volume):
    b = random_volume(sphere_grid)
    rotated = rotate_sph(b, EulerAngles(gamma=0.7, beta=2.1, alpha=-1.4))
    radial, radial_rotated = kernel_3d_radial(b).entries, kernel_3d_radial(rotated).entries
    assert np.max(np.abs(radial_rotated - radial)) < 1e-11 * np.max(np.abs(radial))
    degree, degree_rotated = kernel_3d_degree(b).entries, kernel_3d_degree(rotated).entries
    assert np.allclose(np.diag(degree_rotated), np.diag(degree), rtol=1e-11, atol=1e-11 * np.max(degree))


def test_degree_kernel_structure(sphere_grid, random_volume):
    b = random_volume(sphere_grid)
    kern = kernel_3d_degree(b)
    assert kern.dim == sphere_grid.L + 1
    assert np.all(kern.entries[0, :] == 0) and np.all(kern.entries[:, 0] == 0)
    assert np.allclose(np.diag(kern.entries)[1:], shell_degree_power(b)[1:], rtol=1e-12)


def test_radial_kernel_ignores_degree_zero(sphere_grid, random_volume):
    b = random_volume(sphere_grid)
    coeffs = b.coeffs.copy()
    coeffs[:, 0] = 0.0
    stripped = type(b)(grid=sphere_grid, coeffs=coeffs)
    assert np.allclose(kernel_3d_radial(stripped).entries, kernel_3d_radial(b).entries, rtol=1e-12)


def test_full_radial_basis_is_invertible(sphere_grid, random_volume):
    a = random_volume(sphere_grid)
    basis = principal_basis(kernel_3d_radial(random_volume(sphere_grid)), sphere_grid.R)
    compressed = compress_volume(a, basis)
    recovered = (basis.vectors @ compressed.coeffs) / basis.scale_factors[:, None]
    assert np.max(np.abs(recovered - a.coeffs)) < 1e-11 * np.max(np.abs(a.coeffs))


def test_compressed_wigner_of_unit_vector_is_the_block():
    L = 4
    table = wigner_d(0.9, L)
    for l in range(L + 1):
        v = np.zeros(L + 1)
        v[l] = 1.0
        assert np.allclose(compress_wigner(table, degree_vector(v))[0], table.dense()[l], atol=1e-15)


def test_compressed_wigner_at_zero_beta_is_diagonal(rng):
    L = 4
    v = rng.standard_normal(L + 1)
    out = compress_wigner(wigner_d(0.0, L), degree_vector(v))[0]
    expected = [np.sum(v[abs(m):]) for m in range(-L, L + 1)]
    assert np.allclose(np.diag(out), expected, atol=1e-12)
    assert np.allclose(out - np.diag(np.diag(out)), 0.0, atol=1e-12)


def test_compressed_wigner_matches_direct_sum(rng):
    L = 5
    v = rng.standard_normal(L + 1)
    table = wigner_d(-1.3, L)
    out = compress_wigner(table, degree_vector(v))[0]
    for _ in range(5):
        m1, m2 = rng.integers(-L, L + 1, size=2)
        direct = sum(
            v[l] * table.blocks[l][m1 + l, m2 + l] for l in range(max(abs(m1), abs(m2)), L + 1)
        )
        assert out[m1 + L, m2 + L] == pytest.approx(direct, abs=1e-12)


def test_full_rank_compression_is_exact(sphere_grid, random_volume):
    a, b = random_volume(sphere_grid), random_volume(sphere_grid)
    betas = default_beta_grid(5)
    u_basis = principal_basis(kernel_3d_radial(b), sphere_grid.R)
    full = landscape_3d(a, b, betas).values
    for v_basis in (full_degree_basis(sphere_grid.L), principal_basis(kernel_3d_degree(b), sphere_grid.L + 1)):
        approx = landscape_3d_compressed(compress_volume(a, u_basis), compress_volume(b, u_basis), v_basis, betas)
        assert rel_frobenius(approx.values, full) <= 1e-9


def test_truncated_degree_basis_drops_only_an_offset(sphere_grid, random_volume):
    a, b = random_volume(sphere_grid), random_volume(sphere_grid)
    betas = default_beta_grid(3)
    u_basis = principal_basis(kernel_3d_radial(b), sphere_grid.R)
    v_basis = principal_basis(kernel_3d_degree(b), sphere_grid.L)
    approx = landscape_3d_compressed(compress_volume(a, u_basis), compress_volume(b, u_basis), v_basis, betas).values
    full = landscape_3d(a, b, betas).values
    offset = full - approx
    # the dropped direction is e_0, whose landscape is constant over rotations
    assert np.allclose(offset, offset.flat[0], atol=1e-9 * np.max(np.abs(full)))


def test_principal_degree_tensor_shape(sphere_grid, random_volume):
    a, b = random_volume(sphere_grid), random_volume(sphere_grid)
    u_basis = principal_basis(kernel_3d_radial(b), 2)
    v_basis = principal_basis(kernel_3d_degree(b), 3)
    vx = principal_degree_tensor(compress_volume(a, u_basis), compress_volume(b, u_basis), v_basis)
    assert vx.shape == (3, sphere_grid.M, sphere_grid.M)


def test_compressed_batch_matches_pairs(sphere_grid, random_volume):
    volumes = [random_volume(sphere_grid) for _ in range(4)]
    target = random_volume(sphere_grid)
    betas = default_beta_grid(3)
    u_basis = principal_basis(kernel_3d_radial(target), 3)
    v_basis = principal_basis(kernel_3d_degree(target), 3)
    compressed = [compress_volume(vol, u_basis) for vol in volumes]
    compressed_target = compress_volume(target, u_basis)
    timer = PhaseTimer()
    batch = landscape_3d_compressed_batch(compressed, compressed_target, v_basis, betas, block_size=3, timer=timer)
    threaded = landscape_3d_compressed_batch(compressed, compressed_target, v_basis, betas, block_size=3, workers=2)
    assert np.array_equal(batch, threaded)
    scale = np.max(np.abs(batch))
    for i, vol in enumerate(compressed):
        single = landscape_3d_compressed(vol, compressed_target, v_basis, betas).values
        assert np.max(np.abs(batch[i] - single)) < 1e-12 * scale
    assert {"per_pair.step1", "per_pair.step1b", "per_pair.step2", "per_pair.step3"} <= set(timer.medians())


def test_end_to_end_volume_compression(sphere_grid, random_volume):
    volumes = [random_volume(sphere_grid) for _ in range(3)]
    target = random_volume(sphere_grid)
    betas = default_beta_grid(4)
    timer = PhaseTimer()
    result = compressed_volume_landscapes(volumes, target, betas, sphere_grid.R, sphere_grid.L + 1, timer=timer)
    assert result.radial_captured == pytest.approx(1.0)
    assert result.degree_captured == pytest.approx(1.0)
    assert rel_frobenius(result.values, landscape_3d_batch(volumes, target, betas)) <= 1e-9
    assert {"precompute.radial_kernel", "precompute.degree_kernel", "precompute.wigner"} <= set(timer.medians())

    small = compressed_volume_landscapes(volumes, target, betas, 2, 2)
    assert small.values.shape == (3, 4, sphere_grid.M, sphere_grid.M)
    assert small.radial_basis.H == 2 and small.degree_basis.H == 2


def test_invalid_inputs(sphere_grid, random_volume):
    a, b = random_volume(sphere_grid), random_volume(sphere_grid)
    u_basis = principal_basis(kernel_3d_radial(b), 2)
    other_basis = principal_basis(kernel_3d_radial(a), 2)
    v_basis = principal_basis(kernel_3d_degree(b), 2)
    with pytest.raises(ValidationFailure):
        landscape_3d_compressed(compress_volume(a, u_basis), compress_volume(b, other_basis), v_basis, [0.0])
    with pytest.raises(ValidationFailure):
        landscape_3d_compressed(compress_volume(a, u_basis), compress_volume(b, u_basis), u_basis, [0.0])
    with pytest.raises(ValidationFailure):
        compress_volume(random_volume(build_sphere_grid(4.0, 5, 4)), u_basis)
    with pytest.raises(ValidationFailure):
        compressed_volume_landscapes([], b, [0.0], 2, 2)
    with pytest.raises(ValidationFailure):
        compressed_volume_landscapes([a], b, [0.0], sphere_grid.R + 1, 2)


def haar_rotations(L):
    """Rotations and weights of a product rule that integrates every D^l, l <= 2L, exactly."""
    cos_beta, w_beta, _ = angular_sphere_nodes(L)
    angles = 2.0 * np.pi * np.arange(2 * L + 1) / (2 * L + 1)
    taus, weights = [], []
    for beta, weight in zip(np.arccos(cos_beta), w_beta):
        for alpha in angles:
            for gamma in angles:
                taus.append(EulerAngles(gamma=gamma, beta=beta, alpha=alpha))
                weights.append(weight)
    return taus, np.asarray(weights)


def haar_norm(values, w_beta):
    """Weighted L2 norm over (beta, alpha, gamma) landscapes on the Gauss-Legendre beta grid."""
    return np.sqrt(np.sum(w_beta[None, :, None, None] * values ** 2))


def gauss_legendre_betas(L):
    cos_beta, w_beta, _ = angular_sphere_nodes(L)
    return np.arccos(cos_beta), w_beta


def test_kernels_equal_double_rotation_average(sphere_grid, random_volume):
    b = random_volume(sphere_grid)
    L = sphere_grid.L
    taus, weights = haar_rotations(L)
    rotated = np.stack([rotate_coeffs(b.coeffs, L, tau) for tau in taus])
    eta = radial_scale_factors(sphere_grid)
    degrees = degree_of_index(L)
    radial = np.zeros((sphere_grid.R, sphere_grid.R))
    degree_power = np.zeros(L + 1)
    for weight, row in zip(weights, rotated):
        diff = row[None] - rotated
        radial += weight * np.real(np.einsum("t,trn,tsn->rs", weights, np.conj(diff), diff))
        power = np.einsum("t,r,trn->n", weights, sphere_grid.w_radial, np.abs(diff) ** 2)
        degree_power += weight * np.bincount(degrees, weights=power, minlength=L + 1)
    norm = 2.0 * np.sum(weights) ** 2
    radial *= np.outer(eta, eta)
    expected = kernel_3d_radial(b).entries
    assert np.allclose(radial / norm, expected, rtol=1e-10, atol=1e-11 * np.max(np.abs(expected)))
    diagonal = np.diag(kernel_3d_degree(b).entries)
    assert np.allclose(degree_power / norm, diagonal, rtol=1e-10, atol=1e-11 * np.max(diagonal))


def test_radial_rank_sweep_error_never_grows(phantom, sphere_grid):
    volume_set = make_volume_set(phantom, sphere_grid, 3, noise=NoiseSpec(seed=6))
    betas, w_beta = gauss_legendre_betas(sphere_grid.L)
    full = landscape_3d_batch(volume_set.volumes, volume_set.target, betas)
    errors = []
    for H_C in range(1, sphere_grid.R + 1):
        result = compressed_volume_landscapes(volume_set.volumes, volume_set.target, betas, H_C, sphere_grid.L + 1)
        errors.append(haar_norm(result.values - full, w_beta))
    scale = haar_norm(full, w_beta)
    for low, high in zip(errors, errors[1:]):
        assert high <= low + 1e-10 * scale
    assert errors[-1] <= 1e-9 * scale


def test_degree_rank_sweep_error_never_grows(sphere_grid, random_volume, rng):
    L = sphere_grid.L
    coeffs = np.zeros((sphere_grid.R, sphere_grid.n_lm), dtype=complex)
    for l in range(L + 1):
        coeffs[:, lm_index(l, l)] = rng.standard_normal(sphere_grid.R) + 1j * rng.standard_normal(sphere_grid.R)
    target = SphVolume(grid=sphere_grid, coeffs=coeffs)
    entries = kernel_3d_degree(target).entries
    assert np.allclose(entries, np.diag(np.diag(entries)), atol=1e-12 * np.max(entries))

    volumes = [random_volume(sphere_grid) for _ in range(2)]
    betas, w_beta = gauss_legendre_betas(L)
    full = landscape_3d_batch(volumes, target, betas)
    errors = []
    for H_D in range(1, L + 2):
        result = compressed_volume_landscapes(volumes, target, betas, sphere_grid.R, H_D)
        error = result.values - full
        mean = np.sum(w_beta[None, :, None, None] * error, axis=(1, 2, 3)) / (np.sum(w_beta) * sphere_grid.M ** 2)
        errors.append(haar_norm(error - mean[:, None, None, None], w_beta))
    scale = haar_norm(full, w_beta)
    for low, high in zip(errors, errors[1:]):
        assert high <= low + 1e-10 * scale
    assert errors[-2] <= 1e-9 * scale


def test_phantom_radial_spectrum_decays(phantom):
    grid = build_sphere_grid(32.0, 33, 24)
    evals = principal_basis(kernel_3d_radial(phantom_sph_volume(phantom, grid)), grid.R).eigenvalues
    assert evals[10] <= 1e-2 * evals[0]


def test_phantom_degree_spectrum_decays(phantom):
    grid = build_sphere_grid(8.0, 9, 16)
    evals = principal_basis(kernel_3d_degree(phantom_sph_volume(phantom, grid)), grid.L + 1).eigenvalues
    assert evals[5] <= 1e-2 * evals[0]
