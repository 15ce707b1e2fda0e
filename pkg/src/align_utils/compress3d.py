from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from loguru import logger

from src.align_utils.align3d import Landscape3D, check_betas, euler_fft, wigner_stack
from src.align_utils.compress2d import (
    KernelKind, KernelMatrix, PrincipalBasis, captured_fraction, principal_basis, radial_scale_factors, symmetrize,
)
from src.align_utils.pairs import run_blocks, timed
from src.errors import ValidationFailure
from src.transform_utils.grids import SphereGrid
from src.transform_utils.spharm import SphVolume, WignerDTable, degree_slice, to_dense


@dataclass(frozen=True, eq=False)
class CompressedVolume:
    """Principal-volume-shells: coeffs[h] = sum_r u_{h,r} sqrt(w_r) A(k_r), packed (L+1)^2 per row."""
    grid: SphereGrid
    basis: PrincipalBasis
    coeffs: np.ndarray


def kernel_3d_radial(b: SphVolume) -> KernelMatrix:
    """C_{r,r'} = sum_{l>=1} sum_m eta_r B_l^m(k_r)^* B_l^m(k_r') eta_r', eta = sqrt(w)."""
    eta = radial_scale_factors(b.grid)
    body = b.coeffs[:, 1:] * eta[:, None]
    return KernelMatrix(entries=symmetrize(np.conj(body) @ body.T), kind=KernelKind.RADIAL_3D, scale_factors=eta)


def kernel_3d_degree(b: SphVolume) -> KernelMatrix:
    """
    D_{l,l'} = sum_r w_r sum_m B_l^m(k_r)^* B_l'^m(k_r), orders shared by both degrees.
    Row and column 0 are zero: the l = 0 term does not depend on the rotation.
    """
    dense = to_dense(b.coeffs, b.grid.L)
    entries = np.einsum("r,rlm,rpm->lp", b.grid.w_radial, np.conj(dense), dense)
    entries = symmetrize(entries)
    entries[0, :] = 0.0
    entries[:, 0] = 0.0
    return KernelMatrix(entries=entries, kind=KernelKind.DEGREE_3D, scale_factors=np.ones(b.grid.L + 1))


def full_degree_basis(L: int) -> PrincipalBasis:
    """Identity basis over all degrees, l = 0 included."""
    return PrincipalBasis(
        vectors=np.eye(L + 1), eigenvalues=np.ones(L + 1),
        scale_factors=np.ones(L + 1), kind=KernelKind.DEGREE_3D,
    )


def compress_volume(a: SphVolume, basis: PrincipalBasis) -> CompressedVolume:
    if basis.dim != a.grid.R:
        raise ValidationFailure(f"Basis of dimension {basis.dim} cannot compress {a.grid.R} shells")
    coeffs = basis.vectors.T @ (basis.scale_factors[:, None] * a.coeffs)
    return CompressedVolume(grid=a.grid, basis=basis, coeffs=coeffs)


def _check_degree_basis(v_basis: PrincipalBasis, L: int) -> None:
    if v_basis.kind != KernelKind.DEGREE_3D or v_basis.dim != L + 1:
        raise ValidationFailure(f"Degree basis must span {L + 1} degrees, got dimension {v_basis.dim}")


def compress_wigner(table: WignerDTable, v_basis: PrincipalBasis) -> np.ndarray:
    """[v_j^T d](beta) = sum_l v_{l,j} d^l(beta), each block zero-padded to M x M; shape (H_D, M, M)."""
    _check_degree_basis(v_basis, table.L)
    return np.einsum("lj,lmn->jmn", v_basis.vectors, table.dense())


def compress_wigner_stack(tables: np.ndarray, v_basis: PrincipalBasis) -> np.ndarray:
    """Degree-compressed tables for every beta, (n_beta, H_D, M, M), from wigner_stack output."""
    return np.einsum("lj,blmn->bjmn", v_basis.vectors, tables)


def _check_pair(a: CompressedVolume, b: CompressedVolume) -> None:
    if not a.basis.matches(b.basis) or not a.grid.matches(b.grid):
        raise ValidationFailure("Compressed volumes were built from different radial bases")


def principal_degree_tensor(a: CompressedVolume, b: CompressedVolume, v_basis: PrincipalBasis) -> np.ndarray:
    """
    Steps 1 and 1b: X~(m1, m2; l) = sum_h [u_h^T A]_l^m1^* [u_h^T B]_l^m2, then
    [v_j^T X~] = sum_l v_{l,j} X~(.; l). Shape (H_D, M, M), independent of beta.
    """
    _check_pair(a, b)
    L = a.grid.L
    _check_degree_basis(v_basis, L)
    xt = np.einsum("hlm,hln->lmn", np.conj(to_dense(a.coeffs, L)), to_dense(b.coeffs, L))
    return np.einsum("lj,lmn->jmn", v_basis.vectors, xt)


def landscape_3d_compressed(
        a: CompressedVolume,
        b: CompressedVolume,
        v_basis: PrincipalBasis,
        betas: Sequence[float],
        compressed_tables: Optional[np.ndarray] = None,
) -> Landscape3D:
    """
    Landscape from principal-volume-shells and principal-volume-degrees.

    Step 2 applies the degree-compressed Wigner tables,
    X^(m1, m2; beta) = sum_j [v_j^T d](beta) [v_j^T X~], and step 3 is the same 2-D FFT
    as the full landscape. Full bases reproduce landscape_3d; bases built from the
    kernels drop the rotation-independent l = 0 offset.

    Raises:
        ValidationFailure: On basis mismatch or empty betas.
    """
    betas = check_betas(betas)
    vx = principal_degree_tensor(a, b, v_basis)
    if compressed_tables is None:
        compressed_tables = compress_wigner_stack(wigner_stack(betas, a.grid.L), v_basis)
    xhat = np.einsum("bjmn,jmn->bmn", compressed_tables, vx)
    return Landscape3D(betas=betas, values=euler_fft(xhat))


def landscape_3d_compressed_batch(
        volumes: Sequence[CompressedVolume],
        target: CompressedVolume,
        v_basis: PrincipalBasis,
        betas: Sequence[float],
        block_size: int = 4,
        workers: int = 1,
        progress: bool = False,
        compressed_tables: Optional[np.ndarray] = None,
        timer=None,
) -> np.ndarray:
    """
    Compressed landscapes of many volumes against one target, (N_A, n_beta, M, M).
    Timed phases: per_pair.step1, per_pair.step1b, per_pair.step2 and per_pair.step3.
    """
    if not volumes:
        raise ValidationFailure("Expected at least one volume")
    betas = check_betas(betas)
    for vol in volumes:
        _check_pair(vol, target)
    L = target.grid.L
    _check_degree_basis(v_basis, L)
    if compressed_tables is None:
        compressed_tables = compress_wigner_stack(wigner_stack(betas, L), v_basis)
    a_dense = np.conj(to_dense(np.stack([vol.coeffs for vol in volumes]), L))
    b_dense = to_dense(target.coeffs, L)

    def block_landscapes(block: slice) -> np.ndarray:
        with timed(timer, "per_pair.step1"):
            xt = np.einsum("nhlm,hlk->nlmk", a_dense[block], b_dense)
        with timed(timer, "per_pair.step1b"):
            vx = np.einsum("lj,nlmk->njmk", v_basis.vectors, xt)
        with timed(timer, "per_pair.step2"):
            xhat = np.einsum("bjmk,njmk->nbmk", compressed_tables, vx)
        with timed(timer, "per_pair.step3"):
            return euler_fft(xhat)

    parts = run_blocks(block_landscapes, len(volumes), block_size, workers, "compressed volume landscapes", progress)
    return np.concatenate(parts, axis=0)


def shell_degree_power(b: SphVolume) -> np.ndarray:
    """Weighted power per degree, sum_r w_r sum_m |B_l^m|^2; equals diag of the degree kernel for l >= 1."""
    power = np.abs(b.coeffs) ** 2 * b.grid.w_radial[:, None]
    return np.array([power[:, degree_slice(l)].sum() for l in range(b.grid.L + 1)])


@dataclass(frozen=True, eq=False)
class VolumeAlignment:
    """Output of compressed_volume_landscapes: landscapes plus the bases used."""
    values: np.ndarray
    radial_basis: PrincipalBasis
    degree_basis: PrincipalBasis
    radial_captured: float
    degree_captured: float


def compressed_volume_landscapes(
        volumes: Sequence[SphVolume],
        target: SphVolume,
        betas: Sequence[float],
        H_C: int,
        H_D: int,
        block_size: int = 4,
        workers: int = 1,
        progress: bool = False,
        psd_tolerance: float = 1e-10,
        timer=None,
) -> VolumeAlignment:
    """
    Landscapes of many volumes against one target using H_C principal shells and H_D
    principal degrees, both kernels built from the target.

    Raises:
        ValidationFailure: On grid mismatch or ranks out of range.
        NumericalCheckError: If either kernel is not positive semi-definite.
    """
    if not volumes:
        raise ValidationFailure("Expected at least one volume")
    betas = check_betas(betas)
    with timed(timer, "precompute.radial_kernel"):
        c_kernel = kernel_3d_radial(target)
        c_kernel.check_psd(psd_tolerance)
    with timed(timer, "precompute.degree_kernel"):
        d_kernel = kernel_3d_degree(target)
        d_kernel.check_psd(psd_tolerance)
    with timed(timer, "precompute.eigen"):
        u_basis = principal_basis(c_kernel, H_C)
        v_basis = principal_basis(d_kernel, H_D)
    with timed(timer, "precompute.compress_volumes"):
        compressed = [compress_volume(vol, u_basis) for vol in volumes]
        compressed_target = compress_volume(target, u_basis)
    with timed(timer, "precompute.wigner"):
        tables = compress_wigner_stack(wigner_stack(betas, target.grid.L), v_basis)
    values = landscape_3d_compressed_batch(
        compressed, compressed_target, v_basis, betas,
        block_size, workers, progress, compressed_tables=tables, timer=timer,
    )
    result = VolumeAlignment(
        values=values,
        radial_basis=u_basis,
        degree_basis=v_basis,
        radial_captured=captured_fraction(c_kernel, H_C),
        degree_captured=captured_fraction(d_kernel, H_D),
    )
    logger.debug(
        f"Compressed volume landscapes: H_C={H_C} ({result.radial_captured:.4f}), "
        f"H_D={H_D} ({result.degree_captured:.4f}), {len(volumes)} volumes"
    )
    return result
