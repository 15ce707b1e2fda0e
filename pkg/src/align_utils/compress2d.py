from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from loguru import logger

from src.align_utils.align2d import Landscape1D, batched_landscapes, landscape_from_spectrum, stack_coeffs
from src.align_utils.pairs import ordered_sum, run_blocks, timed
from src.errors import NumericalCheckError, ValidationFailure
from src.transform_utils.grids import PolarGrid, SphereGrid
from src.transform_utils.polarfft import BesselImage


class KernelKind(str, Enum):
    RADIAL_2D = "radial2d"
    RADIAL_3D = "radial3d"
    DEGREE_3D = "degree3d"
    RADIAL_2D_TRANSLATED = "radial2d_translated"


@dataclass(frozen=True, eq=False)
class KernelMatrix:
    """
    Real symmetric alignment-quality kernel over radii or degrees.

    Attributes:
        entries (np.ndarray): dim x dim real symmetric matrix.
        kind (KernelKind): What the rows index.
        scale_factors (np.ndarray): Per-row rescaling (eta) applied when compressing data
            with the kernel's eigenvectors; ones for degree kernels.
    """
    entries: np.ndarray
    kind: KernelKind
    scale_factors: np.ndarray

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def check_psd(self, tolerance: float = 1e-10) -> None:
        """
        Raises:
            NumericalCheckError: If the kernel is asymmetric or has an eigenvalue
                below -tolerance * lambda_max.
        """
        scale = max(float(np.max(np.abs(self.entries))), np.finfo(float).tiny)
        if np.max(np.abs(self.entries - self.entries.T)) > 1e-12 * scale:
            raise NumericalCheckError(f"{self.kind.value} kernel is not symmetric")
        evals = np.linalg.eigvalsh(self.entries)
        if evals[0] < -tolerance * max(evals[-1], 0.0):
            raise NumericalCheckError(
                f"{self.kind.value} kernel is not positive semi-definite: "
                f"lambda_min={evals[0]:.3e}, lambda_max={evals[-1]:.3e}"
            )


@dataclass(frozen=True, eq=False)
class PrincipalBasis:
    """Top-H eigenvectors (columns) of a kernel, eigenvalues descending."""
    vectors: np.ndarray
    eigenvalues: np.ndarray
    scale_factors: np.ndarray
    kind: KernelKind

    @property
    def H(self) -> int:
        return self.vectors.shape[1]

    @property
    def dim(self) -> int:
        return self.vectors.shape[0]

    def matches(self, other: "PrincipalBasis") -> bool:
        return self is other or (
            self.kind == other.kind
            and np.array_equal(self.vectors, other.vectors)
            and np.array_equal(self.scale_factors, other.scale_factors)
        )


@dataclass(frozen=True, eq=False)
class CompressedImage:
    """Principal-image-rings: coeffs[h, q] = sum_r u_{h,r} eta_r B(k_r, q)."""
    grid: PolarGrid
    basis: PrincipalBasis
    coeffs: np.ndarray


def radial_scale_factors(grid: Union[PolarGrid, SphereGrid]) -> np.ndarray:
    """eta_r = sqrt(w_r dpsi) on a polar grid, sqrt(w_r) on a sphere grid."""
    if isinstance(grid, PolarGrid):
        return np.sqrt(grid.w_radial * grid.dpsi)
    return np.sqrt(grid.w_radial)


def symmetrize(entries: np.ndarray) -> np.ndarray:
    real = np.real(entries)
    return 0.5 * (real + real.T)


def kernel_2d(
        targets: Sequence[BesselImage],
        block_size: int = 16,
        workers: int = 1,
) -> KernelMatrix:
    """
    Radial kernel averaged over targets,
    C_{r,r'} = (1/N_B) sum_targets sum_{q != 0} eta_r B(k_r, q)^* B(k_r', q) eta_r'.

    The q = 0 column carries no orientation information and is left out. Constant
    prefactors are dropped; only the eigenvectors are used downstream.

    Raises:
        ValidationFailure: If the target list is empty or mixes grids.
    """
    stack = stack_coeffs(targets)
    grid = targets[0].grid
    eta = radial_scale_factors(grid)
    scaled = stack[:, :, 1:] * eta[None, :, None]

    def block_kernel(block: slice) -> np.ndarray:
        return np.einsum("nrq,nsq->rs", np.conj(scaled[block]), scaled[block])

    parts = run_blocks(block_kernel, len(targets), block_size, workers)
    entries = symmetrize(ordered_sum(parts) / len(targets))
    logger.debug(f"Built radial kernel of size {grid.R} from {len(targets)} targets")
    return KernelMatrix(entries=entries, kind=KernelKind.RADIAL_2D, scale_factors=eta)


def translation_envelope(k: np.ndarray, sigma_delta: float) -> np.ndarray:
    """
    E^-(k) for an isotropic Gaussian translation of width sigma_delta.

    With x = (k sigma/2)^2 the modified-Bessel form
    sqrt(x) sqrt(pi/2) e^{-x} (I_{-1/2}(x) - I_{1/2}(x)) uses
    I_{-1/2}(x) - I_{1/2}(x) = sqrt(2/(pi x)) e^{-x}, which leaves exp(-k^2 sigma^2 / 2).
    """
    k = np.asarray(k, dtype=float)
    return np.exp(-0.5 * (k * sigma_delta) ** 2)


def translation_coupling(k: np.ndarray, sigma_delta: float) -> np.ndarray:
    """E^+(k, k') = exp(-sigma^2 (k^2 + k'^2) / 2) exp(k k' sigma^2), as an R x R matrix."""
    k = np.asarray(k, dtype=float)
    s2 = sigma_delta ** 2
    return np.exp(-0.5 * s2 * (k[:, None] ** 2 + k[None, :] ** 2) + s2 * np.outer(k, k))


def kernel_2d_translated(volume, grid: PolarGrid, sigma_delta: float) -> KernelMatrix:
    """
    Radial kernel for targets that are projections of one reference volume seen from
    uniformly distributed viewing angles, with images shifted by isotropic Gaussian
    translations of width sigma_delta.

    Args:
        volume (SphVolume): Spherical-harmonic coefficients of the reference, sampled
            on shells at the polar grid's ring radii.
        grid (PolarGrid): Image grid; supplies eta = sqrt(w dpsi).
        sigma_delta (float): Translation standard deviation, >= 0.

    Returns:
        KernelMatrix: Kind radial2d_translated. At sigma_delta = 0 it reduces to the
        Gram matrix of the shells over degrees l >= 1.

    Raises:
        ValidationFailure: If sigma_delta is negative or the shells do not sit on the rings.
    """
    if sigma_delta < 0:
        raise ValidationFailure(f"Translation width must be non-negative, got {sigma_delta}")
    if volume.grid.R != grid.R or not np.allclose(volume.grid.k_nodes, grid.k_nodes, rtol=1e-12, atol=0.0):
        raise ValidationFailure("Volume shells must coincide with the polar grid rings")
    coeffs = volume.coeffs
    gram = np.conj(coeffs) @ coeffs.T
    b00 = coeffs[:, 0]
    envelope = translation_envelope(grid.k_nodes, sigma_delta)
    entries = (
        gram * translation_coupling(grid.k_nodes, sigma_delta)
        - np.outer(np.conj(b00), b00) * np.outer(envelope, envelope)
    )
    eta = radial_scale_factors(grid)
    entries = symmetrize(entries * np.outer(eta, eta))
    return KernelMatrix(entries=entries, kind=KernelKind.RADIAL_2D_TRANSLATED, scale_factors=eta)


def principal_basis(kern: KernelMatrix, H: int) -> PrincipalBasis:
    """
    Top-H eigenpairs of a kernel.

    Eigenvalues are sorted descending with a stable sort, so equal eigenvalues keep
    the solver's order. Each vector is signed so its first nonzero entry is positive.

    Raises:
        ValidationFailure: If H is outside [1, dim].
    """
    if int(H) != H or not 1 <= H <= kern.dim:
        raise ValidationFailure(f"Rank H={H} must lie in [1, {kern.dim}]")
    evals, evecs = np.linalg.eigh(kern.entries)
    order = np.argsort(-evals, kind="stable")[: int(H)]
    evals, evecs = evals[order], evecs[:, order]
    for h in range(evecs.shape[1]):
        nonzero = np.flatnonzero(np.abs(evecs[:, h]) > 1e-12)
        if nonzero.size and evecs[nonzero[0], h] < 0:
            evecs[:, h] = -evecs[:, h]
    return PrincipalBasis(
        vectors=evecs,
        eigenvalues=np.maximum(evals, 0.0),
        scale_factors=kern.scale_factors,
        kind=kern.kind,
    )


def captured_fraction(kern: KernelMatrix, H: int) -> float:
    """Share of trace(C) carried by the top-H eigenvalues."""
    evals = np.sort(np.linalg.eigvalsh(kern.entries))[::-1]
    trace = float(np.sum(evals))
    if trace <= 0.0:
        return 1.0
    return float(np.sum(evals[: int(H)]) / trace)


def compress_image(b: BesselImage, basis: PrincipalBasis) -> CompressedImage:
    """
    Project the eta-rescaled rings of an image onto the principal radial vectors.

    Raises:
        ValidationFailure: If the basis dimension differs from the number of rings.
    """
    if basis.dim != b.grid.R:
        raise ValidationFailure(f"Basis of dimension {basis.dim} cannot compress {b.grid.R} rings")
    coeffs = basis.vectors.T @ (basis.scale_factors[:, None] * b.coeffs)
    return CompressedImage(grid=b.grid, basis=basis, coeffs=coeffs)


def compress_images(images: Sequence[BesselImage], basis: PrincipalBasis) -> List[CompressedImage]:
    return [compress_image(img, basis) for img in images]


def _check_same_basis(a: CompressedImage, b: CompressedImage) -> None:
    if not a.basis.matches(b.basis) or not a.grid.matches(b.grid):
        raise ValidationFailure("Compressed images were built from different bases")


def _compressed_weight(grid: PolarGrid, H: int) -> np.ndarray:
    # eta^2 carries a dpsi the full landscape does not
    return np.full(H, 2.0 * np.pi / grid.dpsi)


def landscape_2d_compressed(a: CompressedImage, b: CompressedImage, Q_out: Optional[int] = None) -> Landscape1D:
    """
    Landscape from principal-image-rings, X^(q) = 2 pi sum_h [u_h^T A](q)^* [u_h^T B](q) / dpsi,
    followed by the same FFT step as the full landscape. Equals landscape_2d when H = R.

    Raises:
        ValidationFailure: On basis mismatch or Q_out < Q.
    """
    _check_same_basis(a, b)
    Q_out = a.grid.Q if Q_out is None else int(Q_out)
    if Q_out < a.grid.Q:
        raise ValidationFailure(f"Output length Q_out={Q_out} must be at least Q={a.grid.Q}")
    weights = _compressed_weight(a.grid, a.basis.H)
    xhat = np.sum(weights[:, None] * np.conj(a.coeffs) * b.coeffs, axis=0)
    return Landscape1D(values=landscape_from_spectrum(xhat, Q_out))


def landscape_2d_compressed_batch(
        images: Sequence[CompressedImage],
        targets: Sequence[CompressedImage],
        Q_out: Optional[int] = None,
        block_size: int = 16,
        workers: int = 1,
        progress: bool = False,
        timer=None,
) -> np.ndarray:
    """Compressed landscapes for all pairs, shape (N_A, N_B, Q_out)."""
    if not images or not targets:
        raise ValidationFailure("Expected at least one image and one target")
    reference = images[0]
    for item in list(images) + list(targets):
        _check_same_basis(reference, item)
    grid = reference.grid
    Q_out = grid.Q if Q_out is None else int(Q_out)
    if Q_out < grid.Q:
        raise ValidationFailure(f"Output length Q_out={Q_out} must be at least Q={grid.Q}")
    a_stack = np.stack([img.coeffs for img in images])
    b_stack = np.stack([img.coeffs for img in targets])
    return batched_landscapes(
        a_stack, b_stack, _compressed_weight(grid, reference.basis.H), Q_out,
        block_size=block_size, workers=workers, progress=progress, desc="compressed landscapes", timer=timer,
    )


def compressed_landscapes_by_group(
        images: Sequence[BesselImage],
        targets: Sequence[BesselImage],
        target_groups: Sequence[int],
        H: int,
        Q_out: Optional[int] = None,
        block_size: int = 16,
        workers: int = 1,
        progress: bool = False,
        psd_tolerance: float = 1e-10,
        timer=None,
        kernels: Optional[Dict[int, KernelMatrix]] = None,
) -> Tuple[np.ndarray, Dict[int, PrincipalBasis]]:
    """
    Rank-H landscapes of every image against every target, with one kernel and basis
    per target group (for example per CTF). Images are compressed once per group.

    Args:
        images (Sequence[BesselImage]): N_A images.
        targets (Sequence[BesselImage]): N_B targets.
        target_groups (Sequence[int]): Group key of every target.
        H (int): Rank kept in every group.
        Q_out (int, optional): Landscape length.
        psd_tolerance (float): Relative bound on negative kernel eigenvalues.
        timer (PhaseTimer, optional): Receives precompute and per-pair phase timings.
        kernels (Dict[int, KernelMatrix], optional): Kernels already built for some groups;
            the others are built here.

    Returns:
        Tuple[np.ndarray, Dict[int, PrincipalBasis]]: (N_A, N_B, Q_out) landscapes and
        the basis of every group.

    Raises:
        ValidationFailure: On mismatched inputs or H out of range.
        NumericalCheckError: If a group kernel is not positive semi-definite.
    """
    if not images or not targets:
        raise ValidationFailure("Expected at least one image and one target")
    target_groups = np.asarray(target_groups)
    if target_groups.shape != (len(targets),):
        raise ValidationFailure(f"Expected one group key per target, got {target_groups.shape}")
    grid = targets[0].grid
    Q_out = grid.Q if Q_out is None else int(Q_out)
    out = np.empty((len(images), len(targets), Q_out))
    bases: Dict[int, PrincipalBasis] = {}
    for group in np.unique(target_groups):
        members = np.flatnonzero(target_groups == group)
        group_targets = [targets[j] for j in members]
        with timed(timer, "precompute.kernel"):
            kern = (kernels or {}).get(int(group))
            if kern is None:
                kern = kernel_2d(group_targets, block_size, workers)
            elif kern.dim != grid.R:
                raise ValidationFailure(f"Kernel of group {group} has dimension {kern.dim}, expected {grid.R}")
            kern.check_psd(psd_tolerance)
        with timed(timer, "precompute.eigen"):
            basis = principal_basis(kern, H)
        with timed(timer, "precompute.compress_images"):
            compressed_images = compress_images(images, basis)
        with timed(timer, "precompute.compress_targets"):
            compressed_targets = compress_images(group_targets, basis)
        out[:, members, :] = landscape_2d_compressed_batch(
            compressed_images, compressed_targets, Q_out, block_size, workers, progress, timer=timer,
        )
        bases[int(group)] = basis
        logger.debug(f"Group {group}: {members.size} targets, rank {H}, captured {captured_fraction(kern, H):.4f}")
    return out, bases
