from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from src.align_utils.pairs import run_blocks, timed
from src.errors import ValidationFailure
from src.transform_utils.spharm import EulerAngles, SphVolume, rotate_coeffs, to_dense, wigner_d


@dataclass(frozen=True, eq=False)
class Landscape3D:
    """
    Inner products over Euler angles. values[j, a, g] is X at beta = betas[j],
    alpha = 2 pi a / M and gamma = 2 pi g / M.
    """
    betas: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        betas = np.asarray(self.betas, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 3 or values.shape[0] != betas.size or values.shape[1] != values.shape[2]:
            raise ValidationFailure(f"Landscape of shape {values.shape} does not match {betas.size} betas")
        object.__setattr__(self, "betas", betas)
        object.__setattr__(self, "values", values)

    @property
    def M(self) -> int:
        return self.values.shape[1]

    @property
    def angles(self) -> np.ndarray:
        return 2.0 * np.pi * np.arange(self.M) / self.M

    def tau_at(self, flat_index: int) -> EulerAngles:
        j, a, g = np.unravel_index(int(flat_index), self.values.shape)
        return EulerAngles(gamma=float(self.angles[g]), beta=float(self.betas[j]), alpha=float(self.angles[a]))

    @property
    def argmax_index(self) -> int:
        return int(np.argmax(self.values))

    @property
    def argmax_tau(self) -> EulerAngles:
        return self.tau_at(self.argmax_index)

    @property
    def max_value(self) -> float:
        return float(self.values.flat[self.argmax_index])


def default_beta_grid(M: int) -> np.ndarray:
    """M equispaced polar angles on [-pi, pi)."""
    if int(M) != M or M < 1:
        raise ValidationFailure(f"Beta count must be a positive integer, got {M}")
    return -np.pi + 2.0 * np.pi * np.arange(int(M)) / int(M)


def check_betas(betas) -> np.ndarray:
    betas = np.atleast_1d(np.asarray(betas, dtype=float))
    if betas.size == 0:
        raise ValidationFailure("At least one beta value is required")
    return betas


def _check_same_sphere(a, b) -> None:
    if not a.grid.matches(b.grid):
        raise ValidationFailure("Volumes live on different sphere grids")


def wigner_stack(betas: np.ndarray, L: int) -> np.ndarray:
    """Dense Wigner-d tables for every beta, shape (n_beta, L+1, M, M)."""
    return np.stack([wigner_d(beta, L).dense() for beta in betas])


def euler_fft(xhat: np.ndarray) -> np.ndarray:
    """
    Step 3: sum over orders m1, m2 in [-L, L] of xhat e^{-i m1 alpha} e^{-i m2 gamma}
    on the M x M angle grid (last two axes). Returns the real part.
    """
    shifted = np.fft.ifftshift(xhat, axes=(-2, -1))
    return np.fft.fft2(shifted, axes=(-2, -1)).real


def inner_product_tensor(a: SphVolume, b: SphVolume) -> np.ndarray:
    """
    Step 1: X~(m1, m2; l) = sum_r w_r A_l^m1(k_r)^* B_l^m2(k_r), shape (L+1, M, M).
    Independent of beta, computed once per pair.
    """
    _check_same_sphere(a, b)
    L = a.grid.L
    return np.einsum(
        "r,rlm,rln->lmn", a.grid.w_radial, np.conj(to_dense(a.coeffs, L)), to_dense(b.coeffs, L)
    )


def landscape_3d(a: SphVolume, b: SphVolume, betas: Sequence[float], tables: Optional[np.ndarray] = None) -> Landscape3D:
    """
    Volume inner-product landscape in three steps: combine shells (step 1), apply the
    Wigner-d tables of each beta (step 2) and a 2-D FFT over the remaining two angles
    (step 3).

    Args:
        a (SphVolume): Volume.
        b (SphVolume): Target on the same sphere grid; X measures a against rotated b.
        betas (Sequence[float]): Polar Euler angles.
        tables (np.ndarray, optional): Precomputed wigner_stack(betas, L).

    Returns:
        Landscape3D: Real landscape of shape (n_beta, M, M).

    Raises:
        ValidationFailure: On grid mismatch or empty betas.
    """
    betas = check_betas(betas)
    xt = inner_product_tensor(a, b)
    if tables is None:
        tables = wigner_stack(betas, a.grid.L)
    xhat = np.einsum("blmn,lmn->bmn", tables, xt)
    return Landscape3D(betas=betas, values=euler_fft(xhat))


def brute_force_landscape_3d(a: SphVolume, b: SphVolume, betas: Sequence[float]) -> Landscape3D:
    """Rotate the target to every grid rotation and take the quadrature inner product. Reference only."""
    _check_same_sphere(a, b)
    betas = check_betas(betas)
    L, M = a.grid.L, a.grid.M
    angles = 2.0 * np.pi * np.arange(M) / M
    weights = a.grid.w_radial[:, None]
    values = np.zeros((betas.size, M, M))
    for j, beta in enumerate(betas):
        table = wigner_d(beta, L)
        for ia, alpha in enumerate(angles):
            for ig, gamma in enumerate(angles):
                rotated = rotate_coeffs(b.coeffs, L, EulerAngles(gamma, beta, alpha), table)
                values[j, ia, ig] = np.sum(weights * np.conj(a.coeffs) * rotated).real
    return Landscape3D(betas=betas, values=values)


def landscape_3d_batch(
        volumes: Sequence[SphVolume],
        target: SphVolume,
        betas: Sequence[float],
        block_size: int = 4,
        workers: int = 1,
        progress: bool = False,
        tables: Optional[np.ndarray] = None,
        timer=None,
) -> np.ndarray:
    """
    Full landscapes of many volumes against one target, shape (N_A, n_beta, M, M).
    With a timer, the three steps are recorded as per_pair.step1 to per_pair.step3.
    """
    if not volumes:
        raise ValidationFailure("Expected at least one volume")
    betas = check_betas(betas)
    for vol in volumes:
        _check_same_sphere(vol, target)
    grid = target.grid
    if tables is None:
        tables = wigner_stack(betas, grid.L)
    a_dense = np.conj(to_dense(np.stack([vol.coeffs for vol in volumes]), grid.L))
    b_dense = to_dense(target.coeffs, grid.L)

    def block_landscapes(block: slice) -> np.ndarray:
        with timed(timer, "per_pair.step1"):
            xt = np.einsum("r,nrlm,rlk->nlmk", grid.w_radial, a_dense[block], b_dense)
        with timed(timer, "per_pair.step2"):
            xhat = np.einsum("blmk,nlmk->nbmk", tables, xt)
        with timed(timer, "per_pair.step3"):
            return euler_fft(xhat)

    parts = run_blocks(block_landscapes, len(volumes), block_size, workers, "full volume landscapes", progress)
    return np.concatenate(parts, axis=0)
