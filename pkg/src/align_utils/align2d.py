from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from src.align_utils.pairs import run_blocks, timed
from src.errors import ValidationFailure
from src.transform_utils.grids import PolarGrid
from src.transform_utils.polarfft import BesselImage, check_same_grid, signed_frequencies


@dataclass(frozen=True, eq=False)
class Landscape1D:
    """Inner products X(gamma) on the grid gamma_j = 2 pi j / Q_out."""
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1 or values.size == 0:
            raise ValidationFailure("Landscape must be a non-empty 1-D array")
        object.__setattr__(self, "values", values)

    @property
    def gammas(self) -> np.ndarray:
        return 2.0 * np.pi * np.arange(self.values.size) / self.values.size

    @property
    def argmax_index(self) -> int:
        # np.argmax returns the first maximum
        return int(np.argmax(self.values))

    @property
    def max_value(self) -> float:
        return float(self.values[self.argmax_index])


def _check_output_length(grid: PolarGrid, Q_out: Optional[int]) -> int:
    Q_out = grid.Q if Q_out is None else int(Q_out)
    if Q_out < grid.Q:
        raise ValidationFailure(f"Output length Q_out={Q_out} must be at least Q={grid.Q}")
    return Q_out


def landscape_from_spectrum(xhat: np.ndarray, Q_out: int) -> np.ndarray:
    """
    Step 2 of the alignment: zero-pad X^(q) (last axis, FFT order, length Q) to Q_out
    and evaluate X(gamma_j) = sum_q X^(q) exp(+i q gamma_j). Returns the real part.
    """
    Q = xhat.shape[-1]
    slots = signed_frequencies(Q) % Q_out
    padded = np.zeros(xhat.shape[:-1] + (Q_out,), dtype=complex)
    padded[..., slots] = xhat
    return (np.fft.ifft(padded, axis=-1) * Q_out).real


def landscape_2d(a: BesselImage, b: BesselImage, Q_out: Optional[int] = None) -> Landscape1D:
    """
    Inner-product landscape between an image and a target in two steps.

    Step 1 combines the rings with the radial quadrature,
    X^(q) = 2 pi sum_r w_r A(k_r, q)^* B(k_r, q), in O(RQ). Step 2 recovers X(gamma)
    on Q_out equispaced angles with one FFT. X peaks at gamma0 when b is a rotated
    by gamma0.

    Args:
        a (BesselImage): Image.
        b (BesselImage): Target on the same grid.
        Q_out (int, optional): Output length, at least Q. Defaults to Q.

    Returns:
        Landscape1D: Real part of the inner products.

    Raises:
        ValidationFailure: On grid mismatch or Q_out < Q.
    """
    grid = check_same_grid(a, b)
    Q_out = _check_output_length(grid, Q_out)
    xhat = 2.0 * np.pi * np.sum(grid.w_radial[:, None] * np.conj(a.coeffs) * b.coeffs, axis=0)
    return Landscape1D(values=landscape_from_spectrum(xhat, Q_out))


def brute_force_landscape_2d(a: BesselImage, b: BesselImage, Q_out: Optional[int] = None) -> Landscape1D:
    """Literal double sum over rings and frequencies for every output angle. Reference only."""
    grid = check_same_grid(a, b)
    Q_out = _check_output_length(grid, Q_out)
    q = signed_frequencies(grid.Q)
    values = np.zeros(Q_out)
    for j in range(Q_out):
        gamma = 2.0 * np.pi * j / Q_out
        total = 0.0 + 0.0j
        for r in range(grid.R):
            total += 2.0 * np.pi * grid.w_radial[r] * np.sum(
                np.conj(a.coeffs[r]) * b.coeffs[r] * np.exp(1j * q * gamma)
            )
        values[j] = total.real
    return Landscape1D(values=values)


def argmax_refine(landscape: Landscape1D, refine: bool = True) -> float:
    """
    Angle of the landscape maximum, ties broken toward the smallest index.

    With refine, a parabola through the maximum and its two periodic neighbours
    moves the estimate by at most half a grid step. Flat neighbourhoods are left
    unrefined.
    """
    values = landscape.values
    n = values.size
    idx = landscape.argmax_index
    step = 2.0 * np.pi / n
    if not refine or n < 3:
        return idx * step
    y_minus, y0, y_plus = values[(idx - 1) % n], values[idx], values[(idx + 1) % n]
    curvature = y_minus - 2.0 * y0 + y_plus
    if curvature >= 0.0:
        return idx * step
    offset = float(np.clip(0.5 * (y_minus - y_plus) / curvature, -0.5, 0.5))
    return ((idx + offset) * step) % (2.0 * np.pi)


def stack_coeffs(images: Sequence[BesselImage], grid: Optional[PolarGrid] = None) -> np.ndarray:
    """Stack Bessel coefficients of images sharing one grid into an (N, R, Q) array."""
    if len(images) == 0:
        raise ValidationFailure("Expected at least one image")
    grid = images[0].grid if grid is None else grid
    for img in images:
        if not img.grid.matches(grid):
            raise ValidationFailure("Images live on different polar grids")
    return np.stack([img.coeffs for img in images])


def batched_spectra(a_stack: np.ndarray, b_stack: np.ndarray, row_weights: np.ndarray) -> np.ndarray:
    """
    X^(q) for all pairs: sum_r row_weights_r a[i, r, q]^* b[j, r, q], shape (N_A, N_B, Q).
    One matrix product per frequency.
    """
    left = np.conj(a_stack) * row_weights[None, :, None]
    xhat = np.matmul(left.transpose(2, 0, 1), b_stack.transpose(2, 1, 0))
    return xhat.transpose(1, 2, 0)


def batched_landscapes(
        a_stack: np.ndarray,
        b_stack: np.ndarray,
        row_weights: np.ndarray,
        Q_out: int,
        block_size: int = 16,
        workers: int = 1,
        progress: bool = False,
        desc: str = "landscapes",
        timer=None,
) -> np.ndarray:
    """
    Landscapes for every (image, target) pair, computed over fixed blocks of images.
    With a timer, step 1 and step 2 are recorded as per_pair.step1 and per_pair.step2.
    """

    def block_landscapes(block: slice) -> np.ndarray:
        with timed(timer, "per_pair.step1"):
            xhat = batched_spectra(a_stack[block], b_stack, row_weights)
        with timed(timer, "per_pair.step2"):
            return landscape_from_spectrum(xhat, Q_out)

    parts = run_blocks(block_landscapes, a_stack.shape[0], block_size, workers, desc, progress)
    return np.concatenate(parts, axis=0)


def landscape_2d_batch(
        images: Sequence[BesselImage],
        targets: Sequence[BesselImage],
        Q_out: Optional[int] = None,
        block_size: int = 16,
        workers: int = 1,
        progress: bool = False,
        timer=None,
) -> np.ndarray:
    """
    Full-rank landscapes for all image-target pairs.

    Returns:
        np.ndarray: Real array of shape (N_A, N_B, Q_out).
    """
    grid = images[0].grid if images else None
    a_stack = stack_coeffs(images, grid)
    b_stack = stack_coeffs(targets, grid)
    Q_out = _check_output_length(grid, Q_out)
    return batched_landscapes(
        a_stack, b_stack, 2.0 * np.pi * grid.w_radial, Q_out,
        block_size=block_size, workers=workers, progress=progress, desc="full landscapes", timer=timer,
    )
