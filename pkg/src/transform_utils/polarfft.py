from dataclasses import dataclass

import numpy as np
from loguru import logger

from src.errors import ValidationFailure
from src.transform_utils.grids import PolarGrid


@dataclass(frozen=True, eq=False)
class CartImage:
    """N x N real image on [-1, 1]^2; pixel centers at dx(n+1/2)-1 on both axes."""
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2 or values.shape[0] != values.shape[1] or values.shape[0] < 2:
            raise ValidationFailure(f"Cartesian image must be square with N >= 2, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValidationFailure("Cartesian image contains non-finite values")
        object.__setattr__(self, "values", values)

    @property
    def N(self) -> int:
        return self.values.shape[0]

    @property
    def dx(self) -> float:
        return 2.0 / self.N

    @property
    def pixel_centers(self) -> np.ndarray:
        return self.dx * (np.arange(self.N) + 0.5) - 1.0


@dataclass(frozen=True, eq=False)
class PolarImage:
    """Fourier samples on the polar grid, R x Q complex."""
    grid: PolarGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=complex)
        if values.shape != (self.grid.R, self.grid.Q):
            raise ValidationFailure(
                f"Polar samples of shape {values.shape} do not match grid ({self.grid.R}, {self.grid.Q})"
            )
        object.__setattr__(self, "values", values)


@dataclass(frozen=True, eq=False)
class BesselImage:
    """Fourier-Bessel coefficients, R x Q complex, q stored in FFT order."""
    grid: PolarGrid
    coeffs: np.ndarray

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=complex)
        if coeffs.shape != (self.grid.R, self.grid.Q):
            raise ValidationFailure(
                f"Bessel coefficients of shape {coeffs.shape} do not match grid ({self.grid.R}, {self.grid.Q})"
            )
        object.__setattr__(self, "coeffs", coeffs)


def signed_frequencies(Q: int) -> np.ndarray:
    """Signed angular frequency of every FFT slot, periodic in [-Q/2+1, Q/2]."""
    idx = np.arange(Q)
    return np.where(idx <= Q // 2, idx, idx - Q)


def check_same_grid(a, b) -> PolarGrid:
    if not a.grid.matches(b.grid):
        raise ValidationFailure("Images live on different polar grids")
    return a.grid


def _ring_nodes(grid: PolarGrid, r: int) -> tuple:
    return grid.k_nodes[r] * np.cos(grid.psi_nodes), grid.k_nodes[r] * np.sin(grid.psi_nodes)


def _sample_ring_direct(values: np.ndarray, x: np.ndarray, kx: np.ndarray, ky: np.ndarray) -> np.ndarray:
    phase = kx[:, None, None] * x[None, :, None] + ky[:, None, None] * x[None, None, :]
    return np.einsum("ij,qij->q", values, np.exp(-1j * phase))


def _sample_ring_separable(values: np.ndarray, x: np.ndarray, kx: np.ndarray, ky: np.ndarray) -> np.ndarray:
    # matrix Fourier transform: the exponential factorizes over the two pixel axes
    e1 = np.exp(-1j * np.outer(kx, x))
    e2 = np.exp(-1j * np.outer(ky, x))
    return ((e1 @ values) * e2).sum(axis=1)


_SAMPLERS = {
    "direct": _sample_ring_direct,
    "separable": _sample_ring_separable,
}


def sample_polar(img: CartImage, grid: PolarGrid, method: str = "direct") -> PolarImage:
    """
    Evaluate the discrete Fourier transform of a Cartesian image at every polar node,
    F(k, psi) = dx^2 * sum_n A_n exp(-i k . x_n).

    Args:
        img (CartImage): Image to transform.
        grid (PolarGrid): Target nodes.
        method (str): "direct" for the literal exponential sum, "separable" for the
            factorized matrix Fourier transform. Both evaluate the same sum.

    Returns:
        PolarImage: R x Q complex samples.

    Raises:
        ValidationFailure: If the method is unknown.
    """
    if method not in _SAMPLERS:
        raise ValidationFailure(f"Unknown polar sampling method '{method}', expected one of {sorted(_SAMPLERS)}")
    nyquist = 0.5 * np.pi * img.N
    if grid.K > nyquist:
        logger.warning(f"Grid band limit K={grid.K} exceeds the image Nyquist limit {nyquist:.2f} (N={img.N})")
    sampler = _SAMPLERS[method]
    x = img.pixel_centers
    out = np.empty((grid.R, grid.Q), dtype=complex)
    for r in range(grid.R):
        kx, ky = _ring_nodes(grid, r)
        out[r] = sampler(img.values, x, kx, ky)
    return PolarImage(grid=grid, values=out * img.dx ** 2)


def bessel_forward(p: PolarImage) -> BesselImage:
    """Per-ring angular FFT carrying the dpsi factor: B(k, q) = sum_q' F(k, psi_q') e^{-i q psi_q'} dpsi."""
    return BesselImage(grid=p.grid, coeffs=np.fft.fft(p.values, axis=1) * p.grid.dpsi)


def bessel_inverse(b: BesselImage) -> PolarImage:
    return PolarImage(grid=b.grid, values=np.fft.ifft(b.coeffs, axis=1) / b.grid.dpsi)


def rotate_bessel(b: BesselImage, gamma: float) -> BesselImage:
    """
    Rotate an image by gamma in coefficient space. The rotated rings satisfy
    F'(k, psi) = F(k, psi - gamma); any real gamma is allowed.
    """
    q = signed_frequencies(b.grid.Q)
    return BesselImage(grid=b.grid, coeffs=b.coeffs * np.exp(-1j * q * gamma)[None, :])


def ring_power(b: BesselImage) -> np.ndarray:
    return np.sum(np.abs(b.coeffs) ** 2, axis=1)
