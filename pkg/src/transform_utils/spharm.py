from dataclasses import dataclass
from functools import lru_cache
from typing import List, NamedTuple, Optional

import numpy as np

from src.errors import ValidationFailure
from src.transform_utils.grids import SphereGrid, angular_sphere_nodes


class EulerAngles(NamedTuple):
    """Rotation R = R_z(alpha) R_y(beta) R_z(gamma); gamma acts first."""
    gamma: float
    beta: float
    alpha: float


@dataclass(frozen=True, eq=False)
class SphVolume:
    """Spherical-harmonic coefficients per shell, packed at index l^2 + l + m, shape (R, (L+1)^2)."""
    grid: SphereGrid
    coeffs: np.ndarray

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=complex)
        if coeffs.shape != (self.grid.R, self.grid.n_lm):
            raise ValidationFailure(
                f"Volume coefficients of shape {coeffs.shape} do not match grid ({self.grid.R}, {self.grid.n_lm})"
            )
        object.__setattr__(self, "coeffs", coeffs)


@dataclass(frozen=True, eq=False)
class WignerDTable:
    beta: float
    L: int
    blocks: List[np.ndarray]

    def dense(self) -> np.ndarray:
        """(L+1, M, M) stack with block l embedded at orders -l..l and zeros elsewhere."""
        M = 2 * self.L + 1
        out = np.zeros((self.L + 1, M, M))
        for l, block in enumerate(self.blocks):
            lo, hi = self.L - l, self.L + l + 1
            out[l, lo:hi, lo:hi] = block
        return out


def lm_index(l: int, m: int) -> int:
    return l * l + l + m


def degree_slice(l: int) -> slice:
    return slice(l * l, (l + 1) * (l + 1))


def degree_of_index(L: int) -> np.ndarray:
    return np.concatenate([np.full(2 * l + 1, l) for l in range(L + 1)])


def order_of_index(L: int) -> np.ndarray:
    return np.concatenate([np.arange(-l, l + 1) for l in range(L + 1)])


def normalized_legendre(L: int, x: np.ndarray) -> np.ndarray:
    """
    Orthonormalized associated Legendre functions with the Condon-Shortley phase,
    P[l, m] for 0 <= m <= l <= L, so that Y_l^m = P[l, m](cos theta) e^{i m phi}.
    Upward recurrence in the normalized functions; no factorials are formed.
    """
    x = np.asarray(x, dtype=float)
    s = np.sqrt(np.clip(1.0 - x ** 2, 0.0, None))
    P = np.zeros((L + 1, L + 1) + x.shape)
    P[0, 0] = 1.0 / np.sqrt(4.0 * np.pi)
    for m in range(1, L + 1):
        P[m, m] = -np.sqrt((2.0 * m + 1.0) / (2.0 * m)) * s * P[m - 1, m - 1]
    for m in range(0, L):
        P[m + 1, m] = np.sqrt(2.0 * m + 3.0) * x * P[m, m]
    for m in range(0, L + 1):
        for l in range(m + 2, L + 1):
            a = np.sqrt((4.0 * l * l - 1.0) / (l * l - m * m))
            b = np.sqrt(((l - 1.0) ** 2 - m * m) / (4.0 * (l - 1.0) ** 2 - 1.0))
            P[l, m] = a * (x * P[l - 1, m] - b * P[l - 2, m])
    return P


def spherical_harmonics(L: int, cos_theta: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """Y_l^m at the given points, shape (n_points, (L+1)^2), packed at l^2 + l + m."""
    cos_theta = np.asarray(cos_theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    P = normalized_legendre(L, cos_theta)
    Y = np.zeros((cos_theta.size, (L + 1) ** 2), dtype=complex)
    for l in range(L + 1):
        for m in range(0, l + 1):
            y = P[l, m] * np.exp(1j * m * phi)
            Y[:, lm_index(l, m)] = y
            if m:
                Y[:, lm_index(l, -m)] = (-1) ** m * np.conj(y)
    return Y


@lru_cache(maxsize=16)
def _harmonic_matrix(L: int, n_polar: int, n_azimuth: int) -> np.ndarray:
    cos_t, _, _ = angular_sphere_nodes(n_polar - 1)
    phi = np.arange(n_azimuth) * (2.0 * np.pi / n_azimuth)
    Y = spherical_harmonics(L, np.repeat(cos_t, n_azimuth), np.tile(phi, n_polar))
    Y.setflags(write=False)
    return Y


def harmonic_matrix(grid: SphereGrid) -> np.ndarray:
    """Y_l^m sampled at the sphere nodes of a grid, (n_polar * n_azimuth, (L+1)^2), read-only."""
    return _harmonic_matrix(grid.L, grid.n_polar, grid.n_azimuth)


def sph_forward(samples: np.ndarray, grid: SphereGrid) -> np.ndarray:
    """
    Spherical-harmonic analysis of shell samples by sphere quadrature,
    A_l^m = sum_nodes w Y_l^m^* F. Exact for inputs band-limited to L.

    Args:
        samples (np.ndarray): (R, n_nodes) or (n_nodes,) values at the sphere nodes.
        grid (SphereGrid): Grid the samples live on.

    Returns:
        np.ndarray: Coefficients with the same leading shape and (L+1)^2 columns.

    Raises:
        ValidationFailure: If the sample count does not match the grid.
    """
    samples = np.asarray(samples)
    n_nodes = grid.n_polar * grid.n_azimuth
    if samples.shape[-1] != n_nodes:
        raise ValidationFailure(f"Expected {n_nodes} sphere samples per shell, got {samples.shape[-1]}")
    return (samples * grid.sphere_weights) @ np.conj(harmonic_matrix(grid))


def sph_synthesis(coeffs: np.ndarray, grid: SphereGrid) -> np.ndarray:
    coeffs = np.asarray(coeffs)
    if coeffs.shape[-1] != grid.n_lm:
        raise ValidationFailure(f"Expected {grid.n_lm} coefficients per shell, got {coeffs.shape[-1]}")
    return coeffs @ harmonic_matrix(grid).T


@lru_cache(maxsize=128)
def _jy_eigensystem(l: int) -> tuple:
    # J_y = (J_+ - J_-) / 2i on orders -l..l
    m = np.arange(-l, l)
    j_plus = np.zeros((2 * l + 1, 2 * l + 1))
    j_plus[np.arange(1, 2 * l + 1), np.arange(0, 2 * l)] = np.sqrt(l * (l + 1) - m * (m + 1))
    j_y = (j_plus - j_plus.T) / 2j
    evals, evecs = np.linalg.eigh(j_y)
    evals = np.round(evals)
    evecs.setflags(write=False)
    return evals, evecs


def wigner_d_block(l: int, beta: float) -> np.ndarray:
    """d^l(beta) = exp(-i beta J_y), rows and columns ordered m = -l..l."""
    if l == 0:
        return np.ones((1, 1))
    evals, evecs = _jy_eigensystem(l)
    return np.real((evecs * np.exp(-1j * beta * evals)[None, :]) @ np.conj(evecs).T)


def wigner_d(beta: float, L: int) -> WignerDTable:
    """Wigner-d blocks for degrees 0..L at one polar Euler angle."""
    if int(L) != L or L < 0:
        raise ValidationFailure(f"Maximum degree L must be a non-negative integer, got {L}")
    return WignerDTable(beta=float(beta), L=int(L), blocks=[wigner_d_block(l, beta) for l in range(int(L) + 1)])


def rotate_coeffs(coeffs: np.ndarray, L: int, tau: EulerAngles, table: Optional[WignerDTable] = None) -> np.ndarray:
    """Apply B_l^m = sum_m' e^{-i m alpha} d^l_{m m'}(beta) e^{-i m' gamma} A_l^m' to packed rows."""
    gamma, beta, alpha = tau
    if table is None or table.beta != beta or table.L < L:
        table = wigner_d(beta, L)
    out = np.empty_like(coeffs, dtype=complex)
    for l in range(L + 1):
        m = np.arange(-l, l + 1)
        sl = degree_slice(l)
        block = (coeffs[..., sl] * np.exp(-1j * m * gamma)) @ table.blocks[l].T
        out[..., sl] = block * np.exp(-1j * m * alpha)
    return out


def rotate_sph(vol: SphVolume, tau: EulerAngles, table: Optional[WignerDTable] = None) -> SphVolume:
    """
    Rotate a volume in coefficient space; the result represents k -> A(R^-1 k) with
    R = R_z(alpha) R_y(beta) R_z(gamma).
    """
    return SphVolume(grid=vol.grid, coeffs=rotate_coeffs(vol.coeffs, vol.grid.L, EulerAngles(*tau), table))


def sph_power(vol: SphVolume) -> np.ndarray:
    """Per-shell, per-degree power sum_m |A_l^m|^2, shape (R, L+1)."""
    power = np.abs(vol.coeffs) ** 2
    return np.stack([power[:, degree_slice(l)].sum(axis=1) for l in range(vol.grid.L + 1)], axis=1)


def to_dense(coeffs: np.ndarray, L: int) -> np.ndarray:
    """Unpack (..., (L+1)^2) coefficients to (..., L+1, 2L+1) with order m at column m + L."""
    out = np.zeros(coeffs.shape[:-1] + (L + 1, 2 * L + 1), dtype=complex)
    for l in range(L + 1):
        out[..., l, L - l:L + l + 1] = coeffs[..., degree_slice(l)]
    return out


def rotation_z(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rotation_y(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def euler_to_matrix(tau: EulerAngles) -> np.ndarray:
    gamma, beta, alpha = tau
    return rotation_z(alpha) @ rotation_y(beta) @ rotation_z(gamma)


def matrix_to_euler(rot: np.ndarray) -> EulerAngles:
    """ZYZ angles of a rotation matrix with beta in [0, pi]; gamma is set to 0 when beta is 0 or pi."""
    beta = float(np.arccos(np.clip(rot[2, 2], -1.0, 1.0)))
    if np.sin(beta) > 1e-12:
        alpha = float(np.arctan2(rot[1, 2], rot[0, 2]))
        gamma = float(np.arctan2(rot[2, 1], -rot[2, 0]))
    elif rot[2, 2] > 0:
        alpha, gamma = float(np.arctan2(rot[1, 0], rot[0, 0])), 0.0
    else:
        alpha, gamma = float(np.arctan2(-rot[1, 0], -rot[0, 0])), 0.0
    return EulerAngles(gamma=gamma, beta=beta, alpha=alpha)


def compose_euler(tau_outer: EulerAngles, tau_inner: EulerAngles) -> EulerAngles:
    """Angles of R(tau_outer) R(tau_inner): rotate by tau_inner first."""
    return matrix_to_euler(euler_to_matrix(tau_outer) @ euler_to_matrix(tau_inner))
