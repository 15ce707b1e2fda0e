import math
from dataclasses import dataclass

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

from src.errors import ValidationFailure


@dataclass(frozen=True, eq=False)
class PolarGrid:
    """
    Quadrature geometry for 2-D Fourier images.

    Attributes:
        K (float): Maximum frequency magnitude.
        R (int): Number of radial nodes.
        Q (int): Number of equispaced angular nodes (even).
        k_nodes (np.ndarray): Radial nodes in (0, K), strictly increasing.
        w_radial (np.ndarray): Radial weights for the measure k dk.
    """
    K: float
    R: int
    Q: int
    k_nodes: np.ndarray
    w_radial: np.ndarray

    @property
    def dpsi(self) -> float:
        return 2.0 * np.pi / self.Q

    @property
    def psi_nodes(self) -> np.ndarray:
        return np.arange(self.Q) * self.dpsi

    @property
    def node_weights(self) -> np.ndarray:
        """R x Q area weights w_r * dpsi."""
        return np.repeat((self.w_radial * self.dpsi)[:, None], self.Q, axis=1)

    def matches(self, other: "PolarGrid") -> bool:
        return (
            self is other
            or (
                self.R == other.R
                and self.Q == other.Q
                and self.K == other.K
                and np.array_equal(self.k_nodes, other.k_nodes)
                and np.array_equal(self.w_radial, other.w_radial)
            )
        )


@dataclass(frozen=True, eq=False)
class SphereGrid:
    """
    Quadrature geometry for 3-D Fourier volumes: radial shells against k^2 dk,
    Gauss-Legendre nodes in cos(theta) and equispaced azimuths on each shell.
    """
    K: float
    R: int
    L: int
    k_nodes: np.ndarray
    w_radial: np.ndarray
    polar_nodes: np.ndarray
    polar_weights: np.ndarray
    azimuth_nodes: np.ndarray

    @property
    def M(self) -> int:
        return 2 * self.L + 1

    @property
    def n_polar(self) -> int:
        return self.polar_nodes.size

    @property
    def n_azimuth(self) -> int:
        return self.azimuth_nodes.size

    @property
    def n_lm(self) -> int:
        return (self.L + 1) ** 2

    @property
    def sphere_weights(self) -> np.ndarray:
        """Flattened (n_polar * n_azimuth) quadrature weights on the unit sphere."""
        dphi = 2.0 * np.pi / self.n_azimuth
        return np.repeat(self.polar_weights * dphi, self.n_azimuth)

    def sphere_points(self) -> np.ndarray:
        """Unit vectors of the angular nodes, shape (n_polar * n_azimuth, 3), azimuth fastest."""
        cos_t = np.repeat(self.polar_nodes, self.n_azimuth)
        sin_t = np.sqrt(np.clip(1.0 - cos_t ** 2, 0.0, None))
        phi = np.tile(self.azimuth_nodes, self.n_polar)
        return np.stack([sin_t * np.cos(phi), sin_t * np.sin(phi), cos_t], axis=1)

    def matches(self, other: "SphereGrid") -> bool:
        return (
            self is other
            or (
                self.R == other.R
                and self.L == other.L
                and self.K == other.K
                and np.array_equal(self.k_nodes, other.k_nodes)
                and np.array_equal(self.w_radial, other.w_radial)
                and np.array_equal(self.polar_nodes, other.polar_nodes)
                and self.n_azimuth == other.n_azimuth
            )
        )


def default_radial_count(K: float) -> int:
    """R = ceil(K) + 1, which gives R=49 at K=48."""
    return int(math.ceil(K)) + 1


def _check_band_limit(K: float, R: int) -> None:
    if not np.isfinite(K) or K <= 0:
        raise ValidationFailure(f"Maximum frequency K must be positive and finite, got {K}")
    if int(R) != R or R < 1:
        raise ValidationFailure(f"Radial node count R must be a positive integer, got {R}")


def radial_quadrature(K: float, R: int, power: int) -> tuple:
    """
    Gauss-Jacobi nodes and weights on [0, K] for the measure k^power dk.

    The Jacobi weight (1+t)^power on [-1, 1] is mapped to [0, K] with k = K(t+1)/2,
    so the weights pick up a factor (K/2)^(power+1).

    Args:
        K (float): Upper end of the radial interval.
        R (int): Number of nodes.
        power (int): 1 for k dk (images), 2 for k^2 dk (volumes).

    Returns:
        Tuple[np.ndarray, np.ndarray]: Increasing nodes in (0, K) and positive weights.
    """
    _check_band_limit(K, R)
    t, wt = roots_jacobi(int(R), 0.0, float(power))
    order = np.argsort(t, kind="stable")
    t, wt = t[order], wt[order]
    half = 0.5 * float(K)
    return half * (t + 1.0), wt * half ** (power + 1)


def build_polar_grid(K: float, R: int, Q: int) -> PolarGrid:
    """
    Build the polar quadrature grid used by every 2-D transform and inner product.

    Args:
        K (float): Maximum frequency magnitude, K > 0.
        R (int): Number of radial Gauss-Jacobi nodes, R >= 1.
        Q (int): Number of equispaced angular nodes, even and >= 2.

    Returns:
        PolarGrid: The grid, with sum(w_radial) = K^2/2.

    Raises:
        ValidationFailure: If K is not positive, R is zero or Q is odd or too small.
    """
    if int(Q) != Q or Q < 2 or Q % 2:
        raise ValidationFailure(f"Angular node count Q must be an even integer >= 2, got {Q}")
    k_nodes, w_radial = radial_quadrature(K, R, power=1)
    return PolarGrid(K=float(K), R=int(R), Q=int(Q), k_nodes=k_nodes, w_radial=w_radial)


def angular_sphere_nodes(L: int) -> tuple:
    """Gauss-Legendre nodes in cos(theta) (L+1 of them) and 2L+2 equispaced azimuths."""
    cos_t, w_leg = roots_legendre(int(L) + 1)
    order = np.argsort(cos_t, kind="stable")
    n_phi = 2 * int(L) + 2
    return cos_t[order], w_leg[order], np.arange(n_phi) * (2.0 * np.pi / n_phi)


def build_sphere_grid(K: float, R: int, L: int) -> SphereGrid:
    """
    Build the spherical quadrature grid for volumes.

    Raises:
        ValidationFailure: If K is not positive, R is zero or L is negative.
    """
    if int(L) != L or L < 0:
        raise ValidationFailure(f"Maximum degree L must be a non-negative integer, got {L}")
    k_nodes, w_radial = radial_quadrature(K, R, power=2)
    return sphere_grid_on_nodes(k_nodes, w_radial, K, L)


def sphere_grid_on_nodes(k_nodes: np.ndarray, w_radial: np.ndarray, K: float, L: int) -> SphereGrid:
    """
    SphereGrid with caller-supplied shells. Used to sample a volume on the rings of a
    polar grid, where the radial weights are those of the 2-D measure.
    """
    k_nodes = np.asarray(k_nodes, dtype=float)
    w_radial = np.asarray(w_radial, dtype=float)
    if k_nodes.shape != w_radial.shape or k_nodes.ndim != 1:
        raise ValidationFailure("Radial nodes and weights must be 1-D arrays of equal length")
    cos_t, w_leg, phi = angular_sphere_nodes(L)
    return SphereGrid(
        K=float(K), R=k_nodes.size, L=int(L),
        k_nodes=k_nodes, w_radial=w_radial,
        polar_nodes=cos_t, polar_weights=w_leg, azimuth_nodes=phi,
    )
