import json
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from loguru import logger
from pydantic import BaseModel, Field, field_validator

from src.errors import ValidationFailure
from src.transform_utils.grids import PolarGrid, SphereGrid
from src.transform_utils.polarfft import (
    BesselImage, CartImage, PolarImage, bessel_forward, bessel_inverse, check_same_grid, rotate_bessel, sample_polar,
)
from src.transform_utils.spharm import EulerAngles, SphVolume, euler_to_matrix, rotate_sph, sph_forward

PHANTOM_DIR = Path(__file__).resolve().parent / "phantoms"


class Blob(BaseModel):
    """Isotropic Gaussian amp * exp(-|x - c|^2 / (2 s^2))."""
    center: Tuple[float, float, float]
    width: float = Field(gt=0)
    amplitude: float

    @field_validator("center")
    @classmethod
    def center_in_unit_ball(cls, value):
        if float(np.linalg.norm(value)) >= 1.0:
            raise ValueError(f"Blob center {value} lies outside the unit ball")
        return value


class BlobPhantom(BaseModel):
    name: str = "phantom"
    blobs: List[Blob]

    @property
    def centers(self) -> np.ndarray:
        return np.array([blob.center for blob in self.blobs], dtype=float).reshape(-1, 3)

    @property
    def widths(self) -> np.ndarray:
        return np.array([blob.width for blob in self.blobs], dtype=float)

    @property
    def amplitudes(self) -> np.ndarray:
        return np.array([blob.amplitude for blob in self.blobs], dtype=float)

    def rotated(self, tau: EulerAngles) -> "BlobPhantom":
        """Phantom x -> A(R^-1 x): every center moves to R c."""
        rot = euler_to_matrix(tau)
        blobs = [
            Blob(center=tuple(rot @ np.asarray(blob.center)), width=blob.width, amplitude=blob.amplitude)
            for blob in self.blobs
        ]
        return BlobPhantom(name=self.name, blobs=blobs)

    def scaled(self, factor: float) -> "BlobPhantom":
        blobs = [Blob(center=blob.center, width=blob.width, amplitude=factor * blob.amplitude) for blob in self.blobs]
        return BlobPhantom(name=self.name, blobs=blobs)


class NoiseSpec(BaseModel):
    """Real-space noise of unit-scale standard deviation sigma, seeded."""
    sigma: float = Field(default=0.0, ge=0)
    seed: int = Field(default=0, ge=0, lt=2 ** 64)

    def sigma_hat(self, dx: float) -> float:
        """Frequency-space counterpart, sigma_hat^2 = pi^2 sigma^2 / dx^2."""
        return float(np.pi * self.sigma / dx)


@dataclass(frozen=True, eq=False)
class CtfProfile:
    """Radial contrast-transfer samples c(k_r), one per ring."""
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1 or not np.all(np.isfinite(values)):
            raise ValidationFailure("CTF profile must be a finite 1-D array")
        object.__setattr__(self, "values", values)


def load_phantom(source: Union[str, Path] = "asymmetric_six_blob") -> BlobPhantom:
    """
    Load a phantom from a JSON file, or by name from the bundled phantom library.

    Raises:
        ValidationFailure: If neither a file nor a bundled phantom of that name exists.
    """
    path = Path(source)
    if not path.is_file():
        path = PHANTOM_DIR / f"{source}.json"
    if not path.is_file():
        raise ValidationFailure(f"No phantom file or bundled phantom named '{source}'")
    return BlobPhantom.model_validate_json(path.read_text())


def counter_rng(seed: int, index: int = 0) -> np.random.Generator:
    """Counter-based generator keyed by seed XOR index; draws do not depend on call order."""
    return np.random.Generator(np.random.Philox(key=int(seed) ^ int(index)))


def phantom_ft(phantom: BlobPhantom, points: np.ndarray) -> np.ndarray:
    """Closed-form 3-D Fourier transform, sum amp (2 pi s^2)^{3/2} exp(-s^2 |k|^2 / 2) exp(-i k . c)."""
    points = np.asarray(points, dtype=float)
    k2 = np.sum(points ** 2, axis=-1)
    out = np.zeros(points.shape[:-1], dtype=complex)
    for center, width, amplitude in zip(phantom.centers, phantom.widths, phantom.amplitudes):
        envelope = amplitude * (2.0 * np.pi * width ** 2) ** 1.5 * np.exp(-0.5 * width ** 2 * k2)
        out += envelope * np.exp(-1j * (points @ center))
    return out


def phantom_polar_template(phantom: BlobPhantom, tau: EulerAngles, grid: PolarGrid) -> PolarImage:
    """
    Template S(k, psi) = A^(R_tau (k cos psi, k sin psi, 0)): the central slice of the
    phantom's transform, i.e. the transform of its projection along R_tau e_z.
    """
    rot = euler_to_matrix(EulerAngles(*tau))
    k = grid.k_nodes[:, None]
    plane = np.stack(
        [k * np.cos(grid.psi_nodes)[None, :], k * np.sin(grid.psi_nodes)[None, :], np.zeros((grid.R, grid.Q))],
        axis=-1,
    )
    return PolarImage(grid=grid, values=phantom_ft(phantom, plane @ rot.T))


def phantom_cart_projection(phantom: BlobPhantom, tau: EulerAngles, N: int) -> CartImage:
    """
    Real-space projection matching phantom_polar_template: integral over z of A(R_tau x).
    Each blob projects to amp sqrt(2 pi) s exp(-|xy - (R^T c)_xy|^2 / (2 s^2)).
    """
    rot = euler_to_matrix(EulerAngles(*tau))
    centers = phantom.centers @ rot  # rows are R^T c
    x = 2.0 / N * (np.arange(N) + 0.5) - 1.0
    values = np.zeros((N, N))
    for center, width, amplitude in zip(centers, phantom.widths, phantom.amplitudes):
        gx = np.exp(-0.5 * ((x - center[0]) / width) ** 2)
        gy = np.exp(-0.5 * ((x - center[1]) / width) ** 2)
        values += amplitude * np.sqrt(2.0 * np.pi) * width * np.outer(gx, gy)
    return CartImage(values=values)


def phantom_sph_volume(phantom: BlobPhantom, grid: SphereGrid) -> SphVolume:
    """Sample the analytic transform on every shell and expand in spherical harmonics."""
    if phantom.blobs:
        reach = grid.K * float(np.max(np.linalg.norm(phantom.centers, axis=1)))
        if reach > grid.L:
            logger.warning(f"Phantom angular content (K*|c|max={reach:.1f}) exceeds band limit L={grid.L}")
    points = grid.k_nodes[:, None, None] * grid.sphere_points()[None, :, :]
    return SphVolume(grid=grid, coeffs=sph_forward(phantom_ft(phantom, points), grid))


def toy_ctf(grid: PolarGrid, lam: float) -> CtfProfile:
    """Sign-oscillating radial profile c(k) = -sin(pi lam k^2 / 2)."""
    return CtfProfile(values=-np.sin(0.5 * np.pi * lam * grid.k_nodes ** 2))


def apply_ctf(t: PolarImage, ctf: CtfProfile) -> PolarImage:
    if ctf.values.size != t.grid.R:
        raise ValidationFailure(f"CTF profile has {ctf.values.size} samples for {t.grid.R} rings")
    return PolarImage(grid=t.grid, values=t.values * ctf.values[:, None])


def add_noise_cart(img: CartImage, spec: NoiseSpec, index: int = 0) -> CartImage:
    """Add iid N(0, sigma^2 / dx^2) pixel noise drawn from the (seed XOR index) stream."""
    if spec.sigma == 0.0:
        return img
    noise = counter_rng(spec.seed, index).normal(0.0, spec.sigma / img.dx, size=img.values.shape)
    return CartImage(values=img.values + noise)


def add_noise_polar(p: PolarImage, sigma_hat: float, seed: int, index: int = 0) -> PolarImage:
    """
    Frequency-space noise model: independent complex Gaussians with variance
    sigma_hat^2 / (w_r dpsi) at every node, split evenly between real and imaginary parts.
    """
    if sigma_hat < 0:
        raise ValidationFailure(f"Noise level must be non-negative, got {sigma_hat}")
    if sigma_hat == 0.0:
        return p
    grid = p.grid
    std = sigma_hat / np.sqrt(2.0 * grid.w_radial * grid.dpsi)
    draws = counter_rng(seed, index).standard_normal(size=(2, grid.R, grid.Q))
    return PolarImage(grid=grid, values=p.values + std[:, None] * (draws[0] + 1j * draws[1]))


def add_noise_sph(vol: SphVolume, sigma_hat: float, seed: int, index: int = 0) -> SphVolume:
    """Volume analog of add_noise_polar: variance sigma_hat^2 / w_r per coefficient."""
    if sigma_hat == 0.0:
        return vol
    std = sigma_hat / np.sqrt(2.0 * vol.grid.w_radial)
    draws = counter_rng(seed, index).standard_normal(size=(2,) + vol.coeffs.shape)
    return SphVolume(grid=vol.grid, coeffs=vol.coeffs + std[:, None] * (draws[0] + 1j * draws[1]))


def quadrature_energy(p: PolarImage) -> float:
    return float(np.sum(np.abs(p.values) ** 2 * p.grid.node_weights))


def sigma_hat_for_snr(signal: Union[PolarImage, Sequence[PolarImage]], snr: float) -> float:
    """
    Noise level whose expected quadrature energy R Q sigma_hat^2 equals the mean
    signal energy divided by snr.
    """
    if snr <= 0:
        raise ValidationFailure(f"SNR must be positive, got {snr}")
    signals = [signal] if isinstance(signal, PolarImage) else list(signal)
    energy = float(np.mean([quadrature_energy(s) for s in signals]))
    grid = signals[0].grid
    return float(np.sqrt(energy / (snr * grid.R * grid.Q)))


def log_likelihood(a: PolarImage, b: PolarImage, sigma_hat: float) -> float:
    """
    -(1 / (2 sigma_hat^2)) sum_{r,q'} |A - B|^2 w_r dpsi.

    Raises:
        ValidationFailure: If sigma_hat is not positive or the grids differ.
    """
    if sigma_hat <= 0:
        raise ValidationFailure(f"Noise level must be positive, got {sigma_hat}")
    grid = check_same_grid(a, b)
    return float(-np.sum(np.abs(a.values - b.values) ** 2 * grid.node_weights) / (2.0 * sigma_hat ** 2))


def misfit_landscape(a: BesselImage, b: BesselImage, Q_out: Optional[int] = None) -> np.ndarray:
    """Squared quadrature distance between the image and the target rotated by each output angle."""
    grid = check_same_grid(a, b)
    Q_out = grid.Q if Q_out is None else int(Q_out)
    image = bessel_inverse(a).values
    out = np.empty(Q_out)
    for j in range(Q_out):
        rotated = bessel_inverse(rotate_bessel(b, -2.0 * np.pi * j / Q_out)).values
        out[j] = np.sum(np.abs(image - rotated) ** 2 * grid.node_weights)
    return out


def random_rotation(rng: np.random.Generator) -> EulerAngles:
    """Uniformly distributed rotation: uniform alpha, gamma and cos(beta)."""
    alpha, gamma = rng.uniform(0.0, 2.0 * np.pi, size=2)
    beta = np.arccos(rng.uniform(-1.0, 1.0))
    return EulerAngles(gamma=float(gamma), beta=float(beta), alpha=float(alpha))


@dataclass
class ImageSet:
    """Synthetic 2-D alignment problem with planted on-grid rotations."""
    grid: PolarGrid
    targets: List[BesselImage]
    images: List[BesselImage]
    target_groups: np.ndarray
    image_groups: np.ndarray
    image_sources: np.ndarray
    planted_gammas: np.ndarray
    viewing_angles: List[EulerAngles]
    sigma_hat: float


def make_image_set(
        phantom: BlobPhantom,
        grid: PolarGrid,
        n_images: int,
        n_targets: int,
        n_groups: int = 1,
        ctf_lambdas: Optional[Sequence[float]] = None,
        noise: Optional[NoiseSpec] = None,
        snr: Optional[float] = None,
        noise_domain: str = "polar",
        N: int = 64,
        sample_method: str = "direct",
) -> ImageSet:
    """
    Targets are CTF-filtered templates of randomly oriented projections; target j
    belongs to CTF group j mod n_groups. Image i is its source target (i mod n_targets)
    rotated by a planted on-grid angle, plus noise.

    Noise is set either by sigma in the NoiseSpec or by snr. In the "polar" domain it
    is drawn per node with variance sigma_hat^2 / (w_r dpsi); in the "cartesian"
    domain it is iid pixel noise on an N x N image, moved to the grid by sample_polar.

    Raises:
        ValidationFailure: On inconsistent counts, a negative CTF parameter or an unknown
            noise domain.
    """
    if n_images < 1 or n_targets < 1 or n_groups < 1:
        raise ValidationFailure("Image, target and group counts must be positive")
    if noise_domain not in ("polar", "cartesian"):
        raise ValidationFailure(f"Unknown noise domain '{noise_domain}'")
    noise = noise or NoiseSpec()
    lambdas = list(ctf_lambdas) if ctf_lambdas else [0.0] * n_groups
    if len(lambdas) != n_groups:
        raise ValidationFailure(f"Expected {n_groups} CTF parameters, got {len(lambdas)}")
    if any(lam < 0 for lam in lambdas):
        raise ValidationFailure(f"CTF parameters must be non-negative, got {lambdas}")
    ctfs = [toy_ctf(grid, lam) if lam > 0 else CtfProfile(values=np.ones(grid.R)) for lam in lambdas]

    rng = counter_rng(noise.seed, 2 ** 63)
    viewing_angles = [random_rotation(rng) for _ in range(n_targets)]
    target_groups = np.arange(n_targets) % n_groups
    polar_targets = [
        apply_ctf(phantom_polar_template(phantom, tau, grid), ctfs[g])
        for tau, g in zip(viewing_angles, target_groups)
    ]
    targets = [bessel_forward(p) for p in polar_targets]

    image_sources = np.arange(n_images) % n_targets
    planted_gammas = 2.0 * np.pi * rng.integers(0, grid.Q, size=n_images) / grid.Q

    dx = 2.0 / N
    if snr is not None:
        sigma_hat = sigma_hat_for_snr(polar_targets, snr)
    else:
        sigma_hat = noise.sigma_hat(dx)
    sigma_cart = sigma_hat * dx / np.pi

    images = []
    for i, (source, gamma) in enumerate(zip(image_sources, planted_gammas)):
        clean = rotate_bessel(targets[source], gamma)
        if sigma_hat == 0.0:
            images.append(clean)
            continue
        if noise_domain == "polar":
            noisy = add_noise_polar(bessel_inverse(clean), sigma_hat, noise.seed, i)
        else:
            field = add_noise_cart(CartImage(values=np.zeros((N, N))), NoiseSpec(sigma=sigma_cart, seed=noise.seed), i)
            noise_samples = sample_polar(field, grid, method=sample_method)
            noisy = PolarImage(grid=grid, values=bessel_inverse(clean).values + noise_samples.values)
        images.append(bessel_forward(noisy))

    logger.info(
        f"Synthesized {n_images} images and {n_targets} targets in {n_groups} CTF groups "
        f"(sigma_hat={sigma_hat:.4g}, noise domain={noise_domain})"
    )
    return ImageSet(
        grid=grid, targets=targets, images=images,
        target_groups=target_groups, image_groups=target_groups[image_sources],
        image_sources=image_sources, planted_gammas=planted_gammas,
        viewing_angles=viewing_angles, sigma_hat=float(sigma_hat),
    )


@dataclass
class VolumeSet:
    grid: SphereGrid
    target: SphVolume
    volumes: List[SphVolume]
    planted_taus: List[EulerAngles]
    sigma_hat: float


def make_volume_set(
        phantom: BlobPhantom,
        grid: SphereGrid,
        n_volumes: int,
        noise: Optional[NoiseSpec] = None,
        snr: Optional[float] = None,
) -> VolumeSet:
    """Randomly rotated copies of the phantom volume, optionally with coefficient noise."""
    if n_volumes < 1:
        raise ValidationFailure("Volume count must be positive")
    noise = noise or NoiseSpec()
    target = phantom_sph_volume(phantom, grid)
    rng = counter_rng(noise.seed, 2 ** 63)
    taus = [random_rotation(rng) for _ in range(n_volumes)]
    if snr is not None:
        energy = float(np.sum(np.abs(target.coeffs) ** 2 * grid.w_radial[:, None]))
        sigma_hat = float(np.sqrt(energy / (snr * target.coeffs.size)))
    else:
        sigma_hat = float(noise.sigma)
    volumes = [add_noise_sph(rotate_sph(target, tau), sigma_hat, noise.seed, i) for i, tau in enumerate(taus)]
    logger.info(f"Synthesized {n_volumes} volumes at L={grid.L}, R={grid.R} (sigma_hat={sigma_hat:.4g})")
    return VolumeSet(grid=grid, target=target, volumes=volumes, planted_taus=taus, sigma_hat=sigma_hat)


def phantom_to_json(phantom: BlobPhantom) -> str:
    return json.dumps(phantom.model_dump(), indent=4)
