from pathlib import Path
from typing import List, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from src.align_utils.align3d import default_beta_grid
from src.errors import ValidationFailure
from src.transform_utils.grids import PolarGrid, SphereGrid, build_polar_grid, build_sphere_grid, default_radial_count


class PolarGridSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    K: float = Field(gt=0)
    R: Optional[int] = Field(default=None, ge=1)
    Q: int = Field(ge=2)
    Q_out: Optional[int] = None

    @field_validator("Q")
    @classmethod
    def q_even(cls, value):
        if value % 2:
            raise ValueError(f"Q must be even, got {value}")
        return value

    def build(self) -> PolarGrid:
        return build_polar_grid(self.K, self.R or default_radial_count(self.K), self.Q)

    @property
    def output_length(self) -> int:
        return self.Q_out or self.Q


class SphereGridSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    K: float = Field(gt=0)
    R: Optional[int] = Field(default=None, ge=1)
    L: int = Field(ge=0)

    def build(self) -> SphereGrid:
        return build_sphere_grid(self.K, self.R or default_radial_count(self.K), self.L)


class NoiseSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    sigma: float = Field(default=0.0, ge=0)
    snr: Optional[float] = Field(default=None, gt=0)
    seed: int = Field(default=0, ge=0, lt=2 ** 64)
    domain: Literal["polar", "cartesian"] = "polar"
    N: int = Field(default=64, ge=2)


class Synth2DSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n_images: int = Field(default=8, ge=1)
    n_targets: int = Field(default=4, ge=1)
    n_groups: int = Field(default=1, ge=1)
    ctf_lambdas: Optional[List[float]] = None

    @field_validator("ctf_lambdas")
    @classmethod
    def lambdas_non_negative(cls, value):
        if value is not None and any(lam < 0 for lam in value):
            raise ValueError("CTF parameters in ctf_lambdas must be non-negative")
        return value


class Synth3DSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n_volumes: int = Field(default=4, ge=1)


class BenchSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    warmup: int = Field(default=1, ge=0)
    repeats: int = Field(default=3, ge=1)


class RunManifest(BaseModel):
    """
    Run description shared by every command: grids, phantom, noise, set sizes,
    target grouping, rank sweep, beta grid and output directory.
    """
    model_config = ConfigDict(extra="forbid")

    phantom: str = "asymmetric_six_blob"
    polar: Optional[PolarGridSpec] = None
    sphere: Optional[SphereGridSpec] = None
    noise: NoiseSection = NoiseSection()
    synth2d: Synth2DSection = Synth2DSection()
    synth3d: Synth3DSection = Synth3DSection()
    group_key: Literal["ctf", "none"] = "ctf"
    h_sweep: List[int] = Field(default_factory=list)
    betas: Optional[Union[int, List[float]]] = None
    output_dir: Optional[str] = None
    bench: BenchSection = BenchSection()

    @field_validator("h_sweep")
    @classmethod
    def ranks_positive(cls, value):
        if any(h < 1 for h in value):
            raise ValueError("Every rank in h_sweep must be positive")
        return value

    def require_polar(self) -> PolarGridSpec:
        if self.polar is None:
            raise ValidationFailure("Manifest has no 'polar' grid section")
        return self.polar

    def require_sphere(self) -> SphereGridSpec:
        if self.sphere is None:
            raise ValidationFailure("Manifest has no 'sphere' grid section")
        return self.sphere

    def beta_grid(self, override: Optional[Union[int, List[float]]] = None) -> np.ndarray:
        """Explicit list, a count for the default grid on [-pi, pi), or M betas when unset."""
        betas = self.betas if override is None else override
        if betas is None:
            return default_beta_grid(2 * self.require_sphere().L + 1)
        if isinstance(betas, int):
            return default_beta_grid(betas)
        return np.asarray(betas, dtype=float)


def load_manifest(path: Union[str, Path]) -> RunManifest:
    """
    Raises:
        ValidationFailure: If the file is missing or violates the schema.
    """
    path = Path(path)
    if not path.is_file():
        raise ValidationFailure(f"Manifest not found: {path}")
    try:
        return RunManifest.model_validate_json(path.read_text())
    except ValidationError as exc:
        raise ValidationFailure(f"Invalid manifest {path}: {exc}") from exc


def parse_betas(text: Optional[str]) -> Optional[Union[int, List[float]]]:
    """CLI form of --betas: a count "49" or a comma-separated list "-1.0,0,1.5"."""
    if text is None:
        return None
    try:
        if "," not in text:
            try:
                return int(text)
            except ValueError:
                return [float(text)]
        return [float(item) for item in text.split(",") if item.strip()]
    except ValueError as exc:
        raise ValidationFailure(f"Cannot parse betas '{text}'") from exc
