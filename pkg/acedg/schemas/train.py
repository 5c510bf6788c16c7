"""Run configuration and its flat key=value file format."""

from enum import Enum
from pathlib import Path
from typing import Any

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from acedg.schemas.attribution import AceEstimatorConfig, EstimatorMode
from acedg.schemas.contrastive import ContrastiveConfig
from acedg.schemas.data import RotationDomainSpec, SyntheticDomainSpec
from acedg.schemas.network import ClassifierSpec, EncoderSpec


class ConfigError(ValueError):
    """Raised when a config file cannot be read or holds invalid values."""
    pass


class DatasetKind(str, Enum):
    """Where the multi-domain dataset comes from."""

    SYNTHETIC = "synthetic"
    ROTATED_MNIST = "rotated-mnist"
    FILE = "file"  # .npz written by gen-data


class TrainConfig(BaseModel):
    """Hyperparameters, seeds and data source of a training run."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    # Objective
    rho: float = Field(1.0, ge=0, allow_inf_nan=False, description="Contrastive weight")
    delta: float = Field(0.05, gt=0, allow_inf_nan=False, description="Hinge margin")

    # Optimization
    learning_rate: float = Field(0.001, gt=0, allow_inf_nan=False)
    batch_size: int = Field(64, ge=1)
    epochs: int = Field(30, ge=1)

    # ACE estimation
    estimator_mode: EstimatorMode = Field(EstimatorMode.ANALYTIC_AFFINE)
    mc_samples: int = Field(64, ge=1)
    grid_points: int = Field(32, ge=2)
    bounds_epsilon: float = Field(0.01, ge=0)

    # Architecture
    latent_dim: int = Field(64, ge=1)
    hidden_widths: list[int] = Field(default_factory=lambda: [256])
    classifier_hidden_widths: list[int] = Field(default_factory=list)

    # Data
    normalize: bool = Field(False, description="Mean-std normalization fitted on source data")
    dataset: DatasetKind = Field(DatasetKind.SYNTHETIC)
    synthetic_domains: int = Field(4, ge=2)
    per_domain: int = Field(2000, ge=1)
    angles: list[float] = Field(default_factory=lambda: [0.0, 15.0, 30.0, 45.0, 60.0, 75.0])
    mnist_images: Path | None = None
    mnist_labels: Path | None = None
    data_file: Path | None = None
    target_domain: int = Field(0, ge=0)
    val_fraction: float = Field(0.2, gt=0, lt=1)
    holdout_fraction: float = Field(0.1, ge=0, lt=1)
    probe_size: int = Field(512, ge=2)

    # Seeds and repeats
    init_seed: int = Field(0, ge=0)
    data_seed: int = Field(0, ge=0)
    pair_seed: int = Field(0, ge=0)
    repeats: int = Field(3, ge=1)

    @field_validator("hidden_widths", "classifier_hidden_widths", "angles", mode="before")
    @classmethod
    def split_lists(cls, v: Any) -> Any:
        """Accept comma-separated strings for list fields."""
        if isinstance(v, str):
            return [item.strip() for item in v.split(",") if item.strip()]
        return v

    @field_validator("hidden_widths", "classifier_hidden_widths")
    @classmethod
    def validate_widths(cls, v: list[int]) -> list[int]:
        """Every hidden width must be at least 1."""
        if any(w < 1 for w in v):
            raise ValueError("All hidden widths must be >= 1")
        return v

    @classmethod
    def from_file(cls, path: str | Path | None, overrides: dict[str, Any] | None = None) -> "TrainConfig":
        """
        Load a flat key=value config file and apply overrides on top.

        Args:
            path: Config file, or None for defaults
            overrides: Values that take precedence over the file

        Returns:
            Validated TrainConfig

        Raises:
            ConfigError: If the file is unreadable, malformed or has invalid values
        """
        values: dict[str, Any] = {}
        if path is not None:
            try:
                text = Path(path).read_text(encoding="utf-8")
            except OSError as e:
                raise ConfigError(f"Cannot read config file {path}: {e}") from e
            values.update(parse_key_values(text))
        values.update({k: v for k, v in (overrides or {}).items() if v is not None})
        try:
            return cls.model_validate(values)
        except ValidationError as e:
            raise ConfigError(f"Invalid configuration: {e}") from e

    def estimator_config(self, seed: int | None = None) -> AceEstimatorConfig:
        return AceEstimatorConfig(
            mode=self.estimator_mode,
            mc_samples=self.mc_samples,
            grid_points=self.grid_points,
            seed=self.pair_seed if seed is None else seed,
        )

    def contrastive_config(self) -> ContrastiveConfig:
        return ContrastiveConfig(margin=self.delta, weight=self.rho, pair_seed=self.pair_seed)

    def encoder_spec(self, input_dim: int) -> EncoderSpec:
        return EncoderSpec(input_dim=input_dim, hidden_widths=self.hidden_widths, latent_dim=self.latent_dim)

    def classifier_spec(self, num_classes: int) -> ClassifierSpec:
        return ClassifierSpec(
            latent_dim=self.latent_dim,
            num_classes=num_classes,
            hidden_widths=self.classifier_hidden_widths,
        )

    def synthetic_spec(self) -> SyntheticDomainSpec:
        return SyntheticDomainSpec(
            n_domains=self.synthetic_domains, per_domain=self.per_domain, seed=self.data_seed
        )

    def rotation_spec(self) -> RotationDomainSpec:
        return RotationDomainSpec(angles=self.angles, per_domain=self.per_domain, seed=self.data_seed)

    def for_repeat(self, repeat: int) -> "TrainConfig":
        """Copy with every seed offset by ``repeat``."""
        return self.model_copy(update={
            "init_seed": self.init_seed + repeat,
            "data_seed": self.data_seed + repeat,
            "pair_seed": self.pair_seed + repeat,
        })

    def as_erm(self) -> "TrainConfig":
        return self.model_copy(update={"rho": 0.0})


def parse_key_values(text: str) -> dict[str, str]:
    """
    Parse flat ``key=value`` lines; ``#`` starts a comment.

    Raises:
        ConfigError: On a line without ``=`` or a repeated key
    """
    values: dict[str, str] = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {number}: expected key=value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        if not key:
            raise ConfigError(f"line {number}: empty key")
        if key in values:
            raise ConfigError(f"line {number}: duplicate key {key!r}")
        values[key] = value
    return values
