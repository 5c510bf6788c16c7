"""Schemas describing how multi-domain datasets are synthesized."""

import math

from pydantic import BaseModel, ConfigDict, Field, field_validator


class RotationDomainSpec(BaseModel):
    """One domain per rotation angle, each an independent subsample."""

    model_config = ConfigDict(frozen=True)

    angles: list[float] = Field(
        default_factory=lambda: [0.0, 15.0, 30.0, 45.0, 60.0, 75.0],
        min_length=1,
        description="Rotation angle per domain, degrees",
    )
    per_domain: int = Field(500, ge=1, description="Samples per domain")
    seed: int = Field(0, ge=0)

    @field_validator("angles")
    @classmethod
    def validate_angles(cls, v: list[float]) -> list[float]:
        """Angles must be finite and distinct."""
        if len(v) != len(set(v)):
            raise ValueError("Angles must be distinct")
        if not all(math.isfinite(a) for a in v):
            raise ValueError("Angles must be finite")
        return v


class SyntheticDomainSpec(BaseModel):
    """Two-class Gaussian domains with 2 signal and 8 nuisance coordinates.

    Signal coordinates have class means +/- signal_mean in every domain.
    Nuisance coordinates are centred at domain_index * nuisance_shift, carry
    a class coupling that reverses sign across domains, and have a
    domain-dependent spread.
    """

    model_config = ConfigDict(frozen=True)

    n_domains: int = Field(4, ge=2)
    per_domain: int = Field(2000, ge=2)
    seed: int = Field(0, ge=0)
    signal_mean: float = Field(1.5, gt=0)
    nuisance_shift: float = Field(2.0, ge=0)
    spurious_strength: float = Field(0.5, ge=0)
