"""Schemas for do-interventions and ACE estimator configuration."""

from enum import Enum

from pydantic import BaseModel, ConfigDict, Field


class EstimatorMode(str, Enum):
    """How interventional expectations are computed."""

    ANALYTIC_AFFINE = "analytic-affine"  # closed form, affine heads only
    MONTE_CARLO = "monte-carlo"
    QUADRATURE = "quadrature"  # midpoint rule, n <= 4, oracle use


class InterventionSpec(BaseModel):
    """do(z^j = alpha)."""

    model_config = ConfigDict(frozen=True)

    coordinate: int = Field(..., ge=0, description="Latent coordinate j")
    value: float = Field(..., allow_inf_nan=False, description="Intervened value alpha")


class AceEstimatorConfig(BaseModel):
    """Estimator choice and its sampling parameters."""

    model_config = ConfigDict(frozen=True)

    mode: EstimatorMode = Field(EstimatorMode.ANALYTIC_AFFINE, description="Estimator")
    mc_samples: int = Field(64, ge=1, description="Monte-Carlo draws K")
    grid_points: int = Field(32, ge=2, description="Quadrature points G on the intervened axis")
    inner_grid_points: int | None = Field(
        None, ge=2, description="Quadrature points per non-intervened axis (default: grid_points)"
    )
    seed: int = Field(0, ge=0, description="Seed for the Monte-Carlo draws")

    @property
    def inner_points(self) -> int:
        return self.inner_grid_points if self.inner_grid_points is not None else self.grid_points
