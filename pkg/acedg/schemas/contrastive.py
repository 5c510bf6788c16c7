"""Schema for the contrastive ACE regularizer."""

from pydantic import BaseModel, ConfigDict, Field


class ContrastiveConfig(BaseModel):
    """Margin, weight and pair-sampling seed of the triplet hinge."""

    model_config = ConfigDict(frozen=True)

    margin: float = Field(0.05, gt=0, allow_inf_nan=False, description="Hinge margin delta")
    weight: float = Field(1.0, ge=0, allow_inf_nan=False, description="Regularizer weight rho")
    pair_seed: int = Field(0, ge=0, description="Seed for positive/negative draws")
