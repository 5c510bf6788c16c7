"""Checkpoint document schema."""

from pydantic import BaseModel, Field

from acedg.schemas.network import ClassifierSpec, EncoderSpec


class ParameterArray(BaseModel):
    """One parameter tensor, flattened row-major."""

    name: str
    shape: list[int] = Field(..., description="Dimension sizes")
    values: list[float] = Field(..., description="Row-major values")


class CheckpointDocument(BaseModel):
    """Versioned, self-describing model checkpoint."""

    version: str
    encoder_spec: EncoderSpec
    classifier_spec: ClassifierSpec
    parameters: list[ParameterArray] = Field(..., description="Encoder then classifier, declaration order")
