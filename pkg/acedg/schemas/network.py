"""Architecture specs for the encoder and classifier head."""

from enum import Enum

from pydantic import BaseModel, ConfigDict, Field, field_validator


class Activation(str, Enum):
    """Hidden-layer nonlinearities."""

    RELU = "relu"


class EncoderSpec(BaseModel):
    """MLP encoder mapping raw inputs to an n-dimensional latent vector."""

    model_config = ConfigDict(frozen=True)

    input_dim: int = Field(..., ge=1, description="Pixels or raw features per sample")
    hidden_widths: list[int] = Field(default_factory=lambda: [256], description="Hidden layer widths")
    latent_dim: int = Field(64, ge=1, description="Latent feature dimension n")
    activation: Activation = Field(Activation.RELU, description="Nonlinearity after every layer")

    @field_validator("hidden_widths")
    @classmethod
    def validate_widths(cls, v: list[int]) -> list[int]:
        """Every hidden width must be at least 1."""
        if any(w < 1 for w in v):
            raise ValueError("All hidden widths must be >= 1")
        return v

    def layer_shapes(self) -> list[tuple[int, int]]:
        """(out, in) weight shape per layer, input to latent."""
        dims = [self.input_dim, *self.hidden_widths, self.latent_dim]
        return [(dims[i + 1], dims[i]) for i in range(len(dims) - 1)]


class ClassifierSpec(BaseModel):
    """Head mapping latent features to class logits.

    An empty ``hidden_widths`` gives an affine head (logits = W z + b), the
    form for which ACE has a closed form.
    """

    model_config = ConfigDict(frozen=True)

    latent_dim: int = Field(..., ge=1, description="Latent feature dimension n")
    num_classes: int = Field(..., ge=1, description="Class count C")
    hidden_widths: list[int] = Field(default_factory=list, description="Hidden widths; empty means affine")

    @field_validator("hidden_widths")
    @classmethod
    def validate_widths(cls, v: list[int]) -> list[int]:
        """Every hidden width must be at least 1."""
        if any(w < 1 for w in v):
            raise ValueError("All hidden widths must be >= 1")
        return v

    @property
    def is_affine(self) -> bool:
        return not self.hidden_widths

    def layer_shapes(self) -> list[tuple[int, int]]:
        dims = [self.latent_dim, *self.hidden_widths, self.num_classes]
        return [(dims[i + 1], dims[i]) for i in range(len(dims) - 1)]
