"""Per-epoch and per-run training metrics."""

from pydantic import BaseModel, Field

METRICS_COLUMNS = (
    "epoch", "loss", "erm", "contrastive", "hinge_frac",
    "val_acc", "test_acc", "intra_ace", "inter_ace",
)


class EpochMetrics(BaseModel):
    """One row of metrics.csv."""

    epoch: int = Field(..., ge=1)
    loss: float
    erm: float
    contrastive: float = Field(..., ge=0)
    hinge_frac: float = Field(..., ge=0, le=1)
    val_acc: float = Field(..., ge=0, le=1)
    test_acc: float = Field(..., ge=0, le=1)
    intra_ace: float = Field(..., ge=0)
    inter_ace: float = Field(..., ge=0)

    def row(self) -> list[str]:
        return [repr(getattr(self, c)) for c in METRICS_COLUMNS]


class RunMetrics(BaseModel):
    """Curves of one run plus the selected checkpoint's summary."""

    epochs: list[EpochMetrics] = Field(default_factory=list)
    initial_loss: float | None = None
    best_epoch: int | None = None
    best_val_acc: float | None = Field(None, ge=0, le=1)
    selected_test_acc: float | None = Field(None, ge=0, le=1)
    selected_intra_ace: float | None = None
    selected_inter_ace: float | None = None
    missing_pairs: int = 0
    out_of_bounds: int = 0
    wall_time: float = 0.0

    @property
    def selected_ace_ratio(self) -> float | None:
        if self.selected_intra_ace is None or not self.selected_inter_ace:
            return None
        return self.selected_intra_ace / self.selected_inter_ace
