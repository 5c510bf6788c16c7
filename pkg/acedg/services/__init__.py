"""Services package."""

from acedg.services.attribution_service import (
    EmptyBatchError,
    EstimatorError,
    ace_matrix,
    ace_profile,
    ace_value,
    ace_vector,
    baseline_expectation,
    compute_bounds,
    interventional_expectation,
)
from acedg.services.bench_service import bench_leave_one_out
from acedg.services.loss_service import contrastive_ace_term, manhattan, total_loss
from acedg.services.optimizer_service import AdamState, adam_step
from acedg.services.training_service import evaluate, train

__all__ = [
    "EmptyBatchError",
    "EstimatorError",
    "ace_matrix",
    "ace_profile",
    "ace_value",
    "ace_vector",
    "baseline_expectation",
    "compute_bounds",
    "interventional_expectation",
    "bench_leave_one_out",
    "contrastive_ace_term",
    "manhattan",
    "total_loss",
    "AdamState",
    "adam_step",
    "evaluate",
    "train",
]
