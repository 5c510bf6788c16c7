"""Adam without weight decay, applied in place to parameter tensors."""

from dataclasses import dataclass

import numpy as np

from acedg.utils.tensor import Tensor


class OptimizerError(FloatingPointError):
    """Raised when a gradient contains NaN or infinite values."""
    pass


@dataclass
class AdamState:
    """First/second moment estimates per parameter and the step counter."""

    first_moments: list[np.ndarray]
    second_moments: list[np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def for_parameters(cls, params: list[Tensor]) -> "AdamState":
        return cls(
            first_moments=[np.zeros_like(p.values) for p in params],
            second_moments=[np.zeros_like(p.values) for p in params],
        )


def adam_step(
    state: AdamState,
    params: list[Tensor],
    grads: list[np.ndarray] | None,
    learning_rate: float,
) -> AdamState:
    """
    Apply one bias-corrected Adam update.

    Args:
        state: Moment estimates, updated in place
        params: Parameter tensors, values updated in place
        grads: Gradient per parameter; each parameter's ``grad`` when None
        learning_rate: Step size

    Returns:
        The updated state

    Raises:
        ValueError: If shapes disagree
        OptimizerError: If any gradient is non-finite
    """
    if grads is None:
        grads = [p.grad if p.grad is not None else np.zeros_like(p.values) for p in params]
    if len(grads) != len(params) or len(params) != len(state.first_moments):
        raise ValueError("params, grads and optimizer state differ in length")
    for i, (p, g, m) in enumerate(zip(params, grads, state.first_moments)):
        if g.shape != p.values.shape or m.shape != p.values.shape:
            raise ValueError(f"parameter {i}: shape {p.values.shape} vs grad {g.shape}")
        if not np.all(np.isfinite(g)):
            bad = int(np.count_nonzero(~np.isfinite(g)))
            raise OptimizerError(f"parameter {i} has {bad} non-finite gradient entries at step {state.step + 1}")

    state.step += 1
    bc1 = 1.0 - state.beta1 ** state.step
    bc2 = 1.0 - state.beta2 ** state.step
    for p, g, m, v in zip(params, grads, state.first_moments, state.second_moments):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p.values -= learning_rate * (m / bc1) / (np.sqrt(v / bc2) + state.epsilon)
    return state
