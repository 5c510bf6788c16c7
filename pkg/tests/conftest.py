"""Pytest configuration and shared fixtures."""

from collections.abc import Callable, Iterable

import numpy as np
import pytest

from acedg.models.dataset import DomainDataset
from acedg.models.network import ModelBundle, init_bundle
from acedg.schemas.data import SyntheticDomainSpec
from acedg.schemas.network import ClassifierSpec, EncoderSpec
from acedg.schemas.train import TrainConfig
from acedg.services.data_service import make_synthetic_domains
from acedg.utils.tensor import Tensor, no_tape


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------

def finite_difference(
    loss_fn: Callable[[], float],
    param: Tensor,
    indices: Iterable[tuple[int, ...]],
    step: float = 1e-6,
) -> np.ndarray:
    """Central differences of ``loss_fn`` w.r.t. selected entries of ``param``."""
    out = []
    for idx in indices:
        original = param.values[idx]
        param.values[idx] = original + step
        with no_tape():
            plus = loss_fn()
        param.values[idx] = original - step
        with no_tape():
            minus = loss_fn()
        param.values[idx] = original
        out.append((plus - minus) / (2 * step))
    return np.array(out)


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = max(float(np.linalg.norm(numeric)), float(np.linalg.norm(analytic)), 1e-8)
    return float(np.linalg.norm(analytic - numeric)) / scale


def sample_indices(shape: tuple[int, ...], count: int, rng: np.random.Generator) -> list[tuple[int, ...]]:
    flat = rng.choice(int(np.prod(shape)), size=min(count, int(np.prod(shape))), replace=False)
    return [tuple(int(i) for i in np.unravel_index(f, shape)) for f in flat]


# ---------------------------------------------------------------------------
# Fixtures
# ---------------------------------------------------------------------------

@pytest.fixture
def rng() -> np.random.Generator:
    """Seeded generator, fresh per test."""
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def tiny_domains() -> DomainDataset:
    """Three small synthetic domains (60 samples each)."""
    return make_synthetic_domains(SyntheticDomainSpec(n_domains=3, per_domain=60, seed=7))


@pytest.fixture
def small_bundle() -> ModelBundle:
    """10 -> 8 -> 4 encoder with an affine 2-class head."""
    return init_bundle(
        EncoderSpec(input_dim=10, hidden_widths=[8], latent_dim=4),
        ClassifierSpec(latent_dim=4, num_classes=2),
        seed=3,
    )


@pytest.fixture
def fast_config() -> TrainConfig:
    """Desk-scale config that trains in well under a second per epoch."""
    return TrainConfig(
        epochs=3,
        batch_size=32,
        learning_rate=0.01,
        latent_dim=4,
        hidden_widths=[8],
        synthetic_domains=3,
        per_domain=60,
        repeats=2,
        probe_size=32,
        holdout_fraction=0.1,
    )
