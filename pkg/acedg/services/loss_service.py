"""ERM loss, triplet sets, pair sampling and the contrastive ACE hinge."""

import logging
from dataclasses import dataclass

import numpy as np

from acedg.models.network import ModelBundle, classify, encode
from acedg.schemas.attribution import AceEstimatorConfig
from acedg.schemas.contrastive import ContrastiveConfig
from acedg.services.attribution_service import (
    AceDiagnostics,
    AceVector,
    EmptyBatchError,
    FeatureBounds,
    ace_matrix,
    compute_bounds,
)
from acedg.utils.tensor import (
    DimensionError,
    Tensor,
    absolute,
    add,
    hinge,
    mul,
    scale,
    softmax_cross_entropy,
    sub,
    sum_axis,
    take_rows,
    tensor,
    total,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TripletSets:
    """Positive (same label) and negative (other label) indices per sample."""

    positives: tuple[tuple[int, ...], ...]
    negatives: tuple[tuple[int, ...], ...]

    def __len__(self) -> int:
        return len(self.positives)


@dataclass(frozen=True)
class TrainingBatch:
    """A minibatch: raw features, labels and stable sample ids."""

    features: np.ndarray
    labels: np.ndarray
    sample_ids: np.ndarray

    def __len__(self) -> int:
        return int(self.labels.shape[0])


@dataclass
class LossBreakdown:
    """Combined objective and the parts it was built from."""

    total: Tensor
    erm: float
    contrastive: float
    hinge_active_fraction: float
    missing_pairs: int
    out_of_bounds: int


def build_triplet_sets(labels: np.ndarray | list[int]) -> TripletSets:
    """
    Partition every other batch index into positives and negatives.

    Args:
        labels: Class index per sample

    Returns:
        TripletSets; P_i holds same-label indices, N_i different-label ones,
        neither contains i
    """
    y = np.asarray(labels, dtype=np.int64)
    positives, negatives = [], []
    indices = np.arange(y.shape[0])
    for i in range(y.shape[0]):
        same = y == y[i]
        positives.append(tuple(int(k) for k in indices[same] if k != i))
        negatives.append(tuple(int(k) for k in indices[~same]))
    return TripletSets(positives=tuple(positives), negatives=tuple(negatives))


def sample_pair(sets: TripletSets, i: int, rng: np.random.Generator) -> tuple[int | None, int | None]:
    """
    Draw one positive and one negative index uniformly for sample i.

    Empty sets yield None and consume no randomness.
    """
    pos, neg = sets.positives[i], sets.negatives[i]
    p = pos[int(rng.integers(len(pos)))] if pos else None
    n = neg[int(rng.integers(len(neg)))] if neg else None
    return p, n


def _as_vector(v: "AceVector | Tensor") -> Tensor:
    return v.values if isinstance(v, AceVector) else v


def manhattan(a: "AceVector | Tensor", b: "AceVector | Tensor") -> Tensor:
    """
    Sum of absolute coordinate differences.

    Raises:
        DimensionError: If the vectors differ in length
    """
    va, vb = _as_vector(a), _as_vector(b)
    if va.shape != vb.shape:
        raise DimensionError(f"manhattan: lengths differ ({va.shape} vs {vb.shape})")
    return total(absolute(sub(va, vb)))


def contrastive_ace_term(
    c_i: "AceVector | Tensor",
    c_p: "AceVector | Tensor | None",
    c_n: "AceVector | Tensor | None",
    margin: float,
) -> Tensor:
    """max{dist(c_i, c_p) - dist(c_i, c_n) + margin, 0}; 0 when a partner is missing."""
    if c_p is None or c_n is None:
        return tensor(0.0)
    return hinge(add(sub(manhattan(c_i, c_p), manhattan(c_i, c_n)), margin))


def combine_objective(erm: Tensor, contrastive: Tensor, weight: float) -> Tensor:
    """ERM term plus weight times the contrastive term."""
    return add(erm, scale(contrastive, weight))


def draw_pairs(labels: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    One (positive, negative) draw per sample in index order.

    Returns:
        Tuple of (positive idx, negative idx, valid mask); invalid rows point
        at themselves
    """
    sets = build_triplet_sets(labels)
    size = len(sets)
    pos = np.arange(size)
    neg = np.arange(size)
    valid = np.zeros(size, dtype=bool)
    for i in range(size):
        p, n = sample_pair(sets, i, rng)
        if p is not None and n is not None:
            pos[i], neg[i], valid[i] = p, n, True
    return pos, neg, valid


def contrastive_terms(ace: Tensor, pos: np.ndarray, neg: np.ndarray, valid: np.ndarray, margin: float) -> Tensor:
    """Per-sample hinge values (b,) for a batch ACE matrix; invalid rows are 0."""
    d_pos = sum_axis(absolute(sub(ace, take_rows(ace, pos))), 1)
    d_neg = sum_axis(absolute(sub(ace, take_rows(ace, neg))), 1)
    return mul(hinge(add(sub(d_pos, d_neg), margin)), tensor(valid.astype(np.float64)))


def total_loss(
    batch: TrainingBatch,
    bundle: ModelBundle,
    bounds: FeatureBounds | None,
    estimator: AceEstimatorConfig,
    contrastive: ContrastiveConfig,
    rng: np.random.Generator | None = None,
    bounds_epsilon: float = 0.01,
) -> LossBreakdown:
    """
    Mean cross-entropy plus weight times the mean contrastive ACE hinge.

    Samples are processed in stable sample-id order, so permuting the batch
    leaves the result unchanged for a given generator state. With weight 0
    the contrastive path is skipped entirely.

    Args:
        batch: Minibatch
        bundle: Encoder and classifier
        bounds: Intervention bounds; computed from the batch latents when None
        estimator: ACE estimator configuration
        contrastive: Margin, weight and pair seed
        rng: Pair-sampling generator; a fresh one seeded by the pair seed when None
        bounds_epsilon: Widening used when bounds are computed here

    Returns:
        LossBreakdown with the differentiable total

    Raises:
        EmptyBatchError: If the batch is empty
    """
    if len(batch) == 0:
        raise EmptyBatchError("total_loss needs a nonempty batch")
    order = np.argsort(batch.sample_ids, kind="stable")
    labels = np.asarray(batch.labels, dtype=np.int64)[order]

    z = encode(bundle, tensor(np.asarray(batch.features, dtype=np.float64)[order]))
    erm = softmax_cross_entropy(classify(bundle, z), labels)
    if contrastive.weight == 0.0:
        return LossBreakdown(
            total=erm, erm=erm.item(), contrastive=0.0,
            hinge_active_fraction=0.0, missing_pairs=0, out_of_bounds=0,
        )

    if bounds is None:
        bounds = compute_bounds(z, bounds_epsilon)
    diagnostics = AceDiagnostics()
    ace = ace_matrix(bundle.head, z, labels, bounds, estimator, diagnostics)

    generator = rng if rng is not None else np.random.default_rng(contrastive.pair_seed)
    pos, neg, valid = draw_pairs(labels, generator)
    missing = int((~valid).sum())
    if missing:
        logger.debug("%d samples lack a positive or negative partner", missing)

    terms = contrastive_terms(ace, pos, neg, valid, contrastive.margin)
    reg = scale(total(terms), 1.0 / len(batch))
    active = terms.values[valid] > 0
    return LossBreakdown(
        total=combine_objective(erm, reg, contrastive.weight),
        erm=erm.item(),
        contrastive=reg.item(),
        hinge_active_fraction=float(active.mean()) if active.size else 0.0,
        missing_pairs=missing,
        out_of_bounds=diagnostics.out_of_bounds,
    )
