"""Training loop with the combined objective, evaluation and model selection."""

import logging
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial.distance import pdist

from acedg.models.dataset import DomainDataset, DomainSplit
from acedg.models.network import ModelBundle, encode, forward, init_bundle
from acedg.schemas.attribution import AceEstimatorConfig, EstimatorMode
from acedg.schemas.metrics import EpochMetrics, RunMetrics
from acedg.schemas.train import ConfigError, DatasetKind, TrainConfig
from acedg.services.attribution_service import EmptyBatchError, ace_matrix, compute_bounds
from acedg.services.data_service import (
    NormalizationTransform,
    leave_one_out_split,
    load_dataset,
    load_idx,
    make_rotated_domains,
    make_synthetic_domains,
    normalize_mean_std,
)
from acedg.services.loss_service import TrainingBatch, total_loss
from acedg.services.optimizer_service import AdamState, OptimizerError, adam_step
from acedg.services.report_service import write_metrics_csv
from acedg.utils.tensor import NonFiniteError, Tape, no_tape, tensor

logger = logging.getLogger(__name__)


class TrainingDivergedError(RuntimeError):
    """Raised when the loss or gradients become non-finite; carries partial metrics."""

    def __init__(self, message: str, metrics: RunMetrics) -> None:
        super().__init__(message)
        self.metrics = metrics


@dataclass(frozen=True)
class AceDistanceSummary:
    """Mean Manhattan distance between ACE vectors within and across classes."""

    intra: float
    inter: float

    @property
    def ratio(self) -> float | None:
        return self.intra / self.inter if self.inter > 0 else None


@dataclass(frozen=True)
class PreparedSplit:
    """A leave-one-out split plus the normalization applied to it, if any."""

    split: DomainSplit
    transform: NormalizationTransform | None


def build_dataset(config: TrainConfig) -> DomainDataset:
    """
    Construct the multi-domain dataset a config describes.

    Raises:
        ConfigError: If a required path is missing from the config
    """
    if config.dataset == DatasetKind.SYNTHETIC:
        return make_synthetic_domains(config.synthetic_spec())
    if config.dataset == DatasetKind.ROTATED_MNIST:
        if config.mnist_images is None or config.mnist_labels is None:
            raise ConfigError("rotated-mnist needs mnist_images and mnist_labels")
        return make_rotated_domains(load_idx(config.mnist_images, config.mnist_labels), config.rotation_spec())
    if config.data_file is None:
        raise ConfigError("dataset=file needs data_file")
    return load_dataset(config.data_file)


def prepare_split(config: TrainConfig, dataset: DomainDataset, target_domain: int | None = None) -> PreparedSplit:
    """Leave-one-out split for the target domain, normalized when configured."""
    split = leave_one_out_split(
        dataset,
        config.target_domain if target_domain is None else target_domain,
        val_fraction=config.val_fraction,
        seed=config.data_seed,
        holdout_fraction=config.holdout_fraction,
    )
    if not config.normalize:
        return PreparedSplit(split=split, transform=None)

    others = [split.validation, split.test] + ([split.holdout] if split.holdout is not None else [])
    transform, (train, validation, test, *rest) = normalize_mean_std(split.train, *others)
    normalized = DomainSplit(
        target_domain=split.target_domain,
        train=train,
        validation=validation,
        test=test,
        holdout=rest[0] if rest else None,
    )
    return PreparedSplit(split=normalized, transform=transform)


def stratified_batches(labels: np.ndarray, batch_size: int, rng: np.random.Generator) -> list[np.ndarray]:
    """
    Shuffle indices so every class is spread evenly over the epoch, then chunk.

    Each class is permuted and its members placed at evenly spaced positions
    with a random phase, so consecutive batches hold near-proportional class
    mixes.
    """
    keys = np.empty(labels.shape[0], dtype=np.float64)
    for c in np.unique(labels):
        members = np.flatnonzero(labels == c)
        shuffled = members[rng.permutation(members.size)]
        keys[shuffled] = (np.arange(members.size) + rng.random()) / members.size
    order = np.argsort(keys, kind="stable")
    return [order[i:i + batch_size] for i in range(0, order.size, batch_size)]


def evaluate(bundle: ModelBundle, dataset: DomainDataset) -> float:
    """
    Fraction of samples whose argmax logit equals the label.

    Raises:
        EmptyBatchError: If the dataset is empty
    """
    if len(dataset) == 0:
        raise EmptyBatchError("evaluate needs a nonempty split")
    with no_tape():
        logits = forward(bundle, tensor(dataset.features)).values
    return float(np.mean(np.argmax(logits, axis=1) == dataset.labels))


def _probe(dataset: DomainDataset, size: int) -> DomainDataset:
    if len(dataset) <= size:
        return dataset
    return dataset.subset(np.unique(np.linspace(0, len(dataset) - 1, size).astype(np.int64)))


def ace_distance_summary(
    bundle: ModelBundle,
    dataset: DomainDataset,
    estimator: AceEstimatorConfig,
    epsilon: float = 0.01,
    probe_size: int = 512,
) -> AceDistanceSummary:
    """
    Mean intra-class and inter-class Manhattan distances of ACE vectors.

    Computed on at most ``probe_size`` evenly spaced samples, with bounds from
    the probe's own latents and each sample's label as target class.
    """
    probe = _probe(dataset, probe_size)
    if len(probe) < 2:
        return AceDistanceSummary(intra=0.0, inter=0.0)
    with no_tape():
        z = encode(bundle, tensor(probe.features))
        ace = ace_matrix(bundle.head, z, probe.labels, compute_bounds(z, epsilon), estimator).values
    distances = pdist(ace, metric="cityblock")
    first, second = np.triu_indices(len(probe), k=1)
    same = probe.labels[first] == probe.labels[second]
    intra = float(distances[same].mean()) if same.any() else 0.0
    inter = float(distances[~same].mean()) if (~same).any() else 0.0
    return AceDistanceSummary(intra=intra, inter=inter)


def _batch(dataset: DomainDataset, indices: np.ndarray) -> TrainingBatch:
    return TrainingBatch(
        features=dataset.features[indices],
        labels=dataset.labels[indices],
        sample_ids=dataset.sample_ids[indices],
    )


def _initial_loss(bundle: ModelBundle, config: TrainConfig, train_set: DomainDataset) -> float:
    """Mean objective over one epoch of batches, evaluated without updates."""
    rng = np.random.default_rng([config.data_seed, 1])
    pair_rng = np.random.default_rng([config.pair_seed, 1])
    losses = []
    with no_tape():
        for indices in stratified_batches(train_set.labels, config.batch_size, rng):
            breakdown = total_loss(
                _batch(train_set, indices), bundle, None,
                config.estimator_config(), config.contrastive_config(),
                rng=pair_rng, bounds_epsilon=config.bounds_epsilon,
            )
            losses.append(breakdown.total.item())
    return float(np.mean(losses))


def train(
    config: TrainConfig,
    split: DomainSplit,
    metrics_path: str | Path | None = None,
) -> tuple[ModelBundle, RunMetrics]:
    """
    Train encoder and classifier on the source split with the combined objective.

    After every epoch the model is scored on the target validation and test
    parts; the returned bundle is the one with the best validation accuracy
    (earliest epoch on ties). Metrics are flushed to ``metrics_path`` after
    every epoch.

    Args:
        config: Run configuration
        split: Leave-one-out split (already normalized if requested)
        metrics_path: Optional metrics.csv destination

    Returns:
        Tuple of (selected bundle, run metrics)

    Raises:
        TrainingDivergedError: If the loss or a gradient becomes non-finite
        ConfigError: If analytic-affine ACE is requested for a nonlinear head
    """
    train_set = split.train
    if len(train_set) == 0:
        raise EmptyBatchError("training split is empty")
    if config.estimator_mode == EstimatorMode.ANALYTIC_AFFINE and config.classifier_hidden_widths:
        raise ConfigError("analytic-affine ACE needs an affine classifier head")

    bundle = init_bundle(
        config.encoder_spec(train_set.feature_dim),
        config.classifier_spec(train_set.num_classes),
        seed=config.init_seed,
    )
    state = AdamState.for_parameters(bundle.parameters())
    batch_rng = np.random.default_rng(config.data_seed)
    pair_rng = np.random.default_rng(config.pair_seed)
    draw_rng = np.random.default_rng([config.pair_seed, 2])
    contrastive = config.contrastive_config()
    probe_set = split.holdout if split.holdout is not None and len(split.holdout) else train_set

    started = time.perf_counter()
    metrics = RunMetrics(initial_loss=_initial_loss(bundle, config, train_set))
    best: ModelBundle = bundle.clone()
    best_val = -1.0

    for epoch in range(1, config.epochs + 1):
        losses, erms, regs, active = [], [], [], []
        try:
            for indices in stratified_batches(train_set.labels, config.batch_size, batch_rng):
                estimator = config.estimator_config(seed=int(draw_rng.integers(2**31)))
                with Tape() as tape:
                    breakdown = total_loss(
                        _batch(train_set, indices), bundle, None, estimator, contrastive,
                        rng=pair_rng, bounds_epsilon=config.bounds_epsilon,
                    )
                    tape.backward(breakdown.total)
                adam_step(state, bundle.parameters(), None, config.learning_rate)
                losses.append(breakdown.total.item())
                erms.append(breakdown.erm)
                regs.append(breakdown.contrastive)
                active.append(breakdown.hinge_active_fraction)
                metrics.missing_pairs += breakdown.missing_pairs
                metrics.out_of_bounds += breakdown.out_of_bounds
        except (NonFiniteError, OptimizerError) as e:
            metrics.wall_time = time.perf_counter() - started
            if metrics_path is not None:
                write_metrics_csv(metrics, metrics_path)
            logger.error("Training diverged in epoch %d: %s", epoch, e)
            raise TrainingDivergedError(f"training diverged in epoch {epoch}: {e}", metrics) from e

        val_acc = evaluate(bundle, split.validation)
        test_acc = evaluate(bundle, split.test)
        distances = ace_distance_summary(
            bundle, probe_set, config.estimator_config(), config.bounds_epsilon, config.probe_size
        )
        row = EpochMetrics(
            epoch=epoch,
            loss=float(np.mean(losses)),
            erm=float(np.mean(erms)),
            contrastive=float(np.mean(regs)),
            hinge_frac=float(np.mean(active)),
            val_acc=val_acc,
            test_acc=test_acc,
            intra_ace=distances.intra,
            inter_ace=distances.inter,
        )
        metrics.epochs.append(row)
        if val_acc > best_val:
            best_val = val_acc
            best = bundle.clone()
            metrics.best_epoch = epoch
            metrics.best_val_acc = val_acc
            metrics.selected_test_acc = test_acc
            metrics.selected_intra_ace = distances.intra
            metrics.selected_inter_ace = distances.inter
        if metrics_path is not None:
            write_metrics_csv(metrics, metrics_path)
        logger.info(
            "epoch %d loss=%.4f erm=%.4f contrastive=%.4f val_acc=%.4f test_acc=%.4f",
            epoch, row.loss, row.erm, row.contrastive, val_acc, test_acc,
        )

    metrics.wall_time = time.perf_counter() - started
    return best, metrics
