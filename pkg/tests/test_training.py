"""Tests for batching, evaluation, model selection and the training loop."""

import csv

import numpy as np
import pytest

import acedg.services.training_service as training_service
from acedg.models.dataset import DomainDataset
from acedg.models.network import forward, init_bundle
from acedg.schemas.attribution import AceEstimatorConfig, EstimatorMode
from acedg.schemas.metrics import METRICS_COLUMNS
from acedg.schemas.network import ClassifierSpec, EncoderSpec
from acedg.schemas.train import ConfigError, DatasetKind
from acedg.services.attribution_service import EmptyBatchError
from acedg.services.optimizer_service import OptimizerError
from acedg.services.training_service import (
    TrainingDivergedError,
    ace_distance_summary,
    build_dataset,
    evaluate,
    prepare_split,
    stratified_batches,
    train,
)
from acedg.utils.tensor import tensor


def five_class_data(rng: np.random.Generator, per_class: int = 20) -> DomainDataset:
    count = 5 * per_class
    return DomainDataset(
        features=rng.standard_normal((count, 3)),
        labels=np.arange(count) % 5,
        domains=np.zeros(count),
        sample_ids=np.arange(count),
        num_classes=5,
    )


def five_class_bundle():
    return init_bundle(
        EncoderSpec(input_dim=3, hidden_widths=[4], latent_dim=2),
        ClassifierSpec(latent_dim=2, num_classes=5),
        seed=0,
    )


class TestStratifiedBatches:
    """Test epoch batching."""

    def test_covers_every_index_once(self, rng):
        """Batches partition the index range."""
        labels = np.arange(103) % 4
        batches = stratified_batches(labels, 16, rng)
        assert sorted(np.concatenate(batches).tolist()) == list(range(103))
        assert [len(b) for b in batches] == [16] * 6 + [7]

    def test_classes_spread(self, rng):
        """Each full batch holds a near-proportional class mix."""
        labels = np.repeat([0, 1], 64)
        for batch in stratified_batches(labels, 16, rng):
            assert abs(int((labels[batch] == 0).sum()) - 8) <= 1

    def test_seeded(self):
        """The same generator seed gives the same batches."""
        labels = np.arange(50) % 3
        a = stratified_batches(labels, 8, np.random.default_rng(2))
        b = stratified_batches(labels, 8, np.random.default_rng(2))
        assert all(np.array_equal(x, y) for x, y in zip(a, b))


class TestEvaluate:
    """Test accuracy evaluation."""

    def test_constant_prediction(self, rng):
        """A model that always predicts one class scores 1/5 on balanced 5-class data."""
        bundle = five_class_bundle()
        weight, bias = bundle.classifier_params
        weight.values[:] = 0.0
        bias.values[:] = [0.0, 0.0, 1.0, 0.0, 0.0]
        assert evaluate(bundle, five_class_data(rng)) == pytest.approx(0.2)

    def test_perfect_model(self, rng):
        """Labels equal to the model's own predictions give accuracy 1."""
        bundle = five_class_bundle()
        data = five_class_data(rng)
        predictions = np.argmax(forward(bundle, tensor(data.features)).values, axis=1)
        relabeled = DomainDataset(
            features=data.features, labels=predictions, domains=data.domains,
            sample_ids=data.sample_ids, num_classes=5,
        )
        assert evaluate(bundle, relabeled) == 1.0

    def test_order_independent(self, rng):
        """Permuting the samples leaves accuracy unchanged."""
        bundle = five_class_bundle()
        data = five_class_data(rng)
        assert evaluate(bundle, data) == evaluate(bundle, data.subset(rng.permutation(len(data))))

    def test_empty(self):
        """An empty dataset raises EmptyBatchError."""
        empty = DomainDataset(
            features=np.zeros((0, 3)), labels=np.zeros(0), domains=np.zeros(0),
            sample_ids=np.zeros(0), num_classes=5,
        )
        with pytest.raises(EmptyBatchError):
            evaluate(five_class_bundle(), empty)


class TestAceDistanceSummary:
    """Test the intra/inter-class ACE distance summary."""

    def test_non_negative(self, small_bundle, tiny_domains):
        """Both distances are non-negative."""
        summary = ace_distance_summary(small_bundle, tiny_domains, AceEstimatorConfig(), probe_size=40)
        assert summary.intra >= 0.0
        assert summary.inter >= 0.0

    def test_single_class_has_no_ratio(self, small_bundle, tiny_domains):
        """Without a second class there is no inter-class distance."""
        one_class = tiny_domains.subset(np.flatnonzero(tiny_domains.labels == 1))
        summary = ace_distance_summary(small_bundle, one_class, AceEstimatorConfig(), probe_size=40)
        assert summary.inter == 0.0
        assert summary.ratio is None


class TestBuildDataset:
    """Test dataset construction from a config."""

    def test_synthetic(self, fast_config):
        """The synthetic kind honours domain count and size."""
        ds = build_dataset(fast_config)
        assert ds.domain_ids == (0, 1, 2)
        assert len(ds) == 180

    def test_rotated_needs_paths(self, fast_config):
        """rotated-mnist without IDX paths raises ConfigError."""
        with pytest.raises(ConfigError):
            build_dataset(fast_config.model_copy(update={"dataset": DatasetKind.ROTATED_MNIST}))

    def test_file_needs_path(self, fast_config):
        """dataset=file without data_file raises ConfigError."""
        with pytest.raises(ConfigError):
            build_dataset(fast_config.model_copy(update={"dataset": DatasetKind.FILE}))

    def test_normalized_split(self, fast_config, tiny_domains):
        """normalize=true standardizes the training part and keeps the transform."""
        prepared = prepare_split(fast_config.model_copy(update={"normalize": True}), tiny_domains, 1)
        assert prepared.transform is not None
        assert np.abs(prepared.split.train.features.mean(axis=0)).max() <= 1e-9
        assert prepared.split.holdout is not None


class TestTrain:
    """Test the training loop end to end on tiny synthetic domains."""

    def test_loss_decreases(self, fast_config, tiny_domains):
        """The last epoch's mean loss is below the untrained loss."""
        _, metrics = train(fast_config, prepare_split(fast_config, tiny_domains).split)
        assert metrics.epochs[-1].loss < metrics.initial_loss

    def test_selection_is_first_best(self, fast_config, tiny_domains):
        """The selected epoch is the first with maximal validation accuracy."""
        _, metrics = train(fast_config, prepare_split(fast_config, tiny_domains).split)
        val = [e.val_acc for e in metrics.epochs]
        assert metrics.best_epoch == int(np.argmax(val)) + 1
        assert metrics.best_val_acc >= metrics.epochs[-1].val_acc
        assert metrics.selected_test_acc == metrics.epochs[metrics.best_epoch - 1].test_acc

    def test_selected_bundle_scores_its_epoch(self, fast_config, tiny_domains):
        """The returned bundle reproduces the selected epoch's validation accuracy."""
        split = prepare_split(fast_config, tiny_domains).split
        bundle, metrics = train(fast_config, split)
        assert evaluate(bundle, split.validation) == metrics.best_val_acc

    def test_erm_has_no_contrastive_part(self, fast_config, tiny_domains):
        """With rho=0 every epoch's contrastive term is 0."""
        config = fast_config.as_erm()
        _, metrics = train(config, prepare_split(config, tiny_domains).split)
        assert all(e.contrastive == 0.0 for e in metrics.epochs)
        assert all(e.loss == e.erm for e in metrics.epochs)

    def test_deterministic(self, fast_config, tiny_domains):
        """Two runs with the same seeds give identical metrics."""
        split = prepare_split(fast_config, tiny_domains).split
        _, a = train(fast_config, split)
        _, b = train(fast_config, split)
        assert a.epochs == b.epochs

    def test_metrics_file(self, fast_config, tiny_domains, tmp_path):
        """metrics.csv has the documented header and one row per epoch."""
        path = tmp_path / "run" / "metrics.csv"
        train(fast_config, prepare_split(fast_config, tiny_domains).split, metrics_path=path)
        with path.open(newline="") as fh:
            rows = list(csv.reader(fh))
        assert tuple(rows[0]) == METRICS_COLUMNS
        assert len(rows) == fast_config.epochs + 1

    def test_monte_carlo_mode(self, fast_config, tiny_domains):
        """Training with Monte-Carlo ACE and a hidden classifier layer completes."""
        config = fast_config.model_copy(update={
            "estimator_mode": EstimatorMode.MONTE_CARLO, "mc_samples": 8, "classifier_hidden_widths": [4], "epochs": 1,
        })
        _, metrics = train(config, prepare_split(config, tiny_domains).split)
        assert len(metrics.epochs) == 1

    def test_analytic_needs_affine_head(self, fast_config, tiny_domains):
        """Analytic ACE with a hidden classifier layer raises ConfigError."""
        config = fast_config.model_copy(update={"classifier_hidden_widths": [4]})
        with pytest.raises(ConfigError):
            train(config, prepare_split(config, tiny_domains).split)

    def test_divergence(self, fast_config, tiny_domains, tmp_path, monkeypatch):
        """A non-finite gradient aborts with TrainingDivergedError and flushes metrics."""
        def failing_step(*args, **kwargs):
            raise OptimizerError("parameter 0 has 1 non-finite gradient entries")

        monkeypatch.setattr(training_service, "adam_step", failing_step)
        path = tmp_path / "metrics.csv"
        with pytest.raises(TrainingDivergedError) as excinfo:
            train(fast_config, prepare_split(fast_config, tiny_domains).split, metrics_path=path)
        assert excinfo.value.metrics.epochs == []
        assert path.read_text().strip() == ",".join(METRICS_COLUMNS)
