"""Dataset ingestion, domain synthesis, normalization and splitting."""

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from acedg.models.dataset import DomainDataset, DomainSplit
from acedg.schemas.data import RotationDomainSpec, SyntheticDomainSpec
from acedg.utils.idx import read_idx_pair
from acedg.utils.rotation import rotate

logger = logging.getLogger(__name__)

STD_FLOOR = 1e-6
SIGNAL_DIMS = 2
NUISANCE_DIMS = 8
MNIST_SHAPE = (28, 28)


class UnknownDomainError(KeyError):
    """Raised when a domain id is not part of the dataset."""
    pass


class DatasetSizeError(ValueError):
    """Raised when a construction asks for more samples than exist."""
    pass


def load_idx(images_path: str | Path, labels_path: str | Path) -> DomainDataset:
    """
    Load an IDX image/label pair as a single-domain dataset.

    Any rows x cols image size is accepted; MNIST files are 28x28 and the
    image shape travels with the dataset so rotation works at every size.

    Args:
        images_path: IDX image file (magic 2051), optionally gzipped
        labels_path: IDX label file (magic 2049), optionally gzipped

    Returns:
        Dataset with flattened pixels scaled to [0, 1], domain 0

    Raises:
        IdxFormatError: On bad magic, count mismatch or truncated payload
    """
    images, labels = read_idx_pair(images_path, labels_path)
    count, rows, cols = images.shape
    features = images.reshape(count, rows * cols).astype(np.float64) / 255.0
    num_classes = int(labels.max()) + 1 if count else 1
    logger.info("Loaded %d IDX images of %dx%d", count, rows, cols)
    if (rows, cols) != MNIST_SHAPE:
        logger.debug("IDX images are %dx%d rather than %dx%d", rows, cols, *MNIST_SHAPE)
    return DomainDataset(
        features=features,
        labels=labels.astype(np.int64),
        domains=np.zeros(count, dtype=np.int64),
        sample_ids=np.arange(count, dtype=np.int64),
        num_classes=max(num_classes, 2),
        domain_ids=(0,),
        image_shape=(rows, cols),
    )


def _stratified_counts(labels: np.ndarray, num_classes: int, total: int) -> np.ndarray:
    """Per-class counts summing to ``total``, proportional to label frequencies.

    Remainders go to the classes with the largest fractional parts, ties to
    the lower class index.
    """
    freq = np.bincount(labels, minlength=num_classes).astype(np.float64)
    exact = freq / freq.sum() * total
    counts = np.floor(exact).astype(np.int64)
    remainder = total - int(counts.sum())
    order = np.lexsort((np.arange(num_classes), -(exact - counts)))
    counts[order[:remainder]] += 1
    return counts


def make_rotated_domains(base: DomainDataset, spec: RotationDomainSpec) -> DomainDataset:
    """
    Build one rotated domain per angle from disjoint stratified subsamples.

    Args:
        base: Single-domain image dataset
        spec: Angles, samples per domain and seed

    Returns:
        Dataset whose domain id is the index of the angle in ``spec.angles``

    Raises:
        ValueError: If base is not a single-domain image dataset
        DatasetSizeError: If the disjoint subsamples need more samples than exist
    """
    if len(base.domain_ids) != 1:
        raise ValueError("make_rotated_domains needs a single-domain base dataset")
    if base.image_shape is None:
        raise ValueError("make_rotated_domains needs image data")
    n_domains = len(spec.angles)
    if spec.per_domain * n_domains > len(base):
        raise DatasetSizeError(
            f"{n_domains} domains x {spec.per_domain} samples exceeds base size {len(base)}"
        )

    rng = np.random.default_rng(spec.seed)
    counts = _stratified_counts(base.labels, base.num_classes, spec.per_domain)
    pools = []
    for c in range(base.num_classes):
        members = rng.permutation(np.flatnonzero(base.labels == c))
        if counts[c] * n_domains > members.size:
            raise DatasetSizeError(
                f"class {c} has {members.size} samples, {counts[c] * n_domains} needed"
            )
        pools.append(members)

    rows, cols = base.image_shape
    features, labels, domains, sample_ids = [], [], [], []
    for d, angle in enumerate(spec.angles):
        chosen = np.sort(np.concatenate([
            pools[c][d * counts[c]:(d + 1) * counts[c]] for c in range(base.num_classes)
        ]))
        images = base.features[chosen].reshape(-1, rows, cols)
        rotated = np.stack([rotate(img, angle) for img in images]) if len(images) else images
        features.append(rotated.reshape(len(chosen), rows * cols))
        labels.append(base.labels[chosen])
        domains.append(np.full(len(chosen), d, dtype=np.int64))
        sample_ids.append(base.sample_ids[chosen])
        logger.debug("Built rotation domain %d (%.1f deg) with %d samples", d, angle, len(chosen))

    return DomainDataset(
        features=np.concatenate(features),
        labels=np.concatenate(labels),
        domains=np.concatenate(domains),
        sample_ids=np.concatenate(sample_ids),
        num_classes=base.num_classes,
        domain_ids=tuple(range(n_domains)),
        image_shape=base.image_shape,
    )


def make_synthetic_domains(spec: SyntheticDomainSpec) -> DomainDataset:
    """
    Generate 2-class, 10-dimensional Gaussian domains.

    Coordinates 0-1 carry the label identically in every domain (class means
    +/- signal_mean, unit variance). Coordinates 2-9 are nuisance: centred at
    domain_index * nuisance_shift, shifted by +/- a class coupling whose sign
    flips across domains, with standard deviation 1 + 0.25 * domain_index.

    Args:
        spec: Domain count, samples per domain, seed and effect sizes

    Returns:
        Balanced two-class dataset with domain ids 0..n_domains-1
    """
    rng = np.random.default_rng(spec.seed)
    features, labels, domains = [], [], []
    for d in range(spec.n_domains):
        y = rng.permutation(np.arange(spec.per_domain) % 2)
        sign = (2 * y - 1).astype(np.float64)[:, None]
        signal = sign * spec.signal_mean + rng.standard_normal((spec.per_domain, SIGNAL_DIMS))

        coupling = spec.spurious_strength * (1.0 - 2.0 * d / (spec.n_domains - 1))
        spread = 1.0 + 0.25 * d
        nuisance = (
            d * spec.nuisance_shift
            + sign * coupling
            + spread * rng.standard_normal((spec.per_domain, NUISANCE_DIMS))
        )
        features.append(np.hstack([signal, nuisance]))
        labels.append(y)
        domains.append(np.full(spec.per_domain, d, dtype=np.int64))

    total = spec.n_domains * spec.per_domain
    return DomainDataset(
        features=np.concatenate(features),
        labels=np.concatenate(labels),
        domains=np.concatenate(domains),
        sample_ids=np.arange(total, dtype=np.int64),
        num_classes=2,
        domain_ids=tuple(range(spec.n_domains)),
    )


@dataclass(frozen=True)
class NormalizationTransform:
    """Per-feature affine map x -> (x - mean) / std."""

    mean: np.ndarray
    std: np.ndarray

    def apply(self, dataset: DomainDataset) -> DomainDataset:
        return dataset.with_features((dataset.features - self.mean) / self.std)

    def to_dict(self) -> dict[str, list[float]]:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, data: dict[str, list[float]]) -> "NormalizationTransform":
        return cls(mean=np.asarray(data["mean"], dtype=np.float64), std=np.asarray(data["std"], dtype=np.float64))


def normalize_mean_std(
    train: DomainDataset,
    *others: DomainDataset,
) -> tuple[NormalizationTransform, list[DomainDataset]]:
    """
    Fit mean-std normalization on the training split and apply it everywhere.

    Args:
        train: Source-domain training data; the only data statistics come from
        *others: Validation/target datasets transformed with the same statistics

    Returns:
        Tuple of (transform, [train, *others] transformed)

    Raises:
        ValueError: If the training split is empty
    """
    if len(train) == 0:
        raise ValueError("Cannot fit normalization on an empty training split")
    mean = train.features.mean(axis=0)
    std = np.maximum(train.features.std(axis=0), STD_FLOOR)
    transform = NormalizationTransform(mean=mean, std=std)
    return transform, [transform.apply(ds) for ds in (train, *others)]


def leave_one_out_split(
    dataset: DomainDataset,
    target_domain: int,
    val_fraction: float = 0.2,
    seed: int = 0,
    holdout_fraction: float = 0.0,
) -> DomainSplit:
    """
    Split into source training data and a validation/test partition of the target.

    Args:
        dataset: Multi-domain dataset
        target_domain: Domain held out as target
        val_fraction: Share of target samples used for test-domain validation
        seed: Seed for the target (and hold-out) shuffles
        holdout_fraction: Share of source samples kept out of training

    Returns:
        DomainSplit with disjoint train / validation / test (/ holdout) parts

    Raises:
        UnknownDomainError: If target_domain is not in the dataset
        ValueError: If a fraction is outside its range, or the target domain has
            fewer than two samples so validation or test would be empty
    """
    if target_domain not in dataset.domain_ids:
        raise UnknownDomainError(f"Unknown domain id: {target_domain}")
    if not 0.0 < val_fraction < 1.0:
        raise ValueError("val_fraction must lie strictly between 0 and 1")
    if not 0.0 <= holdout_fraction < 1.0:
        raise ValueError("holdout_fraction must lie in [0, 1)")
    if len(dataset.domain_ids) < 2:
        raise ValueError("Leave-one-out needs at least two domains")

    rng = np.random.default_rng(seed)
    target_idx = rng.permutation(dataset.domain_indices(target_domain))
    n_val = int(round(val_fraction * target_idx.size))
    if target_idx.size < 2:
        raise ValueError(
            f"Target domain {target_domain} has {target_idx.size} sample(s); validation and test need one each"
        )
    n_val = min(max(n_val, 1), target_idx.size - 1)
    validation = np.sort(target_idx[:n_val])
    test = np.sort(target_idx[n_val:])

    source_idx = np.flatnonzero(dataset.domains != target_domain)
    holdout = None
    n_hold = int(round(holdout_fraction * source_idx.size))
    if n_hold > 0:
        shuffled = rng.permutation(source_idx)
        holdout = dataset.subset(np.sort(shuffled[:n_hold]))
        source_idx = np.sort(shuffled[n_hold:])

    return DomainSplit(
        target_domain=target_domain,
        train=dataset.subset(source_idx),
        validation=dataset.subset(validation),
        test=dataset.subset(test),
        holdout=holdout,
    )


def dataset_manifest(dataset: DomainDataset) -> dict:
    """Counts per domain and per class, as written next to generated data."""
    per_domain = {}
    for d in dataset.domain_ids:
        idx = dataset.domain_indices(d)
        counts = np.bincount(dataset.labels[idx], minlength=dataset.num_classes)
        per_domain[str(d)] = {"total": int(idx.size), "per_class": counts.tolist()}
    return {
        "samples": len(dataset),
        "feature_dim": dataset.feature_dim,
        "num_classes": dataset.num_classes,
        "domains": per_domain,
    }


def save_dataset(dataset: DomainDataset, path: str | Path) -> Path:
    """Write a dataset as .npz plus a JSON manifest next to it."""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    image_shape = np.asarray(dataset.image_shape or (0, 0), dtype=np.int64)
    with target.open("wb") as fh:
        np.savez(
            fh,
            features=dataset.features,
            labels=dataset.labels,
            domains=dataset.domains,
            sample_ids=dataset.sample_ids,
            num_classes=np.asarray(dataset.num_classes),
            domain_ids=np.asarray(dataset.domain_ids, dtype=np.int64),
            image_shape=image_shape,
        )
    manifest_path = target.with_suffix(".manifest.json")
    manifest_path.write_text(json.dumps(dataset_manifest(dataset), indent=2) + "\n", encoding="utf-8")
    return target


def load_dataset(path: str | Path) -> DomainDataset:
    """Read a dataset written by ``save_dataset``."""
    with np.load(Path(path)) as data:
        image_shape = tuple(int(v) for v in data["image_shape"])
        return DomainDataset(
            features=data["features"],
            labels=data["labels"],
            domains=data["domains"],
            sample_ids=data["sample_ids"],
            num_classes=int(data["num_classes"]),
            domain_ids=tuple(int(d) for d in data["domain_ids"]),
            image_shape=image_shape if image_shape != (0, 0) else None,
        )
