"""Labeled multi-domain datasets and leave-one-domain-out splits."""

from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np


class LabeledSample(NamedTuple):
    """One (x, y) pair tagged with its domain."""

    features: np.ndarray
    label: int
    domain_id: int
    sample_id: int


@dataclass(frozen=True)
class DomainDataset:
    """Samples as row-aligned arrays.

    ``features`` is m x d float64, ``labels``, ``domains`` and ``sample_ids``
    are int64 of length m. ``domain_ids`` lists the declared domains; every
    declared domain has at least one sample and every sample's domain is
    declared. ``image_shape`` is set for image data (rows, cols).
    """

    features: np.ndarray
    labels: np.ndarray
    domains: np.ndarray
    sample_ids: np.ndarray
    num_classes: int
    domain_ids: tuple[int, ...] = field(default=())
    image_shape: tuple[int, int] | None = None

    def __post_init__(self) -> None:
        features = np.ascontiguousarray(self.features, dtype=np.float64)
        if features.ndim != 2:
            raise ValueError(f"features must be 2-D, got shape {features.shape}")
        labels = np.asarray(self.labels, dtype=np.int64)
        domains = np.asarray(self.domains, dtype=np.int64)
        sample_ids = np.asarray(self.sample_ids, dtype=np.int64)
        m = features.shape[0]
        if labels.shape != (m,) or domains.shape != (m,) or sample_ids.shape != (m,):
            raise ValueError("features, labels, domains and sample_ids must have the same length")
        if m and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise ValueError(f"labels must lie in [0, {self.num_classes})")
        if not np.all(np.isfinite(features)):
            raise ValueError("features must be finite")

        declared = tuple(int(d) for d in self.domain_ids) or tuple(int(d) for d in np.unique(domains))
        present = set(np.unique(domains).tolist())
        if not present <= set(declared):
            raise ValueError(f"samples carry undeclared domains {sorted(present - set(declared))}")
        if m and set(declared) - present:
            raise ValueError(f"declared domains without samples: {sorted(set(declared) - present)}")

        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "domains", domains)
        object.__setattr__(self, "sample_ids", sample_ids)
        object.__setattr__(self, "domain_ids", declared)

    def __len__(self) -> int:
        return int(self.features.shape[0])

    def __getitem__(self, i: int) -> LabeledSample:
        return LabeledSample(
            features=self.features[i],
            label=int(self.labels[i]),
            domain_id=int(self.domains[i]),
            sample_id=int(self.sample_ids[i]),
        )

    @property
    def feature_dim(self) -> int:
        return int(self.features.shape[1])

    def subset(self, indices: np.ndarray | list[int]) -> "DomainDataset":
        """Rows at ``indices``; declared domains shrink to those present."""
        idx = np.asarray(indices, dtype=np.int64)
        domains = self.domains[idx]
        return DomainDataset(
            features=self.features[idx],
            labels=self.labels[idx],
            domains=domains,
            sample_ids=self.sample_ids[idx],
            num_classes=self.num_classes,
            domain_ids=tuple(d for d in self.domain_ids if np.any(domains == d)),
            image_shape=self.image_shape,
        )

    def with_features(self, features: np.ndarray) -> "DomainDataset":
        return replace(self, features=features)

    def domain_indices(self, domain_id: int) -> np.ndarray:
        return np.flatnonzero(self.domains == domain_id)


@dataclass(frozen=True)
class DomainSplit:
    """Leave-one-domain-out partition.

    ``train`` holds the source domains, ``validation`` and ``test`` are
    disjoint parts of the target domain; ``holdout`` is an optional slice of
    source data kept out of training.
    """

    target_domain: int
    train: DomainDataset
    validation: DomainDataset
    test: DomainDataset
    holdout: DomainDataset | None = None
