"""Model and dataset types."""

from acedg.models.dataset import DomainDataset, DomainSplit, LabeledSample
from acedg.models.network import ClassifierHead, ModelBundle

__all__ = [
    "DomainDataset",
    "DomainSplit",
    "LabeledSample",
    "ClassifierHead",
    "ModelBundle",
]
