"""Pydantic schemas for configuration, specs and reports."""

from acedg.schemas.attribution import AceEstimatorConfig, EstimatorMode, InterventionSpec
from acedg.schemas.contrastive import ContrastiveConfig
from acedg.schemas.data import RotationDomainSpec, SyntheticDomainSpec
from acedg.schemas.network import ClassifierSpec, EncoderSpec

__all__ = [
    "AceEstimatorConfig",
    "EstimatorMode",
    "InterventionSpec",
    "ContrastiveConfig",
    "RotationDomainSpec",
    "SyntheticDomainSpec",
    "ClassifierSpec",
    "EncoderSpec",
]
