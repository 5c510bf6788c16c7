"""Checkpoint save/load in a versioned structured-text format.

The document is JSON. Floats are written with Python's shortest
round-trip representation and parsed back with correctly rounded
conversion, so parameters survive a round trip bit for bit.
"""

import json
import logging
import math
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from acedg.models.network import CHECKPOINT_VERSION, ModelBundle, expected_shapes
from acedg.schemas.checkpoint import CheckpointDocument, ParameterArray
from acedg.utils.tensor import parameter

logger = logging.getLogger(__name__)


class CheckpointError(ValueError):
    """Base class for checkpoint loading failures."""
    pass


class CheckpointVersionError(CheckpointError):
    """Raised when the version tag is missing or unsupported."""
    pass


class MalformedCheckpointError(CheckpointError):
    """Raised when the file is not a well-formed checkpoint document."""
    pass


class CheckpointShapeError(CheckpointError):
    """Raised when stored arrays disagree with the stored specs."""
    pass


def bundle_to_document(bundle: ModelBundle) -> CheckpointDocument:
    return CheckpointDocument(
        version=bundle.version,
        encoder_spec=bundle.encoder_spec,
        classifier_spec=bundle.classifier_spec,
        parameters=[
            ParameterArray(name=name, shape=list(p.shape), values=p.values.ravel().tolist())
            for name, p in bundle.named_parameters()
        ],
    )


def save_bundle(bundle: ModelBundle, path: str | Path) -> Path:
    """
    Write a bundle to ``path``.

    Args:
        bundle: Model bundle to save
        path: Destination file; parent directories are created

    Returns:
        The written path
    """
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    document = bundle_to_document(bundle)
    # json.dumps writes floats via repr, which round-trips exactly
    target.write_text(json.dumps(document.model_dump(mode="json"), indent=1) + "\n", encoding="utf-8")
    logger.debug("Saved checkpoint", extra={"path": str(target)})
    return target


def load_bundle(path: str | Path) -> ModelBundle:
    """
    Read a bundle written by ``save_bundle``.

    Args:
        path: Checkpoint file

    Returns:
        The reconstructed bundle

    Raises:
        FileNotFoundError: If the file does not exist
        CheckpointVersionError: If the version tag is not supported
        MalformedCheckpointError: If the document cannot be parsed
        CheckpointShapeError: If array shapes disagree with the specs
    """
    text = Path(path).read_text(encoding="utf-8")
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise MalformedCheckpointError(f"Checkpoint is not valid structured text: {e}") from e
    if not isinstance(raw, dict):
        raise MalformedCheckpointError("Checkpoint root must be an object")

    version = raw.get("version")
    if version != CHECKPOINT_VERSION:
        raise CheckpointVersionError(
            f"Unsupported checkpoint version {version!r}, expected {CHECKPOINT_VERSION!r}"
        )

    try:
        document = CheckpointDocument.model_validate(raw)
    except ValidationError as e:
        raise MalformedCheckpointError(f"Checkpoint fields are invalid: {e}") from e

    shapes = expected_shapes(document.encoder_spec, document.classifier_spec)
    if len(shapes) != len(document.parameters):
        raise CheckpointShapeError(
            f"Expected {len(shapes)} parameter arrays, found {len(document.parameters)}"
        )

    tensors = []
    for expected, array in zip(shapes, document.parameters):
        if tuple(array.shape) != expected:
            raise CheckpointShapeError(f"{array.name}: shape {array.shape} does not match spec {list(expected)}")
        if len(array.values) != math.prod(expected):
            raise CheckpointShapeError(f"{array.name}: {len(array.values)} values for shape {list(expected)}")
        values = np.array(array.values, dtype=np.float64)
        if not np.all(np.isfinite(values)):
            raise MalformedCheckpointError(f"{array.name}: non-finite parameter values")
        tensors.append(parameter(values.reshape(expected)))

    split = 2 * len(document.encoder_spec.layer_shapes())
    return ModelBundle(
        encoder_spec=document.encoder_spec,
        classifier_spec=document.classifier_spec,
        encoder_params=tensors[:split],
        classifier_params=tensors[split:],
        version=document.version,
    )
