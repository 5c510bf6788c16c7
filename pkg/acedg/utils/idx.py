"""IDX file parsing (the big-endian format of the MNIST distribution).

Image files::

    [offset] [type]          [value]
    0000     32 bit integer  2051       magic number
    0004     32 bit integer  N          number of images
    0008     32 bit integer  rows
    0012     32 bit integer  cols
    0016     unsigned byte   pixels, row-major

Label files::

    0000     32 bit integer  2049       magic number
    0004     32 bit integer  N          number of items
    0008     unsigned byte   labels
"""

import gzip
import struct
from pathlib import Path

import numpy as np

IMAGE_MAGIC = 2051
LABEL_MAGIC = 2049


class IdxFormatError(ValueError):
    """Base class for IDX parsing failures."""
    pass


class BadMagicError(IdxFormatError):
    """Raised when the magic number does not match the expected file kind."""
    pass


class CountMismatchError(IdxFormatError):
    """Raised when image and label files disagree on the item count."""
    pass


class TruncatedPayloadError(IdxFormatError):
    """Raised when a file ends before its header says it should."""
    pass


def _read_bytes(path: str | Path) -> bytes:
    p = Path(path)
    if p.suffix == ".gz":
        with gzip.open(p, "rb") as fh:
            return fh.read()
    return p.read_bytes()


def parse_idx_images(data: bytes) -> np.ndarray:
    """Parse an IDX image payload into a uint8 array (count, rows, cols)."""
    if len(data) < 16:
        raise TruncatedPayloadError("Image header shorter than 16 bytes")
    magic, count, rows, cols = struct.unpack(">IIII", data[:16])
    if magic != IMAGE_MAGIC:
        raise BadMagicError(f"Image file magic {magic}, expected {IMAGE_MAGIC}")
    expected = count * rows * cols
    if len(data) - 16 < expected:
        raise TruncatedPayloadError(f"Image payload has {len(data) - 16} bytes, expected {expected}")
    return np.frombuffer(data, dtype=np.uint8, count=expected, offset=16).reshape(count, rows, cols)


def parse_idx_labels(data: bytes) -> np.ndarray:
    """Parse an IDX label payload into a uint8 array (count,)."""
    if len(data) < 8:
        raise TruncatedPayloadError("Label header shorter than 8 bytes")
    magic, count = struct.unpack(">II", data[:8])
    if magic != LABEL_MAGIC:
        raise BadMagicError(f"Label file magic {magic}, expected {LABEL_MAGIC}")
    if len(data) - 8 < count:
        raise TruncatedPayloadError(f"Label payload has {len(data) - 8} bytes, expected {count}")
    return np.frombuffer(data, dtype=np.uint8, count=count, offset=8).copy()


def read_idx_pair(images_path: str | Path, labels_path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """
    Read matching IDX image and label files (optionally gzipped).

    Args:
        images_path: Image file (magic 2051)
        labels_path: Label file (magic 2049)

    Returns:
        Tuple of (images uint8 [N, rows, cols], labels uint8 [N])

    Raises:
        FileNotFoundError: If either file is missing
        BadMagicError: If a magic number is wrong
        CountMismatchError: If the item counts differ
        TruncatedPayloadError: If a payload is shorter than declared
    """
    images = parse_idx_images(_read_bytes(images_path))
    labels = parse_idx_labels(_read_bytes(labels_path))
    if images.shape[0] != labels.shape[0]:
        raise CountMismatchError(f"{images.shape[0]} images but {labels.shape[0]} labels")
    return images, labels


def encode_idx_images(images: np.ndarray) -> bytes:
    """Serialize a uint8 (count, rows, cols) array as an IDX image payload."""
    count, rows, cols = images.shape
    return struct.pack(">IIII", IMAGE_MAGIC, count, rows, cols) + np.ascontiguousarray(images, dtype=np.uint8).tobytes()


def encode_idx_labels(labels: np.ndarray) -> bytes:
    """Serialize a uint8 (count,) array as an IDX label payload."""
    return struct.pack(">II", LABEL_MAGIC, labels.shape[0]) + np.ascontiguousarray(labels, dtype=np.uint8).tobytes()
