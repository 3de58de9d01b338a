"""MNIST IDX reader.

IDX layout (big-endian)::

    images: magic 0x00000803, count, rows, cols, then rows*cols bytes per image
    labels: magic 0x00000801, count, then one byte per label

Files may be gzip-compressed; compression is detected from the magic bytes,
not the extension. Images are scaled to [0, 1] and center-cropped to 20x20
(a 4-pixel border on the standard 28x28 digits), then flattened to 400.
"""

from __future__ import annotations

import gzip
import logging
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from xbarcli.exceptions import (
    BadMagicError,
    CountMismatchError,
    DataError,
    InputError,
    TruncatedPayloadError,
)

logger = logging.getLogger(__name__)

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801
CROP = 20
_GZIP_MAGIC = b"\x1f\x8b"


@dataclass
class MnistDataset:
    images: np.ndarray  # (N, 400) float in [0, 1]
    labels: np.ndarray  # (N,) int

    def __len__(self) -> int:
        return int(self.labels.size)

    def head(self, n: int) -> MnistDataset:
        return MnistDataset(self.images[:n], self.labels[:n])


def _read_bytes(path: str | Path) -> bytes:
    p = Path(path)
    if not p.exists():
        raise InputError(f"file not found: {p}", details={"path": str(p)})
    data = p.read_bytes()
    if data[:2] == _GZIP_MAGIC:
        try:
            data = gzip.decompress(data)
        except (OSError, EOFError) as e:
            raise TruncatedPayloadError(f"{p}: corrupt gzip stream: {e}") from e
    return data


def _check_header(path: str | Path, data: bytes, magic: int, kind: str, size: int) -> None:
    """Magic first, so a file of the other IDX kind is never reported as truncated."""
    if len(data) < 4:
        raise TruncatedPayloadError(f"{path}: shorter than the 4-byte magic")
    (found,) = struct.unpack(">I", data[:4])
    if found != magic:
        raise BadMagicError(
            f"{path}: {kind} magic 0x{found:08x} != 0x{magic:08x}",
            details={"magic": found},
        )
    if len(data) < size:
        raise TruncatedPayloadError(f"{path}: header shorter than {size} bytes")


def read_idx_images(path: str | Path) -> np.ndarray:
    """Raw uint8 images, shape (count, rows, cols)."""
    data = _read_bytes(path)
    _check_header(path, data, IMAGES_MAGIC, "image", 16)
    _, count, rows, cols = struct.unpack(">IIII", data[:16])
    need = count * rows * cols
    payload = data[16:]
    if len(payload) < need:
        raise TruncatedPayloadError(
            f"{path}: payload {len(payload)} bytes, header promises {need}",
            details={"have": len(payload), "need": need},
        )
    return np.frombuffer(payload, dtype=np.uint8, count=need).reshape(count, rows, cols)


def read_idx_labels(path: str | Path) -> np.ndarray:
    data = _read_bytes(path)
    _check_header(path, data, LABELS_MAGIC, "label", 8)
    _, count = struct.unpack(">II", data[:8])
    payload = data[8:]
    if len(payload) < count:
        raise TruncatedPayloadError(
            f"{path}: payload {len(payload)} bytes, header promises {count}",
            details={"have": len(payload), "need": count},
        )
    return np.frombuffer(payload, dtype=np.uint8, count=count).astype(int)


def center_crop(images: np.ndarray, size: int = CROP) -> np.ndarray:
    """Crop (N, rows, cols) to (N, size, size) around the center."""
    _, rows, cols = images.shape
    if rows < size or cols < size:
        raise DataError(f"images {rows}x{cols} smaller than crop {size}x{size}")
    top = (rows - size) // 2
    left = (cols - size) // 2
    return images[:, top : top + size, left : left + size]


def load_mnist(images_path: str | Path, labels_path: str | Path) -> MnistDataset:
    """
    Load an image/label IDX pair as 400-vectors in [0, 1].

    Raises:
        BadMagicError, TruncatedPayloadError, CountMismatchError.
    """
    raw = read_idx_images(images_path)
    labels = read_idx_labels(labels_path)
    if raw.shape[0] != labels.size:
        raise CountMismatchError(
            f"{raw.shape[0]} images but {labels.size} labels",
            details={"images": int(raw.shape[0]), "labels": int(labels.size)},
        )
    images = center_crop(raw).reshape(raw.shape[0], CROP * CROP).astype(float) / 255.0
    logger.info("loaded %d images from %s", raw.shape[0], images_path)
    return MnistDataset(images, labels)


def synthetic_dataset(n: int, seed: int = 42) -> MnistDataset:
    """Uniform random 400-pixel images with random labels, for smoke runs."""
    rng = np.random.default_rng(seed)
    return MnistDataset(rng.random((n, CROP * CROP)), rng.integers(0, 10, size=n))
