"""MNIST IDX ingestion and [0, 1] normalization."""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import (
    BadMagic,
    CountMismatch,
    DimensionMismatch,
    FileMissing,
    IdxFormatError,
    InvalidLabel,
    TrailingBytes,
    Truncated,
)

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801
N_CLASSES = 10
WIDTH = 784

SPLITS = ("train", "test")
_FILE_STEMS = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}
_GZIP_MAGIC = b"\x1f\x8b"


@dataclass(frozen=True, eq=False)
class RawImageSet:
    count: int
    rows: int
    cols: int
    pixels: np.ndarray  # uint8, shape (count, rows, cols)

    def to_bytes(self) -> bytes:
        header = struct.pack(">IIII", IMAGES_MAGIC, self.count, self.rows, self.cols)
        return header + np.ascontiguousarray(self.pixels, dtype=np.uint8).tobytes()


@dataclass(frozen=True, eq=False)
class LabelSet:
    count: int
    labels: np.ndarray  # uint8, shape (count,)

    def to_bytes(self) -> bytes:
        header = struct.pack(">II", LABELS_MAGIC, self.count)
        return header + np.ascontiguousarray(self.labels, dtype=np.uint8).tobytes()


@dataclass(frozen=True, eq=False)
class Dataset:
    """Normalized image vectors with their labels.

    ``vectors`` is a read-only ``(n, 784)`` float32 array with components in
    ``[0, 1]``; ``labels`` carries the matching digits.
    """

    vectors: np.ndarray
    labels: LabelSet
    split: str

    def __len__(self):
        return self.vectors.shape[0]

    @property
    def y(self) -> np.ndarray:
        return self.labels.labels

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.intp)
        labels = self.labels.labels[idx]
        vectors = self.vectors[idx]
        vectors.flags.writeable = False
        return Dataset(vectors, LabelSet(len(labels), labels), self.split)


def _as_bytes(data) -> bytes:
    if isinstance(data, (bytes, bytearray, memoryview)):
        return bytes(data)
    raise TypeError(f"expected a byte sequence, got {type(data).__name__}")


def _read_header(buf: bytes, magic: int, n_dims: int) -> tuple[int, ...]:
    header_len = 4 * (1 + n_dims)
    if len(buf) < 4:
        raise Truncated(f"stream has {len(buf)} bytes, too short for the magic number")
    (found,) = struct.unpack_from(">I", buf, 0)
    if found != magic:
        raise BadMagic(f"magic 0x{found:08x}, expected 0x{magic:08x}")
    if len(buf) < header_len:
        raise Truncated(f"header needs {header_len} bytes, stream has {len(buf)}")
    return struct.unpack_from(f">{n_dims}I", buf, 4)


def _check_payload(buf: bytes, offset: int, expected: int) -> None:
    available = len(buf) - offset
    if available < expected:
        raise Truncated(f"declared {expected} payload bytes, found {available}")
    if available > expected:
        raise TrailingBytes(f"{available - expected} bytes beyond the declared payload")


def parse_idx_images(data) -> RawImageSet:
    """Parse an IDX3 image stream without transforming pixel values."""
    buf = _as_bytes(data)
    count, rows, cols = _read_header(buf, IMAGES_MAGIC, 3)
    if count and (rows == 0 or cols == 0):
        raise IdxFormatError("image dimensions must be positive")
    _check_payload(buf, 16, count * rows * cols)
    pixels = np.frombuffer(buf, dtype=np.uint8, offset=16).reshape(count, rows, cols)
    return RawImageSet(count, rows, cols, pixels)


def parse_idx_labels(data, mnist: bool = True) -> LabelSet:
    """Parse an IDX1 label stream. With ``mnist=True`` labels must lie in 0..9."""
    buf = _as_bytes(data)
    (count,) = _read_header(buf, LABELS_MAGIC, 1)
    _check_payload(buf, 8, count)
    labels = np.frombuffer(buf, dtype=np.uint8, offset=8)
    if mnist and count:
        bad = np.flatnonzero(labels >= N_CLASSES)
        if bad.size:
            raise InvalidLabel(f"label {labels[bad[0]]} at index {bad[0]} is outside 0..9")
    return LabelSet(count, labels)


def normalize(raw: RawImageSet, labels: LabelSet, split: str = "train") -> Dataset:
    """Scale pixels by 1/255 and flatten each image row-major into a 784-vector."""
    if raw.count != labels.count:
        raise CountMismatch(f"{raw.count} images but {labels.count} labels")
    if raw.rows * raw.cols != WIDTH:
        raise DimensionMismatch(f"images are {raw.rows}x{raw.cols}, need {WIDTH} pixels")
    if split not in SPLITS:
        raise ValueError(f"split must be one of {SPLITS}, got {split!r}")
    vectors = raw.pixels.reshape(raw.count, WIDTH).astype(np.float32) / np.float32(255.0)
    vectors.flags.writeable = False
    return Dataset(vectors, labels, split)


def read_maybe_gzip(path) -> bytes:
    """Read a file, decompressing when it is gzip (suffix hint, confirmed by magic)."""
    path = Path(path)
    data = path.read_bytes()
    if data[:2] == _GZIP_MAGIC:
        return gzip.decompress(data)
    if path.suffix == ".gz":
        raise IdxFormatError(f"{path} has a .gz suffix but no gzip magic")
    return data


def _locate(directory: Path, stem: str) -> Path:
    for name in (stem, stem + ".gz", stem.replace("-idx", ".idx"), stem.replace("-idx", ".idx") + ".gz"):
        candidate = directory / name
        if candidate.is_file():
            return candidate
    raise FileMissing(f"{stem}[.gz] not found in {directory}")


def load_mnist(directory, split: str) -> Dataset:
    """Load one MNIST split from ``directory`` (plain or gzipped IDX files).

    Parameters
    ----------
    directory : path-like
        Folder holding the canonical MNIST file names.
    split : {"train", "test"}
        Which half to load.
    """
    if split not in SPLITS:
        raise ValueError(f"split must be one of {SPLITS}, got {split!r}")
    directory = Path(directory)
    if not directory.is_dir():
        raise FileMissing(f"data directory {directory} does not exist")
    image_stem, label_stem = _FILE_STEMS[split]
    raw = parse_idx_images(read_maybe_gzip(_locate(directory, image_stem)))
    labels = parse_idx_labels(read_maybe_gzip(_locate(directory, label_stem)))
    return normalize(raw, labels, split)
