"""Dense labeled tensors and the FTCH binary dataset container.

All multi-byte fields are little-endian; element data is row-major.
"""

from __future__ import annotations

import io
import os
from dataclasses import dataclass, field

import numpy as np

FTCH_MAGIC = b"FTCH"
FTCH_VERSION = 1

# 2-byte addresses must be able to index any element of a stored tensor.
MAX_ELEMENTS = 65536

U8 = "u8"
F32 = "f32"

DTYPE_CODE = {U8: 0, F32: 1}
CODE_DTYPE = {0: U8, 1: F32}
NUMPY_DTYPE = {U8: np.dtype("u1"), F32: np.dtype("<f4")}
DTYPE_SIZE = {U8: 1, F32: 4}


class FormatError(ValueError):
    """A binary stream does not match its declared layout."""


def _as_element_array(data, dtype: str) -> np.ndarray:
    arr = np.asarray(data, dtype=NUMPY_DTYPE[dtype]).reshape(-1)
    return arr


@dataclass(eq=False)
class TensorSample:
    """One labeled dense tensor (raw u8 image or f32 feature map), flat row-major."""

    shape: tuple[int, ...]
    dtype: str
    data: np.ndarray
    label: int

    def __post_init__(self):
        self.shape = tuple(int(s) for s in self.shape)
        if not self.shape or any(s <= 0 for s in self.shape):
            raise ValueError(f"shape entries must be positive, got {self.shape}")
        if self.dtype not in DTYPE_CODE:
            raise ValueError(f"unsupported dtype {self.dtype!r}")
        self.data = _as_element_array(self.data, self.dtype)
        n = int(np.prod(self.shape))
        if self.data.size != n:
            raise ValueError(
                f"data has {self.data.size} elements, shape {self.shape} implies {n}"
            )
        if n > MAX_ELEMENTS:
            raise ValueError(f"element count {n} exceeds the {MAX_ELEMENTS} limit")
        if self.dtype == F32 and not np.isfinite(self.data).all():
            raise ValueError("non-finite values are rejected at ingestion")
        self.label = int(self.label)
        if self.label < 0:
            raise ValueError("label must be non-negative")

    @property
    def n(self) -> int:
        return self.data.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, TensorSample):
            return NotImplemented
        return (
            self.shape == other.shape
            and self.dtype == other.dtype
            and self.label == other.label
            and np.array_equal(self.data, other.data)
        )


@dataclass(eq=False)
class Dataset:
    """Homogeneous ordered collection of TensorSamples.

    shape and dtype are declared explicitly so that an empty dataset is still
    fully described (the file header needs them).
    """

    shape: tuple[int, ...]
    dtype: str
    samples: list[TensorSample] = field(default_factory=list)

    def __post_init__(self):
        self.shape = tuple(int(s) for s in self.shape)
        if not self.shape or any(s <= 0 for s in self.shape):
            raise ValueError(f"shape entries must be positive, got {self.shape}")
        if self.dtype not in DTYPE_CODE:
            raise ValueError(f"unsupported dtype {self.dtype!r}")
        for s in self.samples:
            if s.shape != self.shape or s.dtype != self.dtype:
                raise ValueError(
                    f"sample with shape {s.shape}/{s.dtype} in dataset "
                    f"declared {self.shape}/{self.dtype}"
                )

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def n(self) -> int:
        return int(np.prod(self.shape))

    @property
    def class_ids(self) -> tuple[int, ...]:
        return tuple(sorted({s.label for s in self.samples}))

    def to_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Stack into (X, y): X float64 (count, n), y int64 (count,)."""
        if not self.samples:
            return np.zeros((0, self.n)), np.zeros(0, dtype=np.int64)
        X = np.stack([s.data.astype(np.float64) for s in self.samples])
        y = np.array([s.label for s in self.samples], dtype=np.int64)
        return X, y

    @classmethod
    def from_arrays(cls, X, y, shape: tuple[int, ...], dtype: str) -> "Dataset":
        samples = [
            TensorSample(shape, dtype, np.asarray(row), int(lbl))
            for row, lbl in zip(X, y)
        ]
        return cls(shape, dtype, samples)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.shape == other.shape
            and self.dtype == other.dtype
            and self.samples == other.samples
        )


def file_size(rank: int, count: int, n: int, dtype: str) -> int:
    """Exact FTCH byte length from the header fields alone."""
    return 16 + 4 * rank + 4 * count + count * n * DTYPE_SIZE[dtype]


def write_dataset(dataset: Dataset, destination) -> int:
    """Serialize a dataset to a binary sink (path or file object); returns bytes written."""
    if isinstance(destination, (str, os.PathLike)):
        with open(destination, "wb") as fh:
            return write_dataset(dataset, fh)

    rank = len(dataset.shape)
    count = len(dataset.samples)
    head = bytearray()
    head += FTCH_MAGIC
    head += FTCH_VERSION.to_bytes(2, "little")
    head += bytes([DTYPE_CODE[dataset.dtype], rank])
    for dim in dataset.shape:
        head += int(dim).to_bytes(4, "little")
    head += count.to_bytes(8, "little")
    written = destination.write(bytes(head))

    if count:
        labels = np.array([s.label for s in dataset.samples], dtype="<u4")
        written += destination.write(labels.tobytes())
        payload = np.concatenate([s.data for s in dataset.samples])
        written += destination.write(payload.astype(NUMPY_DTYPE[dataset.dtype]).tobytes())
    return written


class _Cursor:
    """Sequential reader that names the field a truncation occurred in."""

    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, size: int, what: str) -> bytes:
        end = self.pos + size
        if end > len(self.blob):
            raise FormatError(
                f"{what}: need {size} bytes at offset {self.pos}, "
                f"file has {len(self.blob) - self.pos} left (truncated)"
            )
        out = self.blob[self.pos:end]
        self.pos = end
        return out

    def u(self, size: int, what: str) -> int:
        return int.from_bytes(self.take(size, what), "little")


def read_dataset(source) -> Dataset:
    """Parse an FTCH stream (path, file object, or bytes); inverse of write_dataset."""
    if isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as fh:
            return read_dataset(fh)
    if isinstance(source, (bytes, bytearray)):
        blob = bytes(source)
    else:
        blob = source.read()

    cur = _Cursor(blob)
    magic = cur.take(4, "magic")
    if magic != FTCH_MAGIC:
        raise FormatError(f"magic: expected {FTCH_MAGIC!r}, got {magic!r}")
    version = cur.u(2, "version")
    if version != FTCH_VERSION:
        raise FormatError(f"version: unsupported version {version}")
    dtype_code = cur.u(1, "dtype")
    if dtype_code not in CODE_DTYPE:
        raise FormatError(f"dtype: unknown code {dtype_code}")
    dtype = CODE_DTYPE[dtype_code]
    rank = cur.u(1, "rank")
    if rank < 1:
        raise FormatError("rank: must be at least 1")
    shape = tuple(cur.u(4, "shape") for _ in range(rank))
    if any(dim == 0 for dim in shape):
        raise FormatError(f"shape: zero-sized dimension in {shape}")
    n = int(np.prod(shape))
    if n > MAX_ELEMENTS:
        raise FormatError(f"shape: element count {n} exceeds the {MAX_ELEMENTS} limit")
    count = cur.u(8, "sample_count")

    labels = np.frombuffer(cur.take(4 * count, "labels"), dtype="<u4")
    elem = DTYPE_SIZE[dtype]
    payload = np.frombuffer(cur.take(count * n * elem, "data"), dtype=NUMPY_DTYPE[dtype])
    if cur.pos != len(blob):
        raise FormatError(f"data: {len(blob) - cur.pos} trailing bytes after payload")

    samples = [
        TensorSample(shape, dtype, payload[i * n:(i + 1) * n].copy(), int(labels[i]))
        for i in range(count)
    ]
    return Dataset(shape, dtype, samples)


def dataset_to_bytes(dataset: Dataset) -> bytes:
    buf = io.BytesIO()
    write_dataset(dataset, buf)
    return buf.getvalue()
