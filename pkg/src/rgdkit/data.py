"""Datasets: synthetic class blobs, IDX image/label files, splits.

Inputs live in the unit box [0, 1] per coordinate so that an epsilon budget
means the same thing across datasets and the (0, 1) domain clamp is valid.
The synthetic generator draws class centers uniformly in the box, adds
Gaussian noise, then min-max rescales each coordinate back into [0, 1].

IDX is the big-endian binary format used by classic digit datasets: magic
0x00000801 for unsigned-byte label vectors and 0x00000803 for unsigned-byte
image stacks.  Parse errors always carry the byte offset of the problem.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import ConfigError, DataFormatError, DimensionError
from .tensor import Tensor, tensor

__all__ = [
    "Dataset",
    "synth_blobs",
    "subset",
    "split",
    "IdxData",
    "parse_idx",
    "write_idx",
    "read_idx",
    "save_idx",
    "dataset_from_idx",
]

MAGIC_LABELS = 0x00000801
MAGIC_IMAGES = 0x00000803


@dataclass(frozen=True)
class Dataset:
    """Feature matrix in [0, 1] with integer class labels.

    ``inputs`` is (N, n) float64; ``labels`` is (N,) and normally int64 class
    indices in [0, class_count), but real-valued regression targets are
    accepted for scalar-target uses (class_count is then 0 and the dataset
    cannot serve classification or be serialized).  N == 0 is permitted so a
    degenerate split fraction stays representable; row-consuming operations
    reject empty datasets themselves.  ``metadata`` carries generator
    provenance and is excluded from equality.
    """

    inputs: Tensor
    labels: np.ndarray
    name: str = ""
    class_count: int | None = None
    metadata: Mapping = field(default_factory=dict, compare=False)

    def __post_init__(self):
        inputs = tensor(self.inputs)
        labels = np.asarray(self.labels)
        if np.issubdtype(labels.dtype, np.integer):
            labels = labels.astype(np.int64)
        elif np.issubdtype(labels.dtype, np.floating):
            labels = labels.astype(np.float64)
            if not np.all(np.isfinite(labels)):
                raise ConfigError("real-valued targets must be finite")
        else:
            raise ConfigError(f"labels must be integers or reals, got dtype {labels.dtype}")
        labels.setflags(write=False)
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "labels", labels)
        if inputs.ndim != 2:
            raise DimensionError(f"inputs must be (N, n), got {inputs.shape}")
        if labels.ndim != 1 or labels.shape[0] != inputs.shape[0]:
            raise DimensionError(f"{inputs.shape[0]} inputs vs labels shape {labels.shape}")
        a = inputs.array
        if a.size and (a.min() < 0.0 or a.max() > 1.0):
            raise ConfigError("inputs must lie in [0, 1]")
        if self.is_classification:
            if labels.size and labels.min() < 0:
                raise ConfigError("class labels must be non-negative")
            observed = int(labels.max()) + 1 if labels.size else 0
            if self.class_count is None:
                object.__setattr__(self, "class_count", observed)
            elif self.class_count < observed:
                raise ConfigError(f"label {observed - 1} outside [0, {self.class_count})")
        else:
            object.__setattr__(self, "class_count", 0)

    @property
    def is_classification(self) -> bool:
        return np.issubdtype(self.labels.dtype, np.integer)

    @property
    def count(self) -> int:
        return self.inputs.shape[0]

    @property
    def dim(self) -> int:
        return self.inputs.shape[1]

    @property
    def classes(self) -> int:
        return self.class_count or 0


def synth_blobs(count: int, dim: int, classes: int, spread: float = 0.1, seed=0) -> Dataset:
    """Gaussian class blobs rescaled into the unit box.

    Labels cycle 0..classes-1 so class sizes differ by at most one.  Per
    coordinate the points are min-max mapped onto [0, 1]; a coordinate with
    zero range collapses to 0.5.  Centers (in rescaled coordinates) and the
    noise scale are kept in ``metadata``.
    """
    if count < 1 or dim < 1 or classes < 2:
        raise ConfigError(f"need count >= 1, dim >= 1, classes >= 2; got {count}, {dim}, {classes}")
    if classes > count:
        raise ConfigError(f"cannot spread {classes} classes over {count} samples")
    if not np.isfinite(spread) or spread < 0:
        raise ConfigError(f"spread must be >= 0, got {spread}")
    rng = np.random.default_rng(seed)
    centers = rng.uniform(0.0, 1.0, size=(classes, dim))
    labels = np.arange(count, dtype=np.int64) % classes
    points = centers[labels] + rng.normal(0.0, spread, size=(count, dim))
    lo = points.min(axis=0)
    hi = points.max(axis=0)
    width = hi - lo
    flat = width == 0.0
    width[flat] = 1.0
    scaled = (points - lo[np.newaxis, :]) / width[np.newaxis, :]
    scaled[:, flat] = 0.5
    centers_scaled = (centers - lo[np.newaxis, :]) / width[np.newaxis, :]
    centers_scaled[:, flat] = 0.5
    meta = {
        "centers": centers_scaled,
        "spread": float(spread),
        "seed": seed,
        "rescale_lo": lo,
        "rescale_width": width,
    }
    return Dataset(
        inputs=tensor(scaled),
        labels=labels,
        name=f"blobs-{classes}x{count}d{dim}",
        class_count=classes,
        metadata=meta,
    )


def _take(ds: Dataset, idx: np.ndarray, name: str) -> Dataset:
    return Dataset(
        inputs=tensor(ds.inputs.array[idx]),
        labels=ds.labels[idx],
        name=name,
        class_count=ds.class_count if ds.is_classification else None,
        metadata=ds.metadata,
    )


def subset(ds: Dataset, indices) -> Dataset:
    """Rows of the dataset at the given indices, in the given order."""
    idx = np.asarray(indices, dtype=np.int64)
    if idx.ndim != 1 or idx.size == 0:
        raise ConfigError("subset needs a non-empty 1-d index list")
    if idx.min() < 0 or idx.max() >= ds.count:
        raise ConfigError(f"subset index outside [0, {ds.count})")
    return _take(ds, idx, ds.name)


def split(ds: Dataset, fractions: tuple[float, float], seed) -> tuple[Dataset, Dataset]:
    """Seeded shuffle, then partition into round(fractions[0] * N) train rows
    and the rest.  Fractions must be non-negative and sum to 1; a zero
    fraction leaves that side empty.  No row is lost or duplicated.
    """
    try:
        f_train, f_test = (float(f) for f in fractions)
    except (TypeError, ValueError):
        raise ConfigError(f"fractions must be a (train, test) pair, got {fractions!r}")
    if f_train < 0 or f_test < 0 or abs(f_train + f_test - 1.0) > 1e-9:
        raise ConfigError(f"fractions must be non-negative and sum to 1, got {fractions!r}")
    if ds.count < 1:
        raise ConfigError("cannot split an empty dataset")
    n_train = round(f_train * ds.count)
    order = np.random.default_rng(seed).permutation(ds.count)
    return (
        _take(ds, order[:n_train], f"{ds.name}-train"),
        _take(ds, order[n_train:], f"{ds.name}-test"),
    )


# ---------------------------------------------------------------------------
# IDX files


@dataclass(frozen=True)
class IdxData:
    """Decoded IDX payload: ``kind`` is "labels" (raw (N,)) or "images"
    (raw (N, rows, cols)); ``raw`` keeps the original unsigned bytes."""

    kind: str
    raw: np.ndarray

    def __post_init__(self):
        if self.kind not in ("labels", "images"):
            raise ConfigError(f"kind must be 'labels' or 'images', got {self.kind!r}")
        raw = np.ascontiguousarray(self.raw, dtype=np.uint8)
        raw.setflags(write=False)
        object.__setattr__(self, "raw", raw)
        want = 1 if self.kind == "labels" else 3
        if raw.ndim != want:
            raise DimensionError(f"{self.kind} payload must be {want}-d, got shape {raw.shape}")

    def as_labels(self) -> np.ndarray:
        if self.kind != "labels":
            raise ConfigError("not a label file")
        return self.raw.astype(np.int64)

    def as_inputs(self) -> np.ndarray:
        """Images flattened to (N, rows*cols) float64, scaled by 1/255."""
        if self.kind != "images":
            raise ConfigError("not an image file")
        n = self.raw.shape[0]
        return self.raw.reshape(n, -1).astype(np.float64) / 255.0


def parse_idx(data: bytes) -> IdxData:
    """Decode an IDX byte string; malformed input raises with a byte offset."""
    if len(data) < 4:
        raise DataFormatError(f"file ends inside the 4-byte magic ({len(data)} bytes)", offset=len(data))
    (magic,) = struct.unpack_from(">I", data, 0)
    if magic == MAGIC_LABELS:
        if len(data) < 8:
            raise DataFormatError("file ends inside the label count field", offset=len(data))
        (count,) = struct.unpack_from(">I", data, 4)
        need = 8 + count
        if len(data) < need:
            raise DataFormatError(f"label data truncated: expected {count} bytes", offset=len(data))
        if len(data) > need:
            raise DataFormatError(f"{len(data) - need} trailing bytes after label data", offset=need)
        raw = np.frombuffer(data, dtype=np.uint8, count=count, offset=8)
        return IdxData(kind="labels", raw=raw)
    if magic == MAGIC_IMAGES:
        if len(data) < 16:
            raise DataFormatError("file ends inside the image header", offset=len(data))
        count, rows, cols = struct.unpack_from(">III", data, 4)
        if rows == 0 or cols == 0:
            raise DataFormatError(f"zero image dimensions {rows}x{cols}", offset=8)
        if count * rows * cols > (1 << 33):
            raise DataFormatError(f"image payload {count}x{rows}x{cols} implausibly large", offset=4)
        need = 16 + count * rows * cols
        if len(data) < need:
            raise DataFormatError(f"image data truncated: expected {count * rows * cols} bytes", offset=len(data))
        if len(data) > need:
            raise DataFormatError(f"{len(data) - need} trailing bytes after image data", offset=need)
        raw = np.frombuffer(data, dtype=np.uint8, count=count * rows * cols, offset=16)
        return IdxData(kind="images", raw=raw.reshape(count, rows, cols))
    raise DataFormatError(f"unknown magic 0x{magic:08x}", offset=0)


def write_idx(idx: IdxData) -> bytes:
    """Inverse of :func:`parse_idx`; round-trips byte for byte."""
    if idx.kind == "labels":
        head = struct.pack(">II", MAGIC_LABELS, idx.raw.shape[0])
    else:
        n, rows, cols = idx.raw.shape
        head = struct.pack(">IIII", MAGIC_IMAGES, n, rows, cols)
    return head + idx.raw.tobytes()


def read_idx(path) -> IdxData:
    with open(path, "rb") as fh:
        return parse_idx(fh.read())


def save_idx(idx: IdxData, path):
    with open(path, "wb") as fh:
        fh.write(write_idx(idx))


def dataset_from_idx(images: IdxData, labels: IdxData, name: str = "idx") -> Dataset:
    """Pair an image file with a label file into a Dataset."""
    xs = images.as_inputs()
    ys = labels.as_labels()
    if xs.shape[0] != ys.shape[0]:
        raise DimensionError(f"{xs.shape[0]} images vs {ys.shape[0]} labels")
    return Dataset(inputs=tensor(xs), labels=ys, name=name, metadata={"source": "idx"})
