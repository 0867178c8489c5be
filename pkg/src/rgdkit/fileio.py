"""Binary serialization for models and datasets.

Checkpoints ("RGDM") and datasets ("RGDD") share the same envelope: a 4-byte
ASCII magic, a little-endian u16 format version, then a fixed header and raw
little-endian float64 payload.  Writing then reading is bitwise lossless,
including negative zeros; NaN or infinity in a payload is rejected on read
(and on write via the Tensor constructor).  All malformed-file errors carry
the byte offset of the problem.

Checkpoint layout after the envelope:
    u8 flag            0 = general MLP with biases
                       1 = no-bias scalar-head theory model, stored as the
                           equivalent 2-layer stack (biases omitted)
    u32 layer count, then per layer: u32 out, u32 in, weight row-major f64,
    and (flag 0 only) bias f64

Dataset layout after the envelope:
    u32 count, u32 dim, inputs row-major f64, labels u32
"""

from __future__ import annotations

import struct

import numpy as np

from .data import Dataset
from .errors import ConfigError, DataFormatError, NumericalError
from .models import MlpModel, TheoryModel
from .tensor import tensor

__all__ = [
    "MAGIC_MODEL",
    "MAGIC_DATASET",
    "FORMAT_VERSION",
    "dump_model",
    "parse_model",
    "save_model",
    "load_model",
    "dump_dataset",
    "parse_dataset",
    "save_dataset",
    "load_dataset",
]

MAGIC_MODEL = b"RGDM"
MAGIC_DATASET = b"RGDD"
FORMAT_VERSION = 1


class _Reader:
    """Cursor over a byte string that reports offsets on underrun."""

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, fmt: str):
        size = struct.calcsize(fmt)
        if self.pos + size > len(self.data):
            raise DataFormatError(
                f"file ends inside a {size}-byte field", offset=len(self.data)
            )
        out = struct.unpack_from(fmt, self.data, self.pos)
        self.pos += size
        return out

    def floats(self, count: int) -> np.ndarray:
        size = 8 * count
        if self.pos + size > len(self.data):
            raise DataFormatError(f"float payload truncated: expected {count} values", offset=len(self.data))
        arr = np.frombuffer(self.data, dtype="<f8", count=count, offset=self.pos).astype(np.float64)
        self.pos += size
        return arr

    def ints(self, count: int) -> np.ndarray:
        size = 4 * count
        if self.pos + size > len(self.data):
            raise DataFormatError(f"label payload truncated: expected {count} values", offset=len(self.data))
        arr = np.frombuffer(self.data, dtype="<u4", count=count, offset=self.pos).astype(np.int64)
        self.pos += size
        return arr

    def done(self):
        if self.pos != len(self.data):
            raise DataFormatError(f"{len(self.data) - self.pos} trailing bytes", offset=self.pos)


def _check_envelope(r: _Reader, magic: bytes):
    if len(r.data) < 4 or r.data[:4] != magic:
        got = r.data[:4]
        raise DataFormatError(f"bad magic {got!r}, expected {magic!r}", offset=0)
    r.pos = 4
    (version,) = r.take("<H")
    if version != FORMAT_VERSION:
        raise DataFormatError(f"unsupported format version {version}", offset=4)


def _f64(a: np.ndarray) -> bytes:
    return np.ascontiguousarray(a, dtype="<f8").tobytes()


# ---------------------------------------------------------------------------
# models


def dump_model(model) -> bytes:
    out = [MAGIC_MODEL, struct.pack("<H", FORMAT_VERSION)]
    if isinstance(model, TheoryModel):
        # The 2-layer stack equivalent to the theory model: w2 maps input to
        # hidden, w1 (as a 1-row matrix) maps hidden to the scalar head.
        out.append(struct.pack("<BI", 1, 2))
        out.append(struct.pack("<II", model.hidden_dim, model.input_dim))
        out.append(_f64(model.w2.array))
        out.append(struct.pack("<II", 1, model.hidden_dim))
        out.append(_f64(model.w1.array))
    elif isinstance(model, MlpModel):
        out.append(struct.pack("<BI", 0, len(model.layers)))
        for w, b in model.layers:
            out.append(struct.pack("<II", w.shape[0], w.shape[1]))
            out.append(_f64(w.array))
            out.append(_f64(b.array))
    else:
        raise DataFormatError(f"cannot serialize {type(model).__name__}", offset=0)
    return b"".join(out)


def parse_model(data: bytes):
    r = _Reader(data)
    _check_envelope(r, MAGIC_MODEL)
    (flag,) = r.take("<B")
    if flag not in (0, 1):
        raise DataFormatError(f"unknown checkpoint flag {flag}", offset=6)
    (n_layers,) = r.take("<I")
    try:
        if flag == 1:
            if n_layers != 2:
                raise DataFormatError(f"theory checkpoint must have 2 layers, got {n_layers}", offset=7)
            hidden, inp = r.take("<II")
            w2 = r.floats(hidden * inp).reshape(hidden, inp)
            head_out, head_in = r.take("<II")
            if head_out != 1 or head_in != hidden:
                raise DataFormatError(
                    f"theory head must be 1x{hidden}, got {head_out}x{head_in}", offset=r.pos - 8
                )
            w1 = r.floats(hidden)
            model = TheoryModel(w1=tensor(w1), w2=tensor(w2))
        else:
            layers = []
            for _ in range(n_layers):
                out_dim, in_dim = r.take("<II")
                w = r.floats(out_dim * in_dim).reshape(out_dim, in_dim)
                b = r.floats(out_dim)
                layers.append((tensor(w), tensor(b)))
            model = MlpModel(layers=tuple(layers))
    except NumericalError as exc:
        raise DataFormatError(f"non-finite value in model payload: {exc}", offset=r.pos)
    r.done()
    return model


def save_model(model, path):
    with open(path, "wb") as fh:
        fh.write(dump_model(model))


def load_model(path):
    with open(path, "rb") as fh:
        return parse_model(fh.read())


# ---------------------------------------------------------------------------
# datasets


def dump_dataset(ds: Dataset) -> bytes:
    if not ds.is_classification:
        raise ConfigError("only integer-labeled datasets can be serialized")
    out = [
        MAGIC_DATASET,
        struct.pack("<H", FORMAT_VERSION),
        struct.pack("<III", ds.count, ds.dim, ds.classes),
        _f64(ds.inputs.array),
        np.ascontiguousarray(ds.labels, dtype="<u4").tobytes(),
    ]
    return b"".join(out)


def parse_dataset(data: bytes) -> Dataset:
    r = _Reader(data)
    _check_envelope(r, MAGIC_DATASET)
    count, dim, classes = r.take("<III")
    payload_at = r.pos
    inputs = r.floats(count * dim).reshape(count, dim)
    labels = r.ints(count)
    r.done()
    try:
        return Dataset(
            inputs=tensor(inputs),
            labels=labels,
            name="rgdd",
            class_count=classes,
            metadata={"source": "rgdd"},
        )
    except (NumericalError, ConfigError) as exc:
        raise DataFormatError(f"invalid dataset payload: {exc}", offset=payload_at)


def save_dataset(ds: Dataset, path):
    with open(path, "wb") as fh:
        fh.write(dump_dataset(ds))


def load_dataset(path) -> Dataset:
    with open(path, "rb") as fh:
        return parse_dataset(fh.read())
