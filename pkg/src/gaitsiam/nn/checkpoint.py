"""Versioned little-endian binary checkpoints.

Layout::

    b"GFCK" | u16 version | u64 seed | u8 ndim | u32 * ndim input shape
    u32 layer count | layer record * count | u8 has_head | [head record]

    layer record: u8 kind tag | u8 trainable | 7 * u32 hyperparameters
                  (out_channels, kh, kw, stride, padding, units, size)
                  then, for conv2d/dense, W and b as
                  u64 element count + IEEE-754 float64 values

The optional head record is a dense layer record, used by Siamese models
for the probability head.
"""

from __future__ import annotations

import struct

import numpy as np

from .layers import KINDS, LayerSpec, materialize
from .model import Model

MAGIC = b"GFCK"
VERSION = 1
KIND_TAGS = {kind: i for i, kind in enumerate(KINDS)}


class CheckpointError(ValueError):
    pass


class BadMagicError(CheckpointError):
    pass


class VersionMismatchError(CheckpointError):
    pass


class TruncatedCheckpointError(CheckpointError):
    pass


def _spec_fields(spec: LayerSpec):
    kh, kw = spec.kernel
    return (spec.out_channels, kh, kw, spec.stride, spec.padding, spec.units, spec.size)


def _pack_layer(layer) -> bytes:
    spec = layer.spec
    out = [struct.pack("<BB", KIND_TAGS[spec.kind], int(spec.trainable)),
           struct.pack("<7I", *_spec_fields(spec))]
    if spec.has_weights:
        for name in ("W", "b"):
            arr = np.ascontiguousarray(layer.params[name], dtype="<f8").ravel()
            out.append(struct.pack("<Q", arr.size))
            out.append(arr.tobytes())
    return b"".join(out)


def save_checkpoint(model: Model, head=None) -> bytes:
    """Serialize a trunk (and optionally a dense head layer) to bytes."""
    parts = [MAGIC, struct.pack("<HQ", VERSION, model.seed),
             struct.pack("<B", len(model.input_shape)),
             struct.pack(f"<{len(model.input_shape)}I", *model.input_shape),
             struct.pack("<I", len(model.layers))]
    parts += [_pack_layer(layer) for layer in model.layers]
    parts.append(struct.pack("<B", head is not None))
    if head is not None:
        parts.append(_pack_layer(head))
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes):
        self.data = memoryview(data)
        self.pos = 0

    def take(self, n: int):
        if self.pos + n > len(self.data):
            raise TruncatedCheckpointError(
                f"checkpoint truncated: needed {n} bytes at offset {self.pos}, "
                f"only {len(self.data) - self.pos} left")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def _read_layer(reader: _Reader, in_shape, dtype):
    tag, trainable = reader.unpack("<BB")
    if tag >= len(KINDS):
        raise CheckpointError(f"unknown layer tag {tag}")
    out_channels, kh, kw, stride, padding, units, size = reader.unpack("<7I")
    spec = LayerSpec(KINDS[tag], out_channels=out_channels, kernel=(kh, kw), stride=stride,
                     padding=padding, units=units, size=size, trainable=bool(trainable))
    layer = materialize(spec, in_shape)
    if spec.has_weights:
        layer.init_params(np.random.default_rng(0), dtype)
        for name in ("W", "b"):
            (count,) = reader.unpack("<Q")
            expected = layer.params[name].size
            if count != expected:
                raise CheckpointError(f"{spec.kind}.{name}: {count} values stored, {expected} expected")
            values = np.frombuffer(reader.take(8 * count), dtype="<f8")
            layer.params[name] = values.reshape(layer.params[name].shape).astype(dtype)
    return layer


def read_checkpoint(data: bytes, dtype=np.float64):
    """Decode bytes into ``(model, head_layer_or_None)``."""
    reader = _Reader(bytes(data))
    magic = bytes(reader.take(4))
    if magic != MAGIC:
        raise BadMagicError(f"bad magic {magic!r}, expected {MAGIC!r}")
    version, seed = reader.unpack("<HQ")
    if version != VERSION:
        raise VersionMismatchError(f"checkpoint version {version}, this build reads {VERSION}")
    (ndim,) = reader.unpack("<B")
    input_shape = reader.unpack(f"<{ndim}I")
    (count,) = reader.unpack("<I")

    model = Model([], input_shape=input_shape, seed=seed, dtype=dtype)
    shape = model.input_shape
    for _ in range(count):
        layer = _read_layer(reader, shape, model.dtype)
        model.layers.append(layer)
        shape = layer.out_shape
    model.output_shape = shape

    (has_head,) = reader.unpack("<B")
    head = _read_layer(reader, shape, model.dtype) if has_head else None
    if reader.pos != len(reader.data):
        raise CheckpointError(f"{len(reader.data) - reader.pos} trailing bytes after checkpoint")
    return model, head


def load_checkpoint(data: bytes, dtype=np.float64) -> Model:
    return read_checkpoint(data, dtype=dtype)[0]
