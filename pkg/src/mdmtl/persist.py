"""Binary model files.

Layout (all integers little-endian)::

    8 bytes   magic b"MDMTLMDL"
    u32       format version
    u8 + str  kind tag ("single", "cp", "tucker", "tt", "full")
    3 x u32   dims D, C, B
    u32 + str JSON metadata (schema, frozen blocks, fixed_P)
    u32       number of blocks
    per block, in the model's declared order:
        u8 + str  block name
        u8        ndim, then ndim x u32 shape
        float64   little-endian values, C order

Parameters round-trip bit for bit.
"""

import io
import json
import os
import struct

import numpy as np

from .descriptors import DomainSchema
from .errors import ModelFormatError
from .model_multi import CPModel, FullTensorModel, TTModel, TuckerModel
from .model_single import SingleOutputModel

__all__ = ["save_model", "load_model", "dumps_model", "loads_model", "MAGIC", "VERSION"]

MAGIC = b"MDMTLMDL"
VERSION = 1

_KINDS = {
    "single": SingleOutputModel,
    "cp": CPModel,
    "tucker": TuckerModel,
    "tt": TTModel,
    "full": FullTensorModel,
}


def _put_str(buf, s, width="<B"):
    raw = s.encode("utf-8")
    buf.write(struct.pack(width, len(raw)))
    buf.write(raw)


def dumps_model(model):
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", VERSION))
    _put_str(buf, model.kind)
    buf.write(struct.pack("<3I", *model.dims))
    meta = {
        "schema": model.schema.to_dict() if model.schema is not None else None,
        "frozen": sorted(model.frozen),
        "fixed_P": bool(getattr(model, "fixed_P", False)),
    }
    _put_str(buf, json.dumps(meta, sort_keys=True), "<I")
    buf.write(struct.pack("<I", len(model.blocks)))
    for name in model.blocks:
        arr = getattr(model, name)
        _put_str(buf, name)
        buf.write(struct.pack("<B", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        buf.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return buf.getvalue()


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.data):
            raise ModelFormatError(
                f"truncated model file: needed {n} bytes at offset {self.pos}, have {len(self.data) - self.pos}"
            )
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def string(self, width="<B"):
        (n,) = self.unpack(width)
        try:
            return self.take(n).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ModelFormatError(f"corrupted string field: {exc}") from None


def loads_model(data):
    r = _Reader(bytes(data))
    if r.take(len(MAGIC)) != MAGIC:
        raise ModelFormatError("not a model file (bad magic)")
    (version,) = r.unpack("<I")
    if version != VERSION:
        raise ModelFormatError(f"unsupported model format version {version} (expected {VERSION})")
    kind = r.string()
    if kind not in _KINDS:
        raise ModelFormatError(f"unknown model kind {kind!r}")
    dims = r.unpack("<3I")
    try:
        meta = json.loads(r.string("<I"))
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"corrupted metadata: {exc}") from None
    (nblocks,) = r.unpack("<I")
    cls = _KINDS[kind]
    if nblocks != len(cls.blocks):
        raise ModelFormatError(f"{kind} model has {len(cls.blocks)} blocks, file declares {nblocks}")
    blocks = {}
    for expected in cls.blocks:
        name = r.string()
        if name != expected:
            raise ModelFormatError(f"expected block {expected!r}, found {name!r}")
        (ndim,) = r.unpack("<B")
        shape = r.unpack(f"<{ndim}I")
        count = int(np.prod(shape))
        blocks[name] = np.frombuffer(r.take(8 * count), dtype="<f8").astype(np.float64).reshape(shape)
    if r.pos != len(r.data):
        raise ModelFormatError(f"{len(r.data) - r.pos} trailing bytes after last block")
    schema = DomainSchema.from_dict(meta["schema"]) if meta.get("schema") else None
    kwargs = dict(blocks, schema=schema, frozen=frozenset(meta.get("frozen", ())))
    if kind == "single":
        kwargs["fixed_P"] = meta.get("fixed_P", False)
    try:
        model = cls(**kwargs)
    except ValueError as exc:
        raise ModelFormatError(f"inconsistent model blocks: {exc}") from None
    if tuple(model.dims) != tuple(dims):
        raise ModelFormatError(f"header dims {dims} disagree with blocks {model.dims}")
    return model


def save_model(model, path):
    """Write atomically (temporary file, then rename)."""
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(dumps_model(model))
    os.replace(tmp, path)


def load_model(path):
    with open(path, "rb") as fh:
        return loads_model(fh.read())
