"""
Binary parameter checkpoints.

Layout (all little-endian)::

    8s   magic  b"DRTRPARM"
    u32  version
    u32  K, feature_dim, hidden_dim, class_count
    u32  tensor count
    per tensor:
        u32  name length, then the UTF-8 name
        u32  ndim, then ndim x u32 dims
        f32  data, row-major

Values are stored as f32, so ``decode(encode(p))`` equals ``p`` cast to f32
and re-encoding a decoded checkpoint reproduces the same bytes.  An optional
``omega`` tensor carries the similarity weights.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Optional, Union

import numpy as np

from diffusion.params import TENSOR_NAMES, DiffusionParams, SimilarityWeights
from errors import MalformedInputError

MAGIC = b"DRTRPARM"
VERSION = 1

_HEADER = struct.Struct("<8sIIIIII")
_U32 = struct.Struct("<I")

OMEGA = "omega"


def encode_params(params: DiffusionParams, weights: Optional[SimilarityWeights] = None) -> bytes:
    params.validate()
    tensors = list(params.tensors())
    if weights is not None:
        tensors.append((OMEGA, weights.as_array()))

    parts = [
        _HEADER.pack(
            MAGIC, VERSION, params.K, params.feature_dim, params.hidden_dim,
            params.class_count, len(tensors),
        )
    ]
    for name, tensor in tensors:
        label = name.encode("utf-8")
        parts.append(_U32.pack(len(label)) + label)
        parts.append(_U32.pack(tensor.ndim) + struct.pack(f"<{tensor.ndim}I", *tensor.shape))
        parts.append(np.ascontiguousarray(tensor, dtype="<f4").tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, size: int) -> bytes:
        if self.pos + size > len(self.blob):
            raise MalformedInputError("checkpoint truncated")
        chunk = self.blob[self.pos:self.pos + size]
        self.pos += size
        return chunk

    def u32(self) -> int:
        return _U32.unpack(self.take(4))[0]


def decode_params(blob: bytes) -> tuple[DiffusionParams, Optional[SimilarityWeights]]:
    reader = _Reader(blob)
    magic, version, K, d, h, C, count = _HEADER.unpack(reader.take(_HEADER.size))
    if magic != MAGIC:
        raise MalformedInputError(f"bad checkpoint magic {magic!r}")
    if version != VERSION:
        raise MalformedInputError(f"unsupported checkpoint version {version}")

    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        raw = reader.take(reader.u32())
        try:
            name = raw.decode("utf-8")
        except UnicodeDecodeError:
            raise MalformedInputError(f"checkpoint tensor name {raw!r} is not UTF-8") from None
        ndim = reader.u32()
        shape = struct.unpack(f"<{ndim}I", reader.take(4 * ndim))
        size = int(np.prod(shape, dtype=np.int64))
        data = np.frombuffer(reader.take(4 * size), dtype="<f4").reshape(shape)
        if name in tensors:
            raise MalformedInputError(f"checkpoint repeats tensor {name!r}")
        tensors[name] = data.astype(np.float64)
    if reader.pos != len(blob):
        raise MalformedInputError("trailing bytes after the last tensor")

    missing = [n for n in TENSOR_NAMES if n not in tensors]
    if missing:
        raise MalformedInputError(f"checkpoint lacks tensor(s) {missing}")
    params = DiffusionParams(**{n: tensors[n] for n in TENSOR_NAMES})
    if (params.K, params.feature_dim, params.hidden_dim, params.class_count) != (K, d, h, C):
        raise MalformedInputError("checkpoint header dims disagree with its tensors")
    try:
        params.validate()
    except ValueError as exc:
        raise MalformedInputError(f"checkpoint tensors inconsistent: {exc}") from None

    weights = SimilarityWeights.from_array(tensors[OMEGA]) if OMEGA in tensors else None
    return params, weights


def save_params(
    path: Union[str, Path], params: DiffusionParams, weights: Optional[SimilarityWeights] = None
) -> None:
    Path(path).write_bytes(encode_params(params, weights))


def load_params(path: Union[str, Path]) -> tuple[DiffusionParams, Optional[SimilarityWeights]]:
    return decode_params(Path(path).read_bytes())
