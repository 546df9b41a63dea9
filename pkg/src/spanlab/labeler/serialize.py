"""Versioned binary parameter container.

Layout (all integers little-endian)::

    8 bytes   magic  b"SPANLAB\\0"
    u32       format version
    u32 + N   JSON metadata (encoder config, head, vocabulary), UTF-8
    u32       tensor count
    per tensor: u16 + name (UTF-8), u8 ndim, ndim x u32 shape, float64 data (<f8)
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import ParamsFileError
from .encoders import EncoderConfig
from .model import PARAMS_VERSION, LabelerParams, Vocab, init_params

MAGIC = b"SPANLAB\0"


def params_to_bytes(params: LabelerParams) -> bytes:
    meta = {
        "config": params.config.to_dict(),
        "head": params.head,
        "vocab": list(params.vocab.words) if params.vocab is not None else None,
    }
    meta_bytes = json.dumps(meta, ensure_ascii=False, sort_keys=True).encode("utf-8")
    out = [MAGIC, struct.pack("<I", params.version), struct.pack("<I", len(meta_bytes)), meta_bytes,
           struct.pack("<I", len(params.tensors))]
    for name in sorted(params.tensors):
        arr = np.ascontiguousarray(params.tensors[name], dtype="<f8")
        raw_name = name.encode("utf-8")
        out.append(struct.pack("<H", len(raw_name)) + raw_name)
        out.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        out.append(arr.tobytes())
    return b"".join(out)


def save_params(params: LabelerParams, path) -> None:
    Path(path).write_bytes(params_to_bytes(params))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise ParamsFileError("parameter file is truncated or corrupt")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def params_from_bytes(data: bytes, expected_config: EncoderConfig | None = None) -> LabelerParams:
    r = _Reader(data)
    if r.take(len(MAGIC)) != MAGIC:
        raise ParamsFileError("not a spanlab parameter file (bad magic bytes)")
    (version,) = r.unpack("<I")
    if version != PARAMS_VERSION:
        raise ParamsFileError(f"parameter file version {version}, this build reads {PARAMS_VERSION}")
    (meta_len,) = r.unpack("<I")
    try:
        meta = json.loads(r.take(meta_len).decode("utf-8"))
        config = EncoderConfig.from_dict(meta["config"])
    except (ValueError, KeyError) as exc:
        raise ParamsFileError(f"corrupt metadata: {exc}") from None
    (count,) = r.unpack("<I")
    tensors = {}
    for _ in range(count):
        (name_len,) = r.unpack("<H")
        name = r.take(name_len).decode("utf-8", errors="replace")
        (ndim,) = r.unpack("<B")
        shape = r.unpack(f"<{ndim}I") if ndim else ()
        size = int(np.prod(shape)) if shape else 1
        tensors[name] = np.frombuffer(r.take(8 * size), dtype="<f8").reshape(shape).astype(np.float64)
    if r.pos != len(data):
        raise ParamsFileError("trailing bytes after last tensor; file corrupt")

    reference = init_params(expected_config or config, head=meta.get("head", "crf")).tensors
    for name, ref in reference.items():
        if name not in tensors:
            raise ParamsFileError(f"tensor {name!r} missing from parameter file")
        if tensors[name].shape != ref.shape:
            raise ParamsFileError(
                f"shape mismatch for tensor {name!r}: file has {tensors[name].shape}, config expects {ref.shape}")
    extra = set(tensors) - set(reference)
    if extra:
        raise ParamsFileError(f"unexpected tensor(s) {sorted(extra)} for this encoder config")
    vocab = Vocab(tuple(meta["vocab"])) if meta.get("vocab") else None
    return LabelerParams(expected_config or config, tensors, vocab, meta.get("head", "crf"), version)


def load_params(path, expected_config: EncoderConfig | None = None) -> LabelerParams:
    return params_from_bytes(Path(path).read_bytes(), expected_config)
