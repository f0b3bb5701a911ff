"""Binary checkpoint container for named float32 parameters.

Layout (all integers little-endian unsigned 32-bit):

    magic b"DFCK" | version | n_params
    per parameter: name_len | name (utf-8) | rank | dims... | float32 data (LE)

A JSON sidecar at ``<path>.meta.json`` carries model configs, the vocabulary
hash and anything else the training run wants to record. Writes go through a
temp file and os.replace, so an interrupted save never clobbers the previous
checkpoint.
"""

from __future__ import annotations

import json
import os
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError

MAGIC = b"DFCK"
VERSION = 1


def save_params(named: dict[str, np.ndarray], path: str | Path) -> None:
    path = Path(path)
    chunks = [MAGIC, struct.pack("<II", VERSION, len(named))]
    for name, arr in named.items():
        if arr.dtype != np.float32:
            raise FormatError(f"checkpoint stores float32 only, {name} is {arr.dtype}")
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(raw)))
        chunks.append(raw)
        chunks.append(struct.pack("<I", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(b"".join(chunks))
    os.replace(tmp, path)


def load_params(path: str | Path) -> dict[str, np.ndarray]:
    path = Path(path)
    blob = path.read_bytes()
    if blob[:4] != MAGIC:
        raise FormatError("not a checkpoint file (bad magic)", str(path))
    version, count = struct.unpack_from("<II", blob, 4)
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}", str(path))
    off = 12
    named: dict[str, np.ndarray] = {}
    try:
        for _ in range(count):
            (name_len,) = struct.unpack_from("<I", blob, off)
            off += 4
            name = blob[off : off + name_len].decode("utf-8")
            off += name_len
            (rank,) = struct.unpack_from("<I", blob, off)
            off += 4
            dims = struct.unpack_from(f"<{rank}I", blob, off)
            off += 4 * rank
            n = int(np.prod(dims, dtype=np.int64)) if rank else 1
            arr = np.frombuffer(blob, dtype="<f4", count=n, offset=off)
            off += 4 * n
            named[name] = arr.reshape(dims).astype(np.float32, copy=True)
    except struct.error:
        raise FormatError("truncated checkpoint", str(path)) from None
    if off != len(blob):
        raise FormatError("trailing bytes after last parameter", str(path))
    return named


def save_metadata(path: str | Path, meta: dict) -> None:
    side = Path(str(path) + ".meta.json")
    tmp = side.with_name(side.name + ".tmp")
    tmp.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    os.replace(tmp, side)


def load_metadata(path: str | Path) -> dict:
    side = Path(str(path) + ".meta.json")
    if not side.exists():
        raise FormatError(f"missing checkpoint metadata {side}")
    return json.loads(side.read_text(encoding="utf-8"))
