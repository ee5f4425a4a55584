"""Binary checkpoint container.

Layout (all integers little-endian):
  magic "RDEPTH01" (8 bytes)
  u32 config length, then that many UTF-8 bytes of key=value lines
  per-record: u32 name length, name bytes, u8 dtype tag (0 = float32),
  u8 rank, u32 extents[rank], row-major float32 payload
Records run to end of file and are written in sorted-name order, so
save -> load -> save is byte-identical.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import CheckpointError, ParseError

MAGIC = b"RDEPTH01"
DTYPE_F32 = 0


def save_container(path, meta: dict, arrays: dict) -> None:
    config = "".join(f"{k}={v}\n" for k, v in sorted(meta.items())).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(config)))
        fh.write(config)
        for name in sorted(arrays):
            arr = np.ascontiguousarray(arrays[name], dtype=np.float32)
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<BB", DTYPE_F32, arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.astype("<f4").tobytes())


def load_container(path):
    """Returns (meta dict, name -> float32 array)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != MAGIC:
        raise CheckpointError(f"bad checkpoint magic {blob[:8]!r} in {path}")
    offset = 8

    def take(n, what):
        nonlocal offset
        if offset + n > len(blob):
            raise ParseError(f"truncated checkpoint while reading {what}", path, offset)
        chunk = blob[offset:offset + n]
        offset += n
        return chunk

    (config_len,) = struct.unpack("<I", take(4, "config length"))
    config = take(config_len, "config block").decode("utf-8")
    meta = {}
    for line in config.splitlines():
        key, _, value = line.partition("=")
        if key:
            meta[key] = value

    arrays = {}
    while offset < len(blob):
        (name_len,) = struct.unpack("<I", take(4, "record name length"))
        name = take(name_len, "record name").decode("utf-8")
        tag, rank = struct.unpack("<BB", take(2, f"record header of {name}"))
        if tag != DTYPE_F32:
            raise CheckpointError(f"unsupported dtype tag {tag} for {name} in {path}")
        shape = struct.unpack(f"<{rank}I", take(4 * rank, f"extents of {name}"))
        count = int(np.prod(shape)) if rank else 1
        payload = take(4 * count, f"payload of {name}")
        arrays[name] = np.frombuffer(payload, dtype="<f4").reshape(shape).copy()
    return meta, arrays
