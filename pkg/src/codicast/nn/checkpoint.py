"""Binary checkpoint container: magic "CKPT1", a JSON metadata line, then
length-prefixed named tensor blocks.

Block layout per tensor: u16 LE name byte length, UTF-8 name, u8 rank,
rank x u32 LE dims, then the row-major little-endian float32 payload.
Serialization is idempotent: save -> load -> save is byte-identical.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import CheckpointError

MAGIC = b"CKPT1\n"


def write_checkpoint(path: str | Path, metadata: dict, arrays: dict[str, np.ndarray]) -> None:
    chunks = [MAGIC, json.dumps(metadata, sort_keys=True).encode("utf-8") + b"\n",
              struct.pack("<I", len(arrays))]
    for name, arr in arrays.items():
        name_bytes = name.encode("utf-8")
        payload = np.ascontiguousarray(arr, dtype="<f4")
        chunks.append(struct.pack("<H", len(name_bytes)))
        chunks.append(name_bytes)
        chunks.append(struct.pack("<B", payload.ndim))
        chunks.append(struct.pack(f"<{payload.ndim}I", *payload.shape))
        chunks.append(payload.tobytes())
    Path(path).write_bytes(b"".join(chunks))


def read_checkpoint(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    """Return (metadata, name -> float32 array)."""
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if not raw.startswith(MAGIC):
        raise CheckpointError(f"checkpoint version mismatch: {path} lacks magic {MAGIC[:-1]!r}")
    pos = len(MAGIC)
    newline = raw.find(b"\n", pos)
    if newline < 0:
        raise CheckpointError("truncated checkpoint: missing metadata line")
    try:
        metadata = json.loads(raw[pos:newline].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"bad checkpoint metadata: {exc}") from exc
    pos = newline + 1

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(raw):
            raise CheckpointError("truncated checkpoint: tensor block cut short")
        out = raw[pos:pos + n]
        pos += n
        return out

    (count,) = struct.unpack("<I", take(4))
    arrays: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2))
        name = take(name_len).decode("utf-8")
        (rank,) = struct.unpack("<B", take(1))
        dims = struct.unpack(f"<{rank}I", take(4 * rank)) if rank else ()
        size = int(np.prod(dims, dtype=np.int64)) if dims else 1
        data = np.frombuffer(take(4 * size), dtype="<f4").reshape(dims)
        arrays[name] = data.copy()
    if pos != len(raw):
        raise CheckpointError(f"trailing bytes in checkpoint: {len(raw) - pos}")
    return metadata, arrays
