"""Binary scene files.

Layout (little-endian)::

    b"SFPC"  u32 version=1  u32 N  u32 M  u32 flags
    f32 P[N*3]  f32 Q[M*3]  [f32 flow[N*3] if flags & 1]  [u8 occluded[N] if flags & 2]
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .synthetic import Scene

MAGIC = b"SFPC"
VERSION = 1
HAS_FLOW = 1
HAS_OCC = 2
_HEADER = struct.Struct("<4sIIII")


class FormatError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


def encode_scene(scene: Scene) -> bytes:
    flags = (HAS_FLOW if scene.flow is not None else 0) | (HAS_OCC if scene.occluded is not None else 0)
    parts = [
        _HEADER.pack(MAGIC, VERSION, len(scene.p), len(scene.q), flags),
        scene.p.astype("<f4").tobytes(),
        scene.q.astype("<f4").tobytes(),
    ]
    if scene.flow is not None:
        parts.append(scene.flow.astype("<f4").tobytes())
    if scene.occluded is not None:
        parts.append(scene.occluded.astype(np.uint8).tobytes())
    return b"".join(parts)


def decode_scene(buf: bytes) -> Scene:
    if len(buf) < _HEADER.size:
        raise FormatError("truncated header", len(buf))
    magic, version, n, m, flags = _HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}", 0)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", 4)
    if flags & ~(HAS_FLOW | HAS_OCC):
        raise FormatError(f"unknown flag bits {flags:#x}", 16)
    offset = _HEADER.size

    def take(count: int, dtype: str) -> np.ndarray:
        nonlocal offset
        nbytes = count * np.dtype(dtype).itemsize
        if offset + nbytes > len(buf):
            raise FormatError(f"truncated: need {nbytes} bytes, {len(buf) - offset} left", offset)
        arr = np.frombuffer(buf, dtype=dtype, count=count, offset=offset)
        offset += nbytes
        return arr

    p = take(n * 3, "<f4").reshape(n, 3)
    q = take(m * 3, "<f4").reshape(m, 3)
    flow = take(n * 3, "<f4").reshape(n, 3) if flags & HAS_FLOW else None
    occ = None
    if flags & HAS_OCC:
        raw = take(n, "u1")
        if raw.max(initial=0) > 1:
            raise FormatError("occlusion bytes must be 0 or 1", offset - n)
        occ = raw.astype(bool)
    if offset != len(buf):
        raise FormatError(f"{len(buf) - offset} trailing bytes", offset)
    return Scene(p.astype(np.float32), q.astype(np.float32), None if flow is None else flow.astype(np.float32), occ)


def write_scene(path: str | Path, scene: Scene) -> Path:
    path = Path(path)
    path.write_bytes(encode_scene(scene))
    return path


def read_scene(path: str | Path) -> Scene:
    return decode_scene(Path(path).read_bytes())


def list_scenes(directory: str | Path) -> list[Path]:
    return sorted(Path(directory).glob("*.sfpc"))
