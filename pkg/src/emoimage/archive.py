"""``VGGW1`` tensor archives.

Layout, all integers little-endian ``uint32``::

    b"VGGW1"
    count
    count x record:
        name_length, name (utf-8)
        dtype code (uint8; 0 = float32)
        rank, rank x dim
        data (little-endian float32, C order)
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Mapping

import numpy as np

MAGIC = b"VGGW1"
DTYPE_F32 = 0


class ArchiveError(ValueError):
    pass


def write_archive(path, tensors: Mapping[str, np.ndarray]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(tensors)))
        for name, array in tensors.items():
            array = np.ascontiguousarray(array, dtype="<f4")
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<BI", DTYPE_F32, array.ndim))
            fh.write(struct.pack(f"<{array.ndim}I", *array.shape))
            fh.write(array.tobytes())
    return path


def read_archive(path) -> dict[str, np.ndarray]:
    buf = Path(path).read_bytes()
    if not buf.startswith(MAGIC):
        raise ArchiveError(f"{path}: not a VGGW1 archive")
    pos = len(MAGIC)

    def take(fmt):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(buf):
            raise ArchiveError(f"{path}: truncated archive")
        values = struct.unpack_from(fmt, buf, pos)
        pos += size
        return values

    (count,) = take("<I")
    tensors = {}
    for _ in range(count):
        (name_length,) = take("<I")
        name = buf[pos : pos + name_length].decode("utf-8")
        pos += name_length
        dtype, rank = take("<BI")
        if dtype != DTYPE_F32:
            raise ArchiveError(f"{path}: tensor {name} has unsupported dtype code {dtype}")
        shape = take(f"<{rank}I")
        nbytes = 4 * int(np.prod(shape, dtype=np.int64))
        if pos + nbytes > len(buf):
            raise ArchiveError(f"{path}: truncated data for tensor {name}")
        tensors[name] = np.frombuffer(buf, dtype="<f4", count=nbytes // 4, offset=pos).reshape(shape).copy()
        pos += nbytes
    return tensors


def write_metadata(path, meta: Mapping[str, object]) -> Path:
    path = Path(path)
    path.write_text("".join(f"{key}={value}\n" for key, value in meta.items()))
    return path


def read_metadata(path) -> dict[str, str]:
    out = {}
    for line in Path(path).read_text().splitlines():
        if line.strip():
            key, _, value = line.partition("=")
            out[key] = value
    return out
