"""Raw little-endian float32 tensors with a ``key: value`` text sidecar.

``name.f32`` holds the bytes, ``name.txt`` holds at least ``shape``.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np


def _paths(stem) -> tuple[Path, Path]:
    stem = Path(stem)
    if stem.suffix in (".f32", ".txt"):
        stem = stem.with_suffix("")
    return stem.with_suffix(".f32"), stem.with_suffix(".txt")


def save_tensor(stem, array, **meta) -> Path:
    data_path, header_path = _paths(stem)
    array = np.ascontiguousarray(array, dtype="<f4")
    data_path.parent.mkdir(parents=True, exist_ok=True)
    data_path.write_bytes(array.tobytes())
    lines = [f"shape: {' '.join(str(d) for d in array.shape)}"]
    lines += [f"{key}: {value}" for key, value in meta.items()]
    header_path.write_text("\n".join(lines) + "\n")
    return data_path


def read_header(stem) -> dict[str, str]:
    _, header_path = _paths(stem)
    header = {}
    for line in header_path.read_text().splitlines():
        if not line.strip():
            continue
        key, _, value = line.partition(":")
        header[key.strip()] = value.strip()
    return header


def load_tensor(stem) -> tuple[np.ndarray, dict[str, str]]:
    data_path, _ = _paths(stem)
    header = read_header(stem)
    shape = tuple(int(d) for d in header["shape"].split())
    data = np.frombuffer(data_path.read_bytes(), dtype="<f4")
    if data.size != int(np.prod(shape)):
        raise ValueError(f"{data_path}: {data.size} values do not match shape {shape}")
    return data.reshape(shape).copy(), header
