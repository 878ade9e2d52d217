"""Checkpoint container: one JSON header line, then raw little-endian
float64 parameter data concatenated in header order.

The header records the format version, dtype, and every parameter's name and
shape, so a checkpoint can be inspected with `head -1` and loaded without
knowing the model class.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1
DTYPE = "<f8"


def save_checkpoint(path, named_arrays: dict[str, np.ndarray],
                    meta: dict | None = None) -> None:
    header = {
        "version": FORMAT_VERSION,
        "dtype": DTYPE,
        "params": [{"name": k, "shape": list(v.shape)} for k, v in named_arrays.items()],
    }
    if meta:
        header["meta"] = meta
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(json.dumps(header).encode("utf-8"))
        f.write(b"\n")
        for v in named_arrays.values():
            f.write(np.ascontiguousarray(v, dtype=DTYPE).tobytes())


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    """Returns (name -> array, meta). Raises ValueError on framing errors."""
    with open(path, "rb") as f:
        header_line = f.readline()
        try:
            header = json.loads(header_line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as err:
            raise ValueError(f"{path}: corrupt checkpoint header") from err
        if header.get("version") != FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {header.get('version')}")
        if header.get("dtype") != DTYPE:
            raise ValueError(f"{path}: unsupported dtype {header.get('dtype')}")
        blob = f.read()
    arrays: dict[str, np.ndarray] = {}
    offset = 0
    itemsize = np.dtype(DTYPE).itemsize
    for entry in header["params"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * itemsize
        if offset + nbytes > len(blob):
            raise ValueError(f"{path}: truncated checkpoint at parameter {entry['name']!r}")
        arr = np.frombuffer(blob[offset:offset + nbytes], dtype=DTYPE).reshape(shape)
        arrays[entry["name"]] = arr.astype(np.float64)
        offset += nbytes
    if offset != len(blob):
        raise ValueError(f"{path}: {len(blob) - offset} trailing bytes after parameters")
    return arrays, header.get("meta", {})
