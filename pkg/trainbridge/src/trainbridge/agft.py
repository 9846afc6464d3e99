"""Writer for the .agft feature-tensor interchange format.

Byte layout, little-endian: magic "AGFT"; u8 version = 1; u8 dtype = 1
(32-bit float); u16 reserved = 0; u32 grid_h; u32 grid_w; u32 dim; then
grid_h * grid_w * dim floats row-major (row, col, channel).
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"AGFT"
HEADER = struct.Struct("<4sBBHIII")


def write_agft(path, values: np.ndarray) -> None:
    arr = np.ascontiguousarray(values, dtype="<f4")
    if arr.ndim != 3:
        raise ValueError("agft values must be (grid_h, grid_w, dim)")
    gh, gw, dim = arr.shape
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as fh:
        fh.write(HEADER.pack(MAGIC, 1, 1, 0, gh, gw, dim))
        fh.write(arr.tobytes())


def read_agft(path) -> np.ndarray:
    """Own-side reader, used for sanity checks; the pipeline has the canonical one."""
    data = Path(path).read_bytes()
    magic, version, dtype, reserved, gh, gw, dim = HEADER.unpack_from(data)
    if magic != MAGIC or version != 1 or dtype != 1 or reserved != 0:
        raise ValueError(f"{path}: bad agft header")
    if len(data) != HEADER.size + gh * gw * dim * 4:
        raise ValueError(f"{path}: truncated agft payload")
    return np.frombuffer(data, dtype="<f4", offset=HEADER.size).reshape(gh, gw, dim).copy()
