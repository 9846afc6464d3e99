"""Small image IO helpers shared by the pipeline stages."""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np
from PIL import Image

# zlib level pinned so repeated runs emit byte-identical PNGs
PNG_COMPRESS_LEVEL = 1


def load_rgb(path) -> np.ndarray:
    """Decode an image file to an HxWx3 uint8 array."""
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def load_gray8(path) -> np.ndarray:
    """Decode a single-channel 8-bit raster (label or binary mask) to HxW uint8.

    Palette images are read as raw palette indices, which is how class masks
    are usually shipped.
    """
    with Image.open(path) as im:
        if im.mode in ("L", "P"):
            return np.asarray(im, dtype=np.uint8)
        return np.asarray(im.convert("L"), dtype=np.uint8)


def png_bytes(arr: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(arr).save(buf, format="PNG", compress_level=PNG_COMPRESS_LEVEL)
    return buf.getvalue()


def save_png(arr: np.ndarray, path) -> bytes:
    """Write a lossless PNG, returning the encoded bytes (handy for hashing)."""
    data = png_bytes(arr)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(data)
    return data


def rec601_luma(rgb: np.ndarray) -> np.ndarray:
    """Rec.601 luma (0.299 R + 0.587 G + 0.114 B) in [0, 255] as float64."""
    rgb = rgb.astype(np.float64)
    return 0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]
