"""Non-overlapping fixed-size tiling of curated images.

Right/bottom remainder strips are discarded rather than padded, so each parent
contributes exactly floor(W/s) * floor(H/s) whole tiles.
"""

from __future__ import annotations

import hashlib
from pathlib import Path, PurePosixPath

import numpy as np

from .errors import DomainError
from .imgio import load_rgb, save_png
from .manifest import DatasetManifest, ImageRecord
from .quality import resolve_path
from .utils import pmap

DEFAULT_TILE_SIZE = 518


def tile_grid(width: int, height: int, size: int) -> list[tuple[int, int]]:
    """Row-major (x0, y0) offsets of all whole size x size tiles."""
    if size < 1:
        raise DomainError("tile size must be >= 1")
    return [(x * size, y * size)
            for y in range(height // size)
            for x in range(width // size)]


def extract_tiles(image: np.ndarray, offsets, size: int) -> list[np.ndarray]:
    """Pixel-exact copies of the tile windows at the given offsets."""
    h, w = image.shape[:2]
    tiles = []
    for x0, y0 in offsets:
        if x0 < 0 or y0 < 0 or x0 + size > w or y0 + size > h:
            raise DomainError(f"tile ({x0}, {y0}) size {size} exceeds {w}x{h} image")
        tiles.append(image[y0:y0 + size, x0:x0 + size].copy())
    return tiles


def tile_file_name(parent_id: str, x0: int, y0: int) -> str:
    return f"{parent_id}__{x0}_{y0}.png"


def _tile_one(args) -> list[dict]:
    """Tile a single parent image and write the tiles; returns record payloads."""
    parent_id, src_path, collection, size, out_dir, rel_root = args
    image = load_rgb(src_path)
    h, w = image.shape[:2]
    payloads = []
    for x0, y0 in tile_grid(w, h, size):
        tile = image[y0:y0 + size, x0:x0 + size]
        name = tile_file_name(parent_id, x0, y0)
        out_path = Path(out_dir) / name
        data = save_png(tile, out_path)
        rel = PurePosixPath(out_path.relative_to(rel_root).as_posix())
        payloads.append(dict(
            id=str(rel),
            path=str(rel),
            sha256=hashlib.sha256(data).hexdigest(),
            width=size,
            height=size,
            collection=collection,
            parent_id=parent_id,
            x0=x0,
            y0=y0,
            size=size,
        ))
    return payloads


def run_tiling(manifest: DatasetManifest, images_root, size: int, out_dir,
               manifest_root=None, workers: int = 1) -> tuple[DatasetManifest, dict]:
    """Tile every kept parent image into out_dir.

    Tile paths in the returned manifest are relative to manifest_root
    (defaults to out_dir's parent), so the tile manifest stays portable.
    Parents are processed in parallel; within a parent tiles are written in
    row-major order.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rel_root = Path(manifest_root) if manifest_root is not None else out_dir.parent

    parents = manifest.kept()
    jobs = [(rec.id, resolve_path(images_root, rec.path), rec.collection,
             size, str(out_dir), str(rel_root)) for rec in parents]
    records = [ImageRecord(**payload)
               for payloads in pmap(_tile_one, jobs, workers)
               for payload in payloads]
    tile_manifest = DatasetManifest(records)
    report = {
        "parents": len(parents),
        "size": size,
        "tiles": len(records),
    }
    return tile_manifest, report
