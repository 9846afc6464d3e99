"""Shared fixtures: a 16-tile block-aligned training set."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

TILE = 112            # 8 x 8 grid of 14-px patches
STRIDE = 14
CLASS_TABLE = {0: "SOIL", 1: "ZEAMX", 2: "ABUTH"}
CLASS_COLORS = {0: (105, 80, 60), 1: (60, 180, 70), 2: (200, 180, 60)}


def save_png(arr: np.ndarray, path: Path) -> bytes:
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(arr.astype(np.uint8)).save(path, format="PNG", compress_level=1)
    return path.read_bytes()


@pytest.fixture(scope="session")
def tile_set(tmp_path_factory):
    """16 synthetic tiles with patch-aligned species and damage masks."""
    root = tmp_path_factory.mktemp("bridge_tiles")
    rng = np.random.default_rng(7)
    grid = TILE // STRIDE
    manifest_lines = []
    for i in range(16):
        patch_classes = rng.integers(0, 3, (grid, grid))
        species = np.repeat(np.repeat(patch_classes, STRIDE, 0), STRIDE, 1)
        image = np.zeros((TILE, TILE, 3), dtype=np.uint8)
        for cls, color in CLASS_COLORS.items():
            image[species == cls] = color
        damage = np.where(species == 2, 1, 0)    # one synthetic damage type

        name = f"tile_{i:03d}.png"
        data = save_png(image, root / "images" / name)
        save_png(species, root / "masks_species" / name)
        save_png(damage, root / "masks_damage" / name)
        manifest_lines.append(json.dumps({
            "id": f"images/{name}",
            "path": f"images/{name}",
            "sha256": hashlib.sha256(data).hexdigest(),
            "width": TILE, "height": TILE,
            "collection": "TOY", "split": "train", "status": "kept",
        }))
    (root / "manifest.jsonl").write_text("\n".join(manifest_lines) + "\n",
                                         encoding="utf-8")
    (root / "classes.json").write_text(
        json.dumps({str(k): v for k, v in CLASS_TABLE.items()}) + "\n",
        encoding="utf-8")
    return root
