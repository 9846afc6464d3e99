"""Deterministic synthetic trial-imagery corpus for tests and demos.

Builds a 50-image corpus with known curation outcomes: 35 distinct textured
images that survive every filter, 5 byte-identical duplicates, 5 heavily
blurred images, and 5 underexposed images.  Kept images come with species
label masks and perturbed prediction masks so the full pipeline can run end
to end.  Everything derives from one seed, so repeated builds are
pixel-identical.
"""

from __future__ import annotations

import hashlib
import json
import shutil
from pathlib import Path

import numpy as np
from scipy.ndimage import uniform_filter

from .imgio import save_png
from .manifest import DatasetManifest, ImageRecord

DEFAULT_SEED = 20190417
CLASS_TABLE = {0: "SOIL", 1: "ZEAMX", 2: "ABUTH", 3: "CHEAL"}

# pinned parameters of the reference pipeline run; the golden reports under
# tests/golden/ correspond to exactly these
PIPELINE_SEED = 11
PIPELINE_BALANCE_TARGET = 44
PIPELINE_SUBSET_COUNTS = (5, 10, 15)

_N_KEPT = 35
_N_DUP = 5
_N_BLUR = 5
_N_DARK = 5


def _image_shape(i: int) -> tuple[int, int]:
    if i % 7 == 0:
        return 600, 1036      # one tile row
    if i % 5 == 3:
        return 1100, 1600     # remainders on both axes
    return 1036, 1036


def _gradient(h: int, w: int, rng) -> np.ndarray:
    xs = np.linspace(0.0, 1.0, w)[None, :, None]
    ys = np.linspace(0.0, 1.0, h)[:, None, None]
    lo = rng.integers(60, 90, 3).astype(np.float64)
    hi = rng.integers(120, 160, 3).astype(np.float64)
    return lo + (hi - lo) * (0.6 * xs + 0.4 * ys)


def _blocks(h: int, w: int, rng, amp: int) -> np.ndarray:
    # coarse 8x8 pattern: distinctive low-frequency content per image
    coarse = rng.integers(-amp, amp + 1, (8, 8, 3)).astype(np.float64)
    reps_y, reps_x = -(-h // 8), -(-w // 8)
    block = np.repeat(np.repeat(coarse, reps_y, axis=0), reps_x, axis=1)
    return block[:h, :w]


def _disk_coords(h: int, w: int, cx: int, cy: int, r: int) -> np.ndarray:
    yy, xx = np.ogrid[:h, :w]
    return (xx - cx) ** 2 + (yy - cy) ** 2 <= r * r


def _kept_image(i: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """A textured bright image and its species label mask."""
    rng = np.random.default_rng([seed, i])
    h, w = _image_shape(i)
    img = _gradient(h, w, rng) + _blocks(h, w, rng, 35)
    img += rng.integers(-22, 23, (h, w, 1)).astype(np.float64)
    mask = np.zeros((h, w), dtype=np.uint8)

    for _ in range(int(rng.integers(3, 9))):
        cx = int(rng.integers(0, w))
        cy = int(rng.integers(0, h))
        r = int(rng.integers(35, 130))
        cls = int(rng.integers(1, 4))
        disk = _disk_coords(h, w, cx, cy, r)
        green = np.array([rng.integers(40, 90), rng.integers(130, 220),
                          rng.integers(30, 80)], dtype=np.float64)
        img[disk] = green + rng.normal(0, 8, (int(disk.sum()), 3))
        mask[disk] = cls
    for _ in range(2):
        # blobs below the default min_area, to exercise the size filter
        cx = int(rng.integers(0, w))
        cy = int(rng.integers(0, h))
        disk = _disk_coords(h, w, cx, cy, int(rng.integers(2, 4)))
        mask[disk] = int(rng.integers(1, 4))

    return np.clip(img, 0, 255).astype(np.uint8), mask


def _blurry_image(j: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng([seed, 200 + j])
    h, w = 1036, 1036
    img = 120.0 + _blocks(h, w, rng, 60)
    for _ in range(3):
        img = uniform_filter(img, size=(21, 21, 1), mode="nearest")
    return np.clip(img, 0, 255).astype(np.uint8)


def _dark_image(j: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng([seed, 100 + j])
    h, w = 1036, 1036
    img = 10.0 + _blocks(h, w, rng, 6)
    img += rng.integers(-10, 11, (h, w, 1)).astype(np.float64)
    return np.clip(img, 0, 255).astype(np.uint8)


def _prediction(mask: np.ndarray, seed_item: int, seed: int) -> np.ndarray:
    # plausible decoder output: the ground truth shifted a few pixels
    rng = np.random.default_rng([seed, 300 + seed_item])
    dy, dx = int(rng.integers(1, 4)), int(rng.integers(1, 4))
    return np.roll(mask, (dy, dx), axis=(0, 1))


def build_corpus(root, seed: int = DEFAULT_SEED) -> dict:
    """Materialize the corpus under `root`; returns the layout paths."""
    root = Path(root)
    images = root / "images"
    masks = root / "masks"
    preds = root / "preds"
    for d in (images, masks, preds):
        d.mkdir(parents=True, exist_ok=True)

    for i in range(_N_KEPT):
        img, mask = _kept_image(i, seed)
        name = f"img_{i:03d}.png"
        save_png(img, images / name)
        pred = _prediction(mask, i, seed)
        mask = mask.copy()
        mask[:4, :] = 255          # ignore strip: skipped by evaluation
        save_png(mask, masks / name)
        save_png(pred, preds / name)

    for j in range(_N_DUP):
        shutil.copyfile(images / f"img_{j:03d}.png",
                        images / f"img_{j:03d}_copy.png")
    for j in range(_N_BLUR):
        save_png(_blurry_image(j, seed), images / f"blur_{j:03d}.png")
    for j in range(_N_DARK):
        save_png(_dark_image(j, seed), images / f"dark_{j:03d}.png")

    classes_path = root / "classes.json"
    classes_path.write_text(
        json.dumps({str(k): v for k, v in CLASS_TABLE.items()}, indent=2) + "\n",
        encoding="utf-8")

    records = []
    for path in sorted(images.glob("*.png")):
        data = path.read_bytes()
        from PIL import Image

        with Image.open(path) as im:
            w, h = im.size
        stem = path.stem
        if stem.startswith("img_"):
            kept_index = int(stem[4:7])
            collection = "A1" if kept_index <= 16 else "A2"
        else:
            collection = "A1" if stem.startswith("blur") else "A2"
        rel = f"images/{path.name}"
        records.append(ImageRecord(
            id=rel, path=rel,
            sha256=hashlib.sha256(data).hexdigest(),
            width=w, height=h, collection=collection))
    manifest = DatasetManifest(records)
    manifest_path = root / "manifest.jsonl"
    manifest.save(manifest_path)

    return {
        "root": root,
        "images": images,
        "masks": masks,
        "preds": preds,
        "classes": classes_path,
        "manifest": manifest_path,
    }


def pipeline_commands(corpus: dict, workdir, workers: int = 1) -> list[list[str]]:
    """CLI argv for the reference curate -> ... -> eval run over the corpus."""
    workdir = Path(workdir)
    root = corpus["root"]
    base = ["--workdir", str(workdir), "--workers", str(workers),
            "--seed", str(PIPELINE_SEED)]
    return [
        base + ["curate",
                "--manifest", str(corpus["manifest"]),
                "--images", str(root)],
        base + ["tile",
                "--manifest", str(workdir / "manifest_curated.jsonl"),
                "--images", str(root), "--size", "518"],
        base + ["vegcover",
                "--tiles", str(workdir / "manifest_tiles.jsonl"),
                "--mode", "exg"],
        base + ["balance",
                "--tiles", str(workdir / "manifest_vegcover.jsonl"),
                "--target", str(PIPELINE_BALANCE_TARGET)],
        base + ["primitives",
                "--images", str(corpus["images"]),
                "--masks", str(corpus["masks"]),
                "--classes", str(corpus["classes"])],
        base + ["weights",
                "--masks", str(corpus["masks"]),
                "--classes", str(corpus["classes"]),
                "--beta", "0.99"],
        base + ["subsets",
                "--manifest", str(workdir / "manifest_curated.jsonl"),
                "--counts", ",".join(str(c) for c in PIPELINE_SUBSET_COUNTS)],
        base + ["eval",
                "--gt", str(corpus["masks"]),
                "--pred", str(corpus["preds"]),
                "--classes", str(corpus["classes"]),
                "--model-tag", "fixture", "--dataset-tag", "synthetic"],
    ]
