"""Single-plant crop ("primitive") extraction from class-label masks.

Blobs are maximal connected sets of equal-valued, non-ignore, non-background
pixels.  Labeling runs a union-find over per-row runs, which is fast on blobby
segmentation masks and independent of scan order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DomainError, IntegrityError
from .imgio import load_gray8, load_rgb, save_png

IGNORE_VALUE = 255
DEFAULT_MIN_AREA = 64
DEFAULT_PADDING = 8


@dataclass
class LabelMask:
    """Per-pixel class-indexed raster with its class table."""

    values: np.ndarray                  # HxW uint8
    class_table: dict[int, str]
    ignore_value: int = IGNORE_VALUE
    background_value: int = 0

    def validate(self) -> None:
        if self.values.ndim != 2:
            raise IntegrityError("label mask must be a 2-D raster")
        present = np.unique(self.values)
        unknown = [int(v) for v in present
                   if v != self.ignore_value and int(v) not in self.class_table]
        if unknown:
            raise IntegrityError(f"mask values {unknown} missing from class table")


def load_class_table(path) -> dict[int, str]:
    """Read a class table file: JSON object mapping index -> class name."""
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: class table must be a JSON object")
    return {int(k): str(v) for k, v in raw.items()}


def load_label_mask(path, class_table: dict[int, str]) -> LabelMask:
    mask = LabelMask(values=load_gray8(path), class_table=class_table)
    mask.validate()
    return mask


@dataclass
class Blob:
    value: int
    label: str
    area: int
    bbox: tuple[int, int, int, int]     # x0, y0, w, h


@dataclass
class Primitive:
    parent_id: str
    bbox: tuple[int, int, int, int]
    label: str
    area: int


def connected_components(mask: LabelMask, connectivity: int = 8) -> list[Blob]:
    """Blobs of equal-valued foreground pixels, sorted by (y0, x0, label)."""
    if connectivity not in (4, 8):
        raise DomainError("connectivity must be 4 or 8")
    values = mask.values
    h, w = values.shape

    parent: list[int] = []

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    def union(a: int, b: int) -> None:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)

    runs: list[tuple[int, int, int, int]] = []  # (row, x0, x1, value)
    prev: list[tuple[int, int, int, int]] = []  # (x0, x1, value, run index)
    for y in range(h):
        row = values[y]
        changes = np.flatnonzero(np.diff(row)) + 1
        starts = np.concatenate(([0], changes))
        ends = np.concatenate((changes, [w]))
        cur = []
        for x0, x1 in zip(starts.tolist(), ends.tolist()):
            val = int(row[x0])
            if val == mask.ignore_value or val == mask.background_value:
                continue
            ri = len(runs)
            runs.append((y, x0, x1, val))
            parent.append(ri)
            for px0, px1, pval, pri in prev:
                if pval != val:
                    continue
                if connectivity == 8:
                    touches = px0 <= x1 and x0 <= px1
                else:
                    touches = px0 < x1 and x0 < px1
                if touches:
                    union(ri, pri)
            cur.append((x0, x1, val, ri))
        prev = cur

    stats: dict[int, list[int]] = {}
    for ri, (y, x0, x1, val) in enumerate(runs):
        root = find(ri)
        st = stats.get(root)
        if st is None:
            stats[root] = [x0, x1, y, y, x1 - x0, val]
        else:
            st[0] = min(st[0], x0)
            st[1] = max(st[1], x1)
            st[3] = y   # rows are scanned top-down
            st[4] += x1 - x0

    blobs = [Blob(value=val,
                  label=mask.class_table[val],
                  area=area,
                  bbox=(minx, miny, maxx - minx, maxy - miny + 1))
             for minx, maxx, miny, maxy, area, val in stats.values()]
    blobs.sort(key=lambda b: (b.bbox[1], b.bbox[0], b.label))
    return blobs


def extract_primitives(image: np.ndarray, mask: LabelMask,
                       min_area: int = DEFAULT_MIN_AREA,
                       padding: int = DEFAULT_PADDING,
                       connectivity: int = 8,
                       parent_id: str = "") -> list[tuple[Primitive, np.ndarray]]:
    """One padded crop per blob with area >= min_area.

    The crop window is the blob bbox expanded by `padding` and clamped to the
    image bounds; overlapping crops are emitted independently.
    """
    h, w = image.shape[:2]
    if mask.values.shape != (h, w):
        raise DomainError(f"image {w}x{h} and mask "
                          f"{mask.values.shape[1]}x{mask.values.shape[0]} differ")
    out = []
    for blob in connected_components(mask, connectivity):
        if blob.area < min_area:
            continue
        x0, y0, bw, bh = blob.bbox
        ex0, ey0 = max(0, x0 - padding), max(0, y0 - padding)
        ex1, ey1 = min(w, x0 + bw + padding), min(h, y0 + bh + padding)
        crop = image[ey0:ey1, ex0:ex1].copy()
        out.append((Primitive(parent_id=parent_id, bbox=blob.bbox,
                              label=blob.label, area=blob.area), crop))
    return out


def primitive_file_name(parent_id: str, label: str, x0: int, y0: int) -> str:
    return f"{parent_id}__{label}__{x0}_{y0}.png"


def run_primitives(images_dir, masks_dir, class_table: dict[int, str], out_dir,
                   index_path, min_area: int = DEFAULT_MIN_AREA,
                   padding: int = DEFAULT_PADDING) -> dict:
    """Extract primitives for every mask in masks_dir; writes crops + JSONL index.

    Images are paired with masks by file stem.  The index line schema is
    {"file", "parent_id", "label", "x0", "y0", "w", "h", "area"}.
    """
    images_dir, masks_dir, out_dir = Path(images_dir), Path(masks_dir), Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    mask_paths = sorted(masks_dir.rglob("*.png"))
    if not mask_paths:
        raise ConfigError(f"no mask files under {masks_dir}")
    by_stem = {}
    for ext in ("*.png", "*.jpg", "*.jpeg"):
        for p in images_dir.rglob(ext):
            by_stem.setdefault(p.relative_to(images_dir).with_suffix("").as_posix(), p)

    index_lines = []
    n_blobs = 0
    for mask_path in mask_paths:
        stem = mask_path.relative_to(masks_dir).with_suffix("").as_posix()
        image_path = by_stem.get(stem)
        if image_path is None:
            raise ConfigError(f"mask {mask_path} has no matching image in {images_dir}")
        parent_id = image_path.relative_to(images_dir).as_posix()
        image = load_rgb(image_path)
        mask = load_label_mask(mask_path, class_table)
        seen: dict[str, int] = {}
        for prim, crop in extract_primitives(image, mask, min_area, padding,
                                             parent_id=parent_id):
            n_blobs += 1
            x0, y0, bw, bh = prim.bbox
            name = primitive_file_name(parent_id, prim.label, x0, y0)
            bump = seen.get(name)
            seen[name] = 0 if bump is None else bump + 1
            if bump is not None:
                name = name[:-4] + f"_{bump + 1}.png"
            save_png(crop, out_dir / name)
            index_lines.append(json.dumps({
                "file": name,
                "parent_id": parent_id,
                "label": prim.label,
                "x0": x0, "y0": y0, "w": bw, "h": bh,
                "area": prim.area,
            }))

    index_path = Path(index_path)
    index_path.parent.mkdir(parents=True, exist_ok=True)
    index_path.write_text("".join(line + "\n" for line in index_lines), encoding="utf-8")
    return {
        "masks": len(mask_paths),
        "primitives": n_blobs,
        "min_area": min_area,
        "padding": padding,
    }
