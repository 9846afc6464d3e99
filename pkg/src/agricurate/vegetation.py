"""Per-tile vegetation coverage and interval-balanced sampling.

Coverage comes either from external masks or from an ExG + Otsu stand-in
segmenter (the production vegetation model is external to this pipeline).
Tiles are binned by coverage into a dedicated zero bin plus left-open
right-closed intervals, and an equal quota is sampled from every bin.
"""

from __future__ import annotations

import random
from bisect import bisect_left
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, DomainError
from .imgio import load_gray8, load_rgb
from .manifest import DatasetManifest
from .quality import resolve_path
from .utils import pmap

DEFAULT_BIN_EDGES = tuple(i / 10 for i in range(11))


@dataclass(frozen=True)
class VegetationConfig:
    source: str = "exg_otsu"            # or "external_mask"
    bin_edges: tuple = DEFAULT_BIN_EDGES
    target_total: int = 1
    seed: int = 0

    def validate(self) -> None:
        if self.source not in ("exg_otsu", "external_mask"):
            raise ConfigError(f"unknown coverage source {self.source!r}")
        edges = self.bin_edges
        if len(edges) < 2 or edges[0] != 0.0 or edges[-1] != 1.0:
            raise ConfigError("bin edges must start at 0.0 and end at 1.0")
        if any(b <= a for a, b in zip(edges, edges[1:])):
            raise ConfigError("bin edges must be strictly increasing")
        if self.target_total < 1:
            raise ConfigError("target_total must be >= 1")


def otsu_threshold(hist: np.ndarray) -> int:
    """Otsu threshold of a 256-bin histogram (split at level <= t vs > t).

    Maximizes the between-class variance w0*w1*(mu0-mu1)^2; ties resolve to
    the smallest threshold.
    """
    hist = np.asarray(hist, dtype=np.float64)
    if hist.shape != (256,):
        raise DomainError("otsu_threshold expects a 256-bin histogram")
    total = hist.sum()
    if total == 0:
        raise DomainError("empty histogram")
    levels = np.arange(256, dtype=np.float64)
    w0 = np.cumsum(hist) / total
    mu0_mass = np.cumsum(hist * levels) / total
    mu_total = mu0_mass[-1]
    w1 = 1.0 - w0
    valid = (w0 > 0) & (w1 > 0)
    sigma_b = np.zeros(256)
    sigma_b[valid] = (mu_total * w0[valid] - mu0_mass[valid]) ** 2 / (w0[valid] * w1[valid])
    return int(np.argmax(sigma_b))


def exg_levels(tile: np.ndarray) -> np.ndarray:
    """Excess-green index per pixel, linearly quantized to 256 levels over [-1, 2].

    ExG = 2g - r - b on chromaticity-normalized channels; a zero-sum pixel
    gets ExG = 0.
    """
    if tile.size == 0:
        raise DomainError("exg_levels needs a nonempty tile")
    rgb = tile.astype(np.float64)
    total = rgb.sum(axis=-1)
    exg = np.zeros(total.shape)
    nz = total > 0
    exg[nz] = (3.0 * rgb[..., 1][nz] - total[nz]) / total[nz]
    levels = np.floor((exg + 1.0) * (256.0 / 3.0))
    return np.clip(levels, 0, 255).astype(np.uint8)


def exg_mask(tile: np.ndarray) -> np.ndarray:
    """Binary vegetation mask: quantized ExG above the Otsu threshold."""
    levels = exg_levels(tile)
    t = otsu_threshold(np.bincount(levels.reshape(-1), minlength=256))
    return levels > t


def coverage(mask: np.ndarray) -> float:
    """Fraction of vegetation pixels in a binary mask."""
    if mask.size == 0:
        raise DomainError("coverage needs a nonempty mask")
    return float(np.count_nonzero(mask) / mask.size)


def _cover_one(args) -> tuple[str, float]:
    rid, tile_path, mask_path = args
    if mask_path is None:
        cov = coverage(exg_mask(load_rgb(tile_path)))
    else:
        tile = load_rgb(tile_path)
        mask = load_gray8(mask_path)
        if mask.shape != tile.shape[:2]:
            raise DomainError(f"{rid}: mask dimensions {mask.shape} != tile {tile.shape[:2]}")
        cov = coverage(mask)
    return rid, round(cov, 6)


def compute_coverage(tiles: DatasetManifest, tiles_root, config: VegetationConfig,
                     mask_dir=None, workers: int = 1) -> tuple[DatasetManifest, dict]:
    """Fill veg_coverage on every kept tile; returns (manifest, histogram report)."""
    config.validate()
    if config.source == "external_mask" and mask_dir is None:
        raise ConfigError("external_mask coverage needs a mask directory")
    jobs = []
    for rec in tiles.kept():
        tile_path = resolve_path(tiles_root, rec.path)
        mask_path = None
        if config.source == "external_mask":
            mask_path = resolve_path(mask_dir, rec.id)
        jobs.append((rec.id, tile_path, mask_path))
    covs = dict(pmap(_cover_one, jobs, workers))

    out = [replace(rec, veg_coverage=covs[rec.id]) if rec.id in covs else replace(rec)
           for rec in tiles]
    manifest = DatasetManifest(out)
    hist = [0] * bin_count(config.bin_edges)
    for rec in manifest.kept():
        hist[assign_bin(rec.veg_coverage, config.bin_edges)] += 1
    report = {
        "tiles": len(covs),
        "source": config.source,
        "histogram": hist,
    }
    return manifest, report


def bin_count(edges) -> int:
    # the zero bin plus one interval per consecutive edge pair
    return len(edges)


def assign_bin(value: float, edges) -> int:
    """Bin index of a coverage value: bin 0 is exactly zero, bin i is
    (edges[i-1], edges[i]]."""
    if not 0.0 <= value <= 1.0:
        raise DomainError(f"coverage {value} outside [0, 1]")
    if value == 0.0:
        return 0
    return bisect_left(edges, value)


def balance(tiles: DatasetManifest, config: VegetationConfig) -> tuple[DatasetManifest, dict]:
    """Select an equal per-bin quota of tiles, capped by bin availability.

    Quota is floor(target_total / bin_count); each bin contributes
    min(quota, bin size) tiles drawn by a seeded per-bin shuffle, so the
    per-bin counts depend only on sizes while membership depends on the seed.
    Selected tiles are marked in the returned manifest.
    """
    config.validate()
    kept = tiles.kept()
    if not kept:
        raise DomainError("no kept tiles to balance")
    missing = [r.id for r in kept if r.veg_coverage is None]
    if missing:
        raise DomainError(f"{len(missing)} kept tiles have no veg_coverage "
                          f"(first: {missing[0]})")

    edges = config.bin_edges
    n_bins = bin_count(edges)
    quota = config.target_total // n_bins
    bins: dict[int, list[str]] = {b: [] for b in range(n_bins)}
    for rec in kept:
        bins[assign_bin(rec.veg_coverage, edges)].append(rec.id)

    selected: set[str] = set()
    rows = []
    for b in range(n_bins):
        ids = sorted(bins[b])
        rng = random.Random(f"{config.seed}:{b}")
        rng.shuffle(ids)
        take = min(quota, len(ids))
        selected.update(ids[:take])
        lo = 0.0 if b == 0 else edges[b - 1]
        hi = 0.0 if b == 0 else edges[b]
        rows.append({"bin": b, "lo": lo, "hi": hi,
                     "available": len(ids), "selected": take})

    out = [replace(rec, selected=True if rec.id in selected else None)
           for rec in tiles]
    report = {
        "target_total": config.target_total,
        "bin_count": n_bins,
        "quota": quota,
        "seed": config.seed,
        "total_selected": len(selected),
        "bins": rows,
    }
    return DatasetManifest(out), report
