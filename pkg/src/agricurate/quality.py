"""Curation filters: blur, darkness, exact-duplicate and near-duplicate rejection.

All three quality metrics are declared stand-ins with tunable thresholds, since
the curation criteria are qualitative:

* blur      -- variance of the 3x3 Laplacian of the Rec.601 grayscale image
               (lower = blurrier),
* darkness  -- mean Rec.601 luma,
* near-dup  -- 64-bit DCT perceptual hash compared by Hamming distance.
"""

from __future__ import annotations

import hashlib
import io
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import scipy.fft
from PIL import Image

from .errors import ConfigError, DomainError
from .imgio import rec601_luma
from .manifest import DatasetManifest
from .utils import pmap


@dataclass(frozen=True)
class QualityConfig:
    blur_threshold: float = 100.0   # Laplacian-variance units
    dark_threshold: float = 30.0    # mean luma, [0, 255]
    phash_distance: int = 10        # Hamming bits, [0, 64]

    def validate(self) -> None:
        if self.blur_threshold < 0 or self.dark_threshold < 0:
            raise ConfigError("thresholds must be >= 0")
        if not 0 <= self.phash_distance <= 64:
            raise ConfigError("phash_distance must be in [0, 64]")


def blur_score(image: np.ndarray) -> float:
    """Sharpness score: population variance of the 3x3 Laplacian response.

    The kernel is [[0,1,0],[1,-4,1],[0,1,0]] applied to interior pixels of the
    Rec.601 grayscale image.  Constant images score 0; sharp texture scores
    high.
    """
    if image.shape[0] < 3 or image.shape[1] < 3:
        raise DomainError("blur_score needs an image of at least 3x3 pixels")
    g = rec601_luma(image) if image.ndim == 3 else image.astype(np.float64)
    lap = (g[:-2, 1:-1] + g[2:, 1:-1] + g[1:-1, :-2] + g[1:-1, 2:]
           - 4.0 * g[1:-1, 1:-1])
    return float(lap.var())


def mean_luma(image: np.ndarray) -> float:
    """Mean Rec.601 luma in [0, 255]."""
    if image.size == 0:
        raise DomainError("mean_luma needs a nonempty image")
    g = rec601_luma(image) if image.ndim == 3 else image.astype(np.float64)
    return float(g.mean())


# ---------------------------------------------------------------------------
# Perceptual hash.
#
# The 32x32 downsample is an exact area average computed in integer
# arithmetic (luma scaled by 1000, overlap weights scaled by 32) so that
# upscaling an image by an integer factor reproduces bit-identical hashes.
# ---------------------------------------------------------------------------

_DCT_SIZE = 32
# standard pHash slot layout: the 8x8 low-frequency block minus the DC term,
# plus (8, 0) to fill 64 slots; row-major, most significant bit first
_PHASH_COEFFS = [(u, v) for u in range(8) for v in range(8) if (u, v) != (0, 0)]
_PHASH_COEFFS.append((8, 0))


def _overlap_weights(n_src: int, n_dst: int) -> np.ndarray:
    """Integer area-overlap weights, shape (n_dst, n_src), rows summing to n_src.

    Working in coordinates scaled by n_dst, target cell j spans
    [j*n_src, (j+1)*n_src) and source pixel c spans [c*n_dst, (c+1)*n_dst).
    """
    w = np.zeros((n_dst, n_src), dtype=np.int64)
    for j in range(n_dst):
        lo, hi = j * n_src, (j + 1) * n_src
        for c in range(lo // n_dst, (hi - 1) // n_dst + 1):
            w[j, c] = min(hi, (c + 1) * n_dst) - max(lo, c * n_dst)
    return w


def _area_resized_luma(image: np.ndarray, size: int = _DCT_SIZE) -> np.ndarray:
    arr = image.astype(np.int64)
    if arr.ndim == 3:
        luma = 299 * arr[..., 0] + 587 * arr[..., 1] + 114 * arr[..., 2]
    else:
        luma = 1000 * arr
    h, w = luma.shape
    acc = _overlap_weights(h, size) @ luma @ _overlap_weights(w, size).T
    return acc / float(h * w * 1000)


def phash64(image: np.ndarray) -> int:
    """64-bit DCT perceptual hash of an image.

    Grayscale is area-averaged to 32x32, transformed by a 2-D type-II DCT, and
    each retained coefficient is compared against the median of the 64.
    """
    if image.size == 0:
        raise DomainError("phash64 needs a nonempty image")
    block = scipy.fft.dctn(_area_resized_luma(image), type=2)
    vals = np.array([block[u, v] for u, v in _PHASH_COEFFS])
    median = np.median(vals)
    h = 0
    for v in vals:
        h = (h << 1) | int(v > median)
    return h


def hamming64(a: int, b: int) -> int:
    return (a ^ b).bit_count()


# ---------------------------------------------------------------------------
# Corpus curation.
# ---------------------------------------------------------------------------


@dataclass
class _Score:
    id: str
    ok: bool
    sha256: str = ""
    width: int = 0
    height: int = 0
    blur_var: float = 0.0
    mean_luma: float = 0.0
    phash: int = 0


def _score_file(item: tuple[str, str]) -> _Score:
    """Per-image scoring: digest, dimensions, blur, luma, phash."""
    rid, path = item
    try:
        data = Path(path).read_bytes()
        with Image.open(io.BytesIO(data)) as im:
            rgb = np.asarray(im.convert("RGB"), dtype=np.uint8)
    except Exception:
        return _Score(id=rid, ok=False)
    h, w = rgb.shape[:2]
    blur = blur_score(rgb) if h >= 3 and w >= 3 else 0.0
    return _Score(
        id=rid,
        ok=True,
        sha256=hashlib.sha256(data).hexdigest(),
        width=w,
        height=h,
        blur_var=round(blur, 4),
        mean_luma=round(mean_luma(rgb), 4),
        phash=phash64(rgb),
    )


def resolve_path(root, rel: str) -> str:
    p = Path(rel)
    return str(p if p.is_absolute() else Path(root) / p)


def curate(manifest: DatasetManifest, images_root, config: QualityConfig = QualityConfig(),
           workers: int = 1) -> DatasetManifest:
    """Assign curation statuses to every record of a manifest.

    Statuses are applied in fixed precedence: duplicate (identical sha256;
    the lexicographically smallest path stays kept), then near_duplicate
    (pHash within config.phash_distance of any record still kept, scanned in
    lexicographic path order), then dark, then blurry.  Unreadable or
    undecodable files are flagged decode_failed, never raised.  Scoring is a
    parallel map; resolution is a sequential reduce over path-sorted records,
    so the result is independent of worker count.
    """
    config.validate()
    items = [(rec.id, resolve_path(images_root, rec.path)) for rec in manifest]
    scores = {s.id: s for s in pmap(_score_file, items, workers)}

    out = []
    for rec in manifest:
        s = scores[rec.id]
        if not s.ok:
            out.append(replace(rec, status="decode_failed"))
            continue
        out.append(replace(
            rec,
            status="kept",
            sha256=s.sha256,
            width=s.width,
            height=s.height,
            blur_var=s.blur_var,
            mean_luma=s.mean_luma,
            phash=f"{s.phash:016x}",
        ))

    live = sorted((r for r in out if r.status == "kept"), key=lambda r: r.path)

    by_digest: dict[str, list] = {}
    for rec in live:
        by_digest.setdefault(rec.sha256, []).append(rec)
    for group in by_digest.values():
        for rec in group[1:]:
            rec.status = "duplicate"

    accepted = np.empty(len(live), dtype=np.uint64)
    n_acc = 0
    limit = config.phash_distance
    for rec in live:
        if rec.status != "kept":
            continue
        h = np.uint64(int(rec.phash, 16))
        if n_acc:
            dist = int(np.bitwise_count(np.bitwise_xor(accepted[:n_acc], h)).min())
            if dist <= limit:
                rec.status = "near_duplicate"
                continue
        accepted[n_acc] = h
        n_acc += 1

    # darkness is resolved before blur: a near-black frame carries no signal
    # for the Laplacian, so calling it "blurry" would be meaningless
    for rec in live:
        if rec.status != "kept":
            continue
        if rec.mean_luma < config.dark_threshold:
            rec.status = "dark"
        elif rec.blur_var < config.blur_threshold:
            rec.status = "blurry"

    return DatasetManifest(out)
