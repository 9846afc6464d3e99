"""Dataset manifest: record catalog, JSONL persistence, splits, size bookkeeping.

The manifest is the pipeline's single source of truth.  It is a line-delimited
UTF-8 JSON file, one record per line, with absent optional fields omitted
(never null).  Manifests are immutable values after load; every operation here
returns a new manifest.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Iterator, Optional, Sequence

from .errors import ConfigError, DomainError, IntegrityError, ParseError

SPLITS = ("train", "val", "test", "unassigned")
STATUSES = ("kept", "blurry", "dark", "duplicate", "near_duplicate", "decode_failed")

_REQUIRED = ("id", "path", "sha256", "width", "height", "collection")
_HEX = set("0123456789abcdef")


@dataclass
class ImageRecord:
    """One image, or one tile when parent_id is set.

    id is the path relative to the image root, normalized to forward slashes,
    which keeps it stable across machines.
    """

    id: str
    path: str
    sha256: str
    width: int
    height: int
    collection: str
    split: str = "unassigned"
    status: str = "kept"
    blur_var: Optional[float] = None
    mean_luma: Optional[float] = None
    phash: Optional[str] = None
    veg_coverage: Optional[float] = None
    parent_id: Optional[str] = None
    x0: Optional[int] = None
    y0: Optional[int] = None
    size: Optional[int] = None
    selected: Optional[bool] = None

    def validate(self) -> None:
        if not self.id:
            raise IntegrityError("record id must be non-empty")
        if len(self.sha256) != 64 or not set(self.sha256) <= _HEX:
            raise IntegrityError(f"{self.id}: sha256 must be 64 lowercase hex characters")
        if self.width < 1 or self.height < 1:
            raise IntegrityError(f"{self.id}: width and height must be >= 1")
        if self.split not in SPLITS:
            raise IntegrityError(f"{self.id}: unknown split {self.split!r}")
        if self.status not in STATUSES:
            raise IntegrityError(f"{self.id}: unknown status {self.status!r}")
        if self.veg_coverage is not None and not 0.0 <= self.veg_coverage <= 1.0:
            raise IntegrityError(f"{self.id}: veg_coverage outside [0, 1]")

    def to_json(self) -> str:
        payload = {f.name: getattr(self, f.name) for f in fields(self)
                   if getattr(self, f.name) is not None}
        return json.dumps(payload)

    @classmethod
    def from_dict(cls, payload: dict) -> "ImageRecord":
        if not isinstance(payload, dict):
            raise ParseError("record is not a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(payload) - known)
        if unknown:
            raise ParseError(f"unknown fields {unknown}")
        missing = sorted(set(_REQUIRED) - set(payload))
        if missing:
            raise ParseError(f"missing required fields {missing}")
        rec = cls(**payload)
        rec.validate()
        return rec


@dataclass
class DatasetManifest:
    records: list[ImageRecord] = field(default_factory=list)

    def __post_init__(self) -> None:
        seen = set()
        for rec in self.records:
            if rec.id in seen:
                raise IntegrityError(f"duplicate id {rec.id!r}")
            seen.add(rec.id)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[ImageRecord]:
        return iter(self.records)

    def kept(self) -> list[ImageRecord]:
        """Records eligible for downstream selection (status == kept)."""
        return [r for r in self.records if r.status == "kept"]

    def collections(self) -> dict[str, list[ImageRecord]]:
        out: dict[str, list[ImageRecord]] = {}
        for rec in self.kept():
            out.setdefault(rec.collection, []).append(rec)
        return out

    def save(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8") as fh:
            for rec in self.records:
                fh.write(rec.to_json())
                fh.write("\n")


def load_manifest(path) -> DatasetManifest:
    """Load a JSONL manifest, preserving file order.

    Malformed lines raise ParseError naming the line number; duplicate ids
    raise IntegrityError.
    """
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = ImageRecord.from_dict(json.loads(line))
            except (json.JSONDecodeError, ParseError, IntegrityError, TypeError) as exc:
                raise ParseError(f"{path}: line {lineno}: {exc}") from exc
            records.append(rec)
    return DatasetManifest(records)


def save_manifest(manifest: DatasetManifest, path) -> None:
    manifest.save(path)


@dataclass(frozen=True)
class SplitRule:
    collection: str
    train: float
    val: float
    test: float

    def validate(self) -> None:
        for frac in (self.train, self.val, self.test):
            if not 0.0 <= frac <= 1.0:
                raise ConfigError(f"{self.collection}: split fractions must be in [0, 1]")
        if abs(self.train + self.val + self.test - 1.0) > 1e-9:
            raise ConfigError(f"{self.collection}: split fractions must sum to 1")


@dataclass(frozen=True)
class SplitSpec:
    rules: tuple[SplitRule, ...]
    seed: int = 0

    def validate(self) -> None:
        seen = set()
        for rule in self.rules:
            rule.validate()
            if rule.collection in seen:
                raise ConfigError(f"more than one rule for collection {rule.collection!r}")
            seen.add(rule.collection)


def _round_half_up(x: float) -> int:
    return math.floor(x + 0.5)


def assign_splits(manifest: DatasetManifest, spec: SplitSpec) -> DatasetManifest:
    """Deterministically partition kept records into train/val/test per collection.

    Val and test counts are round-half-up(fraction * N); train takes the
    remainder.  Records are shuffled by a seeded permutation of their sorted
    ids, so the assignment depends only on (manifest, spec).  Non-kept records
    stay unassigned.
    """
    spec.validate()
    rules = {rule.collection: rule for rule in spec.rules}

    groups: dict[str, list[str]] = {}
    for rec in manifest.kept():
        groups.setdefault(rec.collection, []).append(rec.id)
    unmatched = sorted(set(groups) - set(rules))
    if unmatched:
        raise ConfigError(f"no split rule for collections {unmatched}")

    assignment: dict[str, str] = {}
    for collection in sorted(groups):
        rule = rules[collection]
        ids = sorted(groups[collection])
        rng = random.Random(f"{spec.seed}:{collection}")
        rng.shuffle(ids)
        n = len(ids)
        n_val = min(_round_half_up(rule.val * n), n)
        n_test = min(_round_half_up(rule.test * n), n - n_val)
        n_train = n - n_val - n_test
        for rid in ids[:n_train]:
            assignment[rid] = "train"
        for rid in ids[n_train:n_train + n_val]:
            assignment[rid] = "val"
        for rid in ids[n_train + n_val:]:
            assignment[rid] = "test"

    out = [replace(rec, split=assignment.get(rec.id, "unassigned"))
           for rec in manifest]
    return DatasetManifest(out)


def reduction_percent(before: int, after: int) -> float:
    """Percent reduction from `before` to `after` record counts."""
    if before < 1:
        raise DomainError("before must be >= 1")
    if after < 0 or after > before:
        raise DomainError("after must be in [0, before]")
    return 100.0 * (before - after) / before
