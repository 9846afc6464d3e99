"""Minimal reader for the pipeline's JSONL manifest interchange format."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path


@dataclass(frozen=True)
class ManifestRow:
    id: str
    path: str
    status: str
    split: str


def read_manifest(path, kept_only: bool = True) -> list[ManifestRow]:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                payload = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}: line {lineno}: {exc}") from exc
            row = ManifestRow(id=payload["id"], path=payload["path"],
                              status=payload.get("status", "kept"),
                              split=payload.get("split", "unassigned"))
            if not kept_only or row.status == "kept":
                rows.append(row)
    return rows


def resolve(root, rel: str) -> Path:
    p = Path(rel)
    return p if p.is_absolute() else Path(root) / p


def load_class_table(path) -> dict[int, str]:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    return {int(k): str(v) for k, v in raw.items()}


def load_class_weights(path) -> tuple[float, dict[str, float]]:
    """Read the pipeline's weights.json: {"beta", "counts", "weights"}."""
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    return float(raw["beta"]), {str(k): float(v) for k, v in raw["weights"].items()}
