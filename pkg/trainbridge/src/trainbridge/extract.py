"""Frozen-backbone feature extraction into .agft files."""

from __future__ import annotations

import re
from dataclasses import dataclass
from glob import glob
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .agft import write_agft
from .manifest_io import read_manifest, resolve
from .model import ENCODER_DIM, PATCH_STRIDE, load_checkpoint


@dataclass(frozen=True)
class ExtractionJob:
    checkpoints: tuple[str, ...]      # every-5-epochs checkpoint paths
    manifest: str
    images_root: str
    out_dir: str
    pooling: str = "none"             # or "mean"
    dim: int = ENCODER_DIM
    stride: int = PATCH_STRIDE

    def validate(self) -> None:
        if not self.checkpoints:
            raise ValueError("checkpoint list is empty")
        if self.pooling not in ("none", "mean"):
            raise ValueError(f"unknown pooling {self.pooling!r}")


def job_from_glob(pattern: str, manifest: str, images_root: str, out_dir: str,
                  pooling: str = "none") -> ExtractionJob:
    paths = tuple(sorted(glob(pattern)))
    return ExtractionJob(checkpoints=paths, manifest=manifest,
                         images_root=images_root, out_dir=out_dir,
                         pooling=pooling)


def _epoch_of(path, fallback: int) -> int:
    m = re.search(r"(\d+)", Path(path).stem[::-1])
    return int(m.group(1)[::-1]) if m else fallback


def _to_tensor(path) -> torch.Tensor:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0
    arr = (arr - 0.5) / 0.5
    return torch.from_numpy(arr).permute(2, 0, 1).unsqueeze(0)


def extract_features(job: ExtractionJob) -> dict:
    """Write one .agft per (checkpoint, kept image); returns a summary."""
    job.validate()
    rows = read_manifest(job.manifest)
    if not rows:
        raise ValueError(f"{job.manifest}: no kept records")
    out_root = Path(job.out_dir)
    written = 0
    per_checkpoint = []
    for ckpt in job.checkpoints:
        encoder, epoch = load_checkpoint(ckpt, dim=job.dim, stride=job.stride)
        epoch = _epoch_of(ckpt, epoch)
        ckpt_dir = out_root / f"epoch_{epoch:04d}"
        with torch.no_grad():
            for row in rows:
                x = _to_tensor(resolve(job.images_root, row.path))
                feats = encoder(x)[0].permute(1, 2, 0).numpy().astype(np.float32)
                if job.pooling == "mean":
                    feats = feats.reshape(-1, feats.shape[-1]).mean(axis=0)
                    feats = feats.reshape(1, 1, -1)
                write_agft(ckpt_dir / f"{row.id}.agft", feats)
                written += 1
        per_checkpoint.append({"checkpoint": str(ckpt), "epoch": epoch,
                               "images": len(rows)})
    return {"checkpoints": per_checkpoint, "files_written": written,
            "pooling": job.pooling}
