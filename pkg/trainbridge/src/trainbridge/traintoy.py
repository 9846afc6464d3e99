"""Toy multi-decoder fine-tuning over a frozen encoder.

Three task heads (vegetation, species, damage) sit on one frozen encoder;
the species loss is weighted categorical cross-entropy with class weights
taken from the pipeline's weights.json.  Prediction masks come back out in
the pipeline's PNG convention (uint8 class index, 255 = ignore).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image

from .manifest_io import (load_class_table, load_class_weights, read_manifest,
                          resolve)
from .model import DecoderHead, ENCODER_DIM, make_encoder, state_checksum

IGNORE = 255


@dataclass
class ToyTrainJob:
    manifest: str
    images_root: str
    species_masks: str
    classes_file: str
    weights_file: str
    out_dir: str
    damage_masks: str | None = None
    n_damage_classes: int = 2
    epochs: int = 200
    lr: float = 5e-2
    seed: int = 0
    frozen_encoder: bool = True       # contract: always true


def weighted_ce(logits: torch.Tensor, target: torch.Tensor,
                weight: torch.Tensor | None) -> torch.Tensor:
    """Weighted categorical cross-entropy over pixels, ignore value skipped."""
    return F.cross_entropy(logits, target, weight=weight, ignore_index=IGNORE)


def _load_mask(path) -> np.ndarray:
    with Image.open(path) as im:
        if im.mode not in ("L", "P"):
            im = im.convert("L")
        return np.asarray(im, dtype=np.uint8)


def _save_mask(arr: np.ndarray, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(arr.astype(np.uint8)).save(path, format="PNG", compress_level=1)


def _species_weight_tensor(class_table: dict[int, str],
                           weights: dict[str, float]) -> torch.Tensor:
    k = len(class_table)
    out = torch.zeros(k, dtype=torch.float32)
    for idx in range(k):
        out[idx] = float(weights.get(class_table[idx], 0.0))
    return out


def train_toy_decoders(job: ToyTrainJob) -> dict:
    """Overfit the three heads on the manifest tiles; encoder stays frozen."""
    torch.manual_seed(job.seed)
    rows = read_manifest(job.manifest)
    if not rows:
        raise ValueError(f"{job.manifest}: no kept records")
    class_table = load_class_table(job.classes_file)
    n_species = len(class_table)
    beta, weight_map = load_class_weights(job.weights_file)
    missing = [name for name in weight_map if name not in class_table.values()]
    if missing or len(weight_map) != n_species:
        raise ValueError("weights.json classes do not match the class table "
                         f"(unmatched: {missing})")
    species_w = _species_weight_tensor(class_table, weight_map)

    images, species_t, veg_t, damage_t = [], [], [], []
    for row in rows:
        with Image.open(resolve(job.images_root, row.path)) as im:
            arr = np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0
        images.append(torch.from_numpy((arr - 0.5) / 0.5).permute(2, 0, 1))
        stem = Path(row.path).name
        species = _load_mask(Path(job.species_masks) / stem)
        species_t.append(torch.from_numpy(species.astype(np.int64)))
        veg = np.where(species == IGNORE, IGNORE,
                       (species > 0).astype(np.int64))
        veg_t.append(torch.from_numpy(veg.astype(np.int64)))
        if job.damage_masks is not None:
            damage = _load_mask(Path(job.damage_masks) / stem).astype(np.int64)
        else:
            damage = np.zeros_like(species, dtype=np.int64)
        damage_t.append(torch.from_numpy(damage))
    x = torch.stack(images)
    targets = {
        "vegetation": torch.stack(veg_t),
        "species": torch.stack(species_t),
        "damage": torch.stack(damage_t),
    }

    encoder = make_encoder(seed=job.seed)
    encoder.eval()
    for p in encoder.parameters():
        p.requires_grad_(False)
    checksum_before = state_checksum(encoder)

    heads = {
        "vegetation": DecoderHead(ENCODER_DIM, 2),
        "species": DecoderHead(ENCODER_DIM, n_species),
        "damage": DecoderHead(ENCODER_DIM, job.n_damage_classes),
    }
    weights_per_task = {"vegetation": None, "species": species_w, "damage": None}
    params = [p for head in heads.values() for p in head.parameters()]
    optimizer = torch.optim.Adam(params, lr=job.lr)

    h, w = x.shape[2], x.shape[3]
    with torch.no_grad():
        feats = encoder(x)
    losses = []
    for epoch in range(job.epochs):
        optimizer.zero_grad()
        total = torch.zeros(())
        per_task = {}
        for task, head in heads.items():
            logits = F.interpolate(head(feats), size=(h, w), mode="nearest")
            loss = weighted_ce(logits, targets[task], weights_per_task[task])
            per_task[task] = loss.item()
            total = total + loss
        total.backward()
        optimizer.step()
        losses.append({"epoch": epoch, "total": total.item(), **per_task})

    out_dir = Path(job.out_dir)
    with torch.no_grad():
        for task, head in heads.items():
            logits = F.interpolate(head(feats), size=(h, w), mode="nearest")
            pred = logits.argmax(dim=1).numpy().astype(np.uint8)
            for row, mask in zip(rows, pred):
                _save_mask(mask, out_dir / f"preds_{task}" / Path(row.path).name)

    checksum_after = state_checksum(encoder)
    report = {
        "tiles": len(rows),
        "epochs": job.epochs,
        "beta": beta,
        "species_classes": n_species,
        "encoder_frozen": job.frozen_encoder,
        "encoder_sha_before": checksum_before,
        "encoder_sha_after": checksum_after,
        "final_loss": losses[-1]["total"] if losses else None,
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "loss_curve.json").write_text(
        json.dumps(losses, indent=2) + "\n", encoding="utf-8")
    (out_dir / "train_report.json").write_text(
        json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return report
