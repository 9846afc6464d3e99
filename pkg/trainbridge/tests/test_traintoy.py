"""Toy decoder training: overfit acceptance, frozen encoder, loss weighting.

F1 is computed by the pipeline's own `eval` CLI over the prediction masks,
keeping a single source of truth for metrics.
"""

import json
import subprocess
import sys

import numpy as np
import pytest
import torch
import torch.nn.functional as F

from trainbridge.traintoy import IGNORE, ToyTrainJob, train_toy_decoders, weighted_ce


def run_pipeline_cli(*argv) -> None:
    proc = subprocess.run([sys.executable, "-m", "agricurate.cli", *argv],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr


@pytest.fixture(scope="session")
def weights_file(tile_set):
    out = tile_set / "weights.json"
    run_pipeline_cli("weights", "--masks", str(tile_set / "masks_species"),
                     "--classes", str(tile_set / "classes.json"),
                     "--beta", "0.99", "--out", str(out))
    return out


@pytest.fixture(scope="session")
def trained(tile_set, weights_file, tmp_path_factory):
    out_dir = tmp_path_factory.mktemp("toy_out")
    job = ToyTrainJob(manifest=str(tile_set / "manifest.jsonl"),
                      images_root=str(tile_set),
                      species_masks=str(tile_set / "masks_species"),
                      damage_masks=str(tile_set / "masks_damage"),
                      classes_file=str(tile_set / "classes.json"),
                      weights_file=str(weights_file),
                      out_dir=str(out_dir), epochs=250, seed=1)
    report = train_toy_decoders(job)
    return out_dir, report


def test_overfit_reaches_f1_095(tile_set, trained):
    out_dir, report = trained
    assert report["tiles"] == 16
    eval_path = out_dir / "eval_species.json"
    run_pipeline_cli("eval", "--gt", str(tile_set / "masks_species"),
                     "--pred", str(out_dir / "preds_species"),
                     "--classes", str(tile_set / "classes.json"),
                     "--out", str(eval_path))
    payload = json.loads(eval_path.read_text())
    assert payload["macro_f1"] >= 0.95, payload["per_class_f1"]


def test_encoder_checksum_unchanged(trained):
    _, report = trained
    assert report["encoder_sha_before"] == report["encoder_sha_after"]


def test_three_heads_emit_prediction_masks(trained):
    out_dir, _ = trained
    for task in ("vegetation", "species", "damage"):
        files = sorted((out_dir / f"preds_{task}").glob("*.png"))
        assert len(files) == 16


def test_loss_curve_logged_per_epoch(trained):
    out_dir, report = trained
    curve = json.loads((out_dir / "loss_curve.json").read_text())
    assert len(curve) == report["epochs"]
    assert curve[-1]["total"] < curve[0]["total"]
    assert {"vegetation", "species", "damage"} <= set(curve[0])


def test_weighted_ce_scales_per_class_terms():
    # per-class loss terms must equal the plain CE terms scaled by the
    # class weights (torch convention: sum(w_y * ce) / sum(w_y))
    torch.manual_seed(0)
    logits = torch.randn(2, 3, 8, 8)
    target = torch.randint(0, 3, (2, 8, 8))
    target[0, 0, 0] = IGNORE
    weight = torch.tensor([0.2, 1.5, 1.3])

    got = weighted_ce(logits, target, weight)

    per_pixel = F.cross_entropy(logits, target, reduction="none",
                                ignore_index=IGNORE)
    valid = target != IGNORE
    w_per_pixel = weight[target[valid]]
    manual = (per_pixel[valid] * w_per_pixel).sum() / w_per_pixel.sum()
    assert abs(float(got) - float(manual)) <= 1e-6


def test_mismatched_weight_classes_rejected(tile_set, tmp_path):
    bad = tmp_path / "bad_weights.json"
    bad.write_text(json.dumps({"beta": 0.99, "counts": {"X": 1},
                               "weights": {"X": 1.0}}))
    job = ToyTrainJob(manifest=str(tile_set / "manifest.jsonl"),
                      images_root=str(tile_set),
                      species_masks=str(tile_set / "masks_species"),
                      classes_file=str(tile_set / "classes.json"),
                      weights_file=str(bad),
                      out_dir=str(tmp_path / "out"), epochs=1)
    with pytest.raises(ValueError, match="class table"):
        train_toy_decoders(job)
