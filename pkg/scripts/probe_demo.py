#!/usr/bin/env python3
"""Checkpoint-selection demo on synthetic features.

Emits .agft feature sets for a few fake checkpoints whose class separation
improves with the epoch, probes each one, selects the best epoch, and renders
a PCA visualization of the last feature grid.

Usage: python scripts/probe_demo.py --root /tmp/probe_demo
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from agricurate.cli import run
from agricurate.imgio import save_png
from agricurate.probe import write_agft


def synth_checkpoint(root: Path, epoch: int, separation: float, rng) -> Path:
    feat_dir = root / f"epoch_{epoch:04d}"
    feat_dir.mkdir(parents=True, exist_ok=True)
    lines = []
    for i in range(24):
        label = ("ZEAMX", "ABUTH", "CHEAL")[i % 3]
        center = {"ZEAMX": (1, 0), "ABUTH": (0, 1), "CHEAL": (-1, -1)}[label]
        values = rng.standard_normal((6, 6, 16)).astype(np.float32)
        values[..., 0] += center[0] * separation
        values[..., 1] += center[1] * separation
        name = f"prim_{i:03d}.agft"
        write_agft(feat_dir / name, values)
        lines.append(json.dumps({"file": name, "label": label}))
    (feat_dir / "labels.jsonl").write_text("\n".join(lines) + "\n")
    return feat_dir


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--root", required=True)
    args = parser.parse_args()
    root = Path(args.root)
    reports = root / "reports"
    rng = np.random.default_rng(2024)

    last_dir = None
    for epoch, separation in ((5, 0.2), (10, 0.8), (15, 3.0), (20, 2.0)):
        feat_dir = synth_checkpoint(root, epoch, separation, rng)
        code = run(["probe", "--features", str(feat_dir),
                    "--labels", str(feat_dir / "labels.jsonl"),
                    "--out", str(reports / f"probe_{epoch:04d}.json")])
        if code != 0:
            return code
        last_dir = feat_dir

    code = run(["select", "--reports", str(reports),
                "--out", str(root / "best.json")])
    if code != 0:
        return code
    print((root / "best.json").read_text())

    mask = np.zeros((84, 84), dtype=np.uint8)
    mask[10:74, 10:74] = 255
    save_png(mask, root / "veg_mask.png")
    return run(["pcaviz", "--features", str(last_dir / "prim_000.agft"),
                "--mask", str(root / "veg_mask.png"),
                "--out", str(root / "viz.png")])


if __name__ == "__main__":
    sys.exit(main())
