"""trainbridge CLI: `extract` and `train-toy` subcommands."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .extract import extract_features, job_from_glob
from .traintoy import ToyTrainJob, train_toy_decoders


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trainbridge",
        description="Feature extraction and toy decoder training over frozen encoders.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="write .agft features per checkpoint and image")
    p.add_argument("--checkpoints", required=True, help="glob of checkpoint files")
    p.add_argument("--manifest", required=True)
    p.add_argument("--images", default=None,
                   help="image root (default: the manifest's directory)")
    p.add_argument("--out", required=True)
    p.add_argument("--pool", choices=("mean",), default=None)

    p = sub.add_parser("train-toy", help="overfit the toy decoders on a tile set")
    p.add_argument("--manifest", required=True)
    p.add_argument("--images", default=None)
    p.add_argument("--masks", required=True, help="species label masks")
    p.add_argument("--damage-masks", default=None)
    p.add_argument("--classes", required=True)
    p.add_argument("--weights", required=True, help="weights.json from the pipeline")
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--lr", type=float, default=5e-2)
    p.add_argument("--seed", type=int, default=0)
    return parser


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    images_root = args.images if args.images else str(Path(args.manifest).parent)
    try:
        if args.command == "extract":
            job = job_from_glob(args.checkpoints, args.manifest, images_root,
                                args.out, pooling=args.pool or "none")
            summary = extract_features(job)
        else:
            job = ToyTrainJob(manifest=args.manifest, images_root=images_root,
                              species_masks=args.masks,
                              damage_masks=args.damage_masks,
                              classes_file=args.classes,
                              weights_file=args.weights,
                              out_dir=args.out, epochs=args.epochs,
                              lr=args.lr, seed=args.seed)
            summary = train_toy_decoders(job)
    except Exception as exc:
        print(json.dumps({"stage": args.command, "error": type(exc).__name__,
                          "message": str(exc)}), file=sys.stderr)
        return 1
    print(json.dumps(summary, sort_keys=True))
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
