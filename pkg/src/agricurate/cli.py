"""Single pipeline entry point: every stage exposed as a subcommand.

Stages share a TOML config file, a global seed, and a worker count
(CLI flag < config file < AGRICURATE_WORKERS env var).  With --workdir set,
outputs land under fixed subdirectories (tiles/, primitives/, subsets/,
reports/).  Every run logs tool version, config hash, and seed, which is
enough to reproduce any artifact byte for byte.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import re
import sys
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:          # Python 3.10
    import tomli as tomllib

import numpy as np

from . import __version__
from .errors import ConfigError, PipelineError
from .imgio import load_gray8, save_png
from .manifest import (DatasetManifest, SplitRule, SplitSpec, assign_splits,
                       load_manifest)
from .metrics import (delta_report, efficiency_subsets, evaluate_dirs,
                      load_report, write_delta_csv)
from .primitives import (DEFAULT_MIN_AREA, DEFAULT_PADDING, load_class_table,
                         run_primitives)
from .probe import (ProbeConfig, evaluate_probe, load_labeled_features,
                    read_agft, select_checkpoint, stratified_holdout,
                    train_probe)
from .pcaviz import fit_pca3, fit_pca_points, mask_to_grid, render_rgb, upscale_nearest
from .quality import QualityConfig, curate
from .tiler import DEFAULT_TILE_SIZE, run_tiling
from .utils import dump_json, resolve_workers
from .vegetation import (DEFAULT_BIN_EDGES, VegetationConfig, balance,
                         compute_coverage)
from .weights import counts_from_masks, weights_payload

log = logging.getLogger("agricurate")

SUBCOMMANDS = ("curate", "tile", "vegcover", "balance", "primitives", "weights",
               "split", "subsets", "eval", "delta", "probe", "select", "pcaviz")


def _load_config(path) -> dict:
    if path is None:
        return {}
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def _config_hash(config: dict) -> str:
    canon = json.dumps(config, sort_keys=True, default=str)
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:16]


class Run:
    """Resolved global context for one CLI invocation."""

    def __init__(self, args):
        self.config = _load_config(args.config)
        pipeline = self.config.get("pipeline", {})
        self.workdir = Path(args.workdir) if args.workdir else None
        seed = args.seed if args.seed is not None else pipeline.get("seed", 0)
        self.seed = int(seed)
        workers = args.workers if args.workers is not None else pipeline.get("workers", 1)
        self.workers = resolve_workers(int(workers))

    def cfg(self, section: str, key: str, cli_value, default):
        if cli_value is not None:
            return cli_value
        return self.config.get(section, {}).get(key, default)

    def out_path(self, cli_value, *relative) -> Path:
        if cli_value is not None:
            return Path(cli_value)
        if self.workdir is None:
            raise ConfigError(f"either --{'/'.join(relative)} target or --workdir is required")
        return self.workdir.joinpath(*relative)

    def report_path(self, cli_value, name: str):
        if cli_value is not None:
            return Path(cli_value)
        if self.workdir is not None:
            return self.workdir / "reports" / name
        return None


def _finish(run: Run, args, stage: str, report: dict, report_name: str) -> int:
    path = run.report_path(getattr(args, "report", None), report_name)
    if path is not None:
        dump_json(report, path)
    log.info("%s done: %s", stage, json.dumps(report, sort_keys=True, default=str)[:500])
    return 0


# --------------------------------------------------------------------------
# stage handlers
# --------------------------------------------------------------------------


def cmd_curate(run: Run, args) -> int:
    config = QualityConfig(
        blur_threshold=float(run.cfg("quality", "blur_threshold", args.blur_threshold, 100.0)),
        dark_threshold=float(run.cfg("quality", "dark_threshold", args.dark_threshold, 30.0)),
        phash_distance=int(run.cfg("quality", "phash_distance", args.phash_distance, 10)),
    )
    manifest = load_manifest(args.manifest)
    curated = curate(manifest, args.images, config, workers=run.workers)
    out = run.out_path(args.out, "manifest_curated.jsonl")
    curated.save(out)
    by_status: dict[str, int] = {}
    for rec in curated:
        by_status[rec.status] = by_status.get(rec.status, 0) + 1
    report = {
        "total": len(curated),
        "by_status": dict(sorted(by_status.items())),
        "blur_threshold": config.blur_threshold,
        "dark_threshold": config.dark_threshold,
        "phash_distance": config.phash_distance,
    }
    return _finish(run, args, "curate", report, "curate_report.json")


def cmd_tile(run: Run, args) -> int:
    size = int(run.cfg("tiler", "size", args.size, DEFAULT_TILE_SIZE))
    manifest = load_manifest(args.manifest)
    images_root = args.images if args.images else Path(args.manifest).parent
    out_dir = run.out_path(args.out_dir, "tiles")
    out_manifest = run.out_path(args.out_manifest, "manifest_tiles.jsonl")
    tiles, report = run_tiling(manifest, images_root, size, out_dir,
                               manifest_root=Path(out_manifest).parent,
                               workers=run.workers)
    tiles.save(out_manifest)
    return _finish(run, args, "tile", report, "tile_report.json")


def _veg_config(run: Run, args, need_target: bool) -> VegetationConfig:
    edges = getattr(args, "edges", None)
    if edges is not None:
        edges = tuple(float(x) for x in edges.split(","))
    else:
        edges = tuple(run.cfg("vegetation", "edges", None, DEFAULT_BIN_EDGES))
    mode = getattr(args, "mode", None)
    source = {"exg": "exg_otsu", "mask": "external_mask", None: None}.get(mode, mode)
    source = run.cfg("vegetation", "source", source, "exg_otsu")
    target = 1
    if need_target:
        target = int(run.cfg("vegetation", "target", getattr(args, "target", None), 1))
    seed = getattr(args, "seed_stage", None)
    seed = int(seed) if seed is not None else run.seed
    return VegetationConfig(source=source, bin_edges=edges,
                            target_total=target, seed=seed)


def cmd_vegcover(run: Run, args) -> int:
    config = _veg_config(run, args, need_target=False)
    tiles = load_manifest(args.tiles)
    tiles_root = args.images if args.images else Path(args.tiles).parent
    covered, report = compute_coverage(tiles, tiles_root, config,
                                       mask_dir=args.mask_dir, workers=run.workers)
    out = run.out_path(args.out, "manifest_vegcover.jsonl")
    covered.save(out)
    return _finish(run, args, "vegcover", report, "vegcover_report.json")


def cmd_balance(run: Run, args) -> int:
    config = _veg_config(run, args, need_target=True)
    tiles = load_manifest(args.tiles)
    marked, report = balance(tiles, config)
    out = run.out_path(args.out, "manifest_balanced.jsonl")
    marked.save(out)
    return _finish(run, args, "balance", report, "balance_report.json")


def cmd_primitives(run: Run, args) -> int:
    class_table = load_class_table(args.classes)
    out_dir = run.out_path(args.out_dir, "primitives")
    index = run.out_path(args.index, "primitives.jsonl")
    report = run_primitives(
        args.images, args.masks, class_table, out_dir, index,
        min_area=int(run.cfg("primitives", "min_area", args.min_area, DEFAULT_MIN_AREA)),
        padding=int(run.cfg("primitives", "padding", args.padding, DEFAULT_PADDING)))
    return _finish(run, args, "primitives", report, "primitives_report.json")


def cmd_weights(run: Run, args) -> int:
    class_table = load_class_table(args.classes)
    beta = float(run.cfg("weights", "beta", args.beta, 0.99))
    mask_paths = sorted(Path(args.masks).rglob("*.png"))
    if not mask_paths:
        raise ConfigError(f"no mask files under {args.masks}")
    counts = counts_from_masks(mask_paths, class_table)
    payload = weights_payload(counts, beta)
    out = run.out_path(args.out, "reports", "weights.json")
    dump_json(payload, out)
    log.info("weights done: %d classes, beta=%s", len(payload["weights"]), beta)
    return 0


_RULE_RE = re.compile(r"^(?P<coll>[^:]+):(?P<tr>[^,]+),(?P<va>[^,]+),(?P<te>[^,]+)$")


def cmd_split(run: Run, args) -> int:
    rules = []
    for raw in args.rule:
        m = _RULE_RE.match(raw)
        if not m:
            raise ConfigError(f"bad --rule {raw!r}, expected COLLECTION:train,val,test")
        rules.append(SplitRule(m["coll"], float(m["tr"]), float(m["va"]), float(m["te"])))
    seed = args.seed_stage if args.seed_stage is not None else run.seed
    manifest = load_manifest(args.manifest)
    assigned = assign_splits(manifest, SplitSpec(rules=tuple(rules), seed=int(seed)))
    out = run.out_path(args.out, "manifest_split.jsonl")
    assigned.save(out)
    counts: dict[str, int] = {}
    for rec in assigned.kept():
        counts[rec.split] = counts.get(rec.split, 0) + 1
    report = {"kept": len(assigned.kept()), "by_split": dict(sorted(counts.items()))}
    return _finish(run, args, "split", report, "split_report.json")


def cmd_subsets(run: Run, args) -> int:
    counts = [int(x) for x in args.counts.split(",")]
    seed = args.seed_stage if args.seed_stage is not None else run.seed
    manifest = load_manifest(args.manifest)
    subsets = efficiency_subsets(manifest, counts, int(seed))
    out_dir = run.out_path(args.out_dir, "subsets")
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for count, subset in zip(counts, subsets):
        path = out_dir / f"subset_{count}.jsonl"
        subset.save(path)
        rows.append({"count": count, "total": len(subset),
                     "ids": [r.id for r in subset]})
    report = {"seed": int(seed),
              "collections": len(manifest.collections()),
              "subsets": rows}
    return _finish(run, args, "subsets", report, "subsets_report.json")


def cmd_eval(run: Run, args) -> int:
    class_table = load_class_table(args.classes)
    report = evaluate_dirs(args.gt, args.pred, class_table,
                           model_tag=args.model_tag, dataset_tag=args.dataset_tag)
    out = run.out_path(args.out, "reports", "eval_report.json")
    report.save(out)
    log.info("eval done: macro_f1=%.6f over %d classes",
             report.macro_f1, len(report.per_class_f1))
    return 0


def cmd_delta(run: Run, args) -> int:
    report_a = load_report(args.a)
    report_b = load_report(args.b)
    pixels = json.loads(Path(args.pixels).read_text(encoding="utf-8"))
    if isinstance(pixels, dict) and isinstance(pixels.get("counts"), dict):
        pixels = pixels["counts"]
    rows = delta_report(report_a, report_b, pixels)
    out = run.out_path(args.out, "reports", "delta.csv")
    write_delta_csv(rows, out)
    log.info("delta done: %d classes -> %s", len(rows), out)
    return 0


def _parse_epoch(args) -> int:
    if args.epoch is not None:
        return int(args.epoch)
    m = re.search(r"(\d+)$", Path(args.features).name)
    if not m:
        raise ConfigError("cannot infer the checkpoint epoch from the features "
                          "directory name; pass --epoch")
    return int(m.group(1))


def cmd_probe(run: Run, args) -> int:
    config = ProbeConfig(
        learning_rate=float(run.cfg("probe", "learning_rate", args.lr, 0.1)),
        l2=float(run.cfg("probe", "l2", args.l2, 1e-4)),
        epochs=int(run.cfg("probe", "epochs", args.epochs, 500)),
        seed=run.seed,
    )
    features, labels, files = load_labeled_features(args.features, args.labels)
    train_idx, hold_idx = stratified_holdout(labels, config.holdout_frac, config.seed)
    model = train_probe(features[train_idx], [labels[i] for i in train_idx], config)
    if hold_idx:
        accuracy = evaluate_probe(model, features[hold_idx],
                                  [labels[i] for i in hold_idx])
    else:
        accuracy = evaluate_probe(model, features[train_idx],
                                  [labels[i] for i in train_idx])
    report = {
        "epoch": _parse_epoch(args),
        "accuracy": round(accuracy, 6),
        "n_train": len(train_idx),
        "n_holdout": len(hold_idx),
        "classes": model.classes,
        "final_loss": round(model.loss_curve[-1], 9),
        "config": {"learning_rate": config.learning_rate, "l2": config.l2,
                   "epochs": config.epochs, "seed": config.seed},
    }
    out = run.out_path(args.out, "reports", "probe_report.json")
    dump_json(report, out)
    log.info("probe done: epoch=%d accuracy=%.4f", report["epoch"], accuracy)
    return 0


def cmd_select(run: Run, args) -> int:
    reports = []
    for path in sorted(Path(args.reports).glob("*.json")):
        payload = json.loads(path.read_text(encoding="utf-8"))
        if "epoch" in payload and "accuracy" in payload:
            reports.append((int(payload["epoch"]), float(payload["accuracy"])))
    if not reports:
        raise ConfigError(f"no probe reports with epoch/accuracy under {args.reports}")
    best = select_checkpoint(reports)
    accuracy = dict(reports)[best]
    payload = {
        "best_epoch": best,
        "accuracy": accuracy,
        "runs": [{"epoch": e, "accuracy": a} for e, a in sorted(reports)],
    }
    out = run.out_path(args.out, "reports", "best.json")
    dump_json(payload, out)
    log.info("select done: best_epoch=%d accuracy=%.4f", best, accuracy)
    return 0


def cmd_pcaviz(run: Run, args) -> int:
    scale = int(run.cfg("pcaviz", "scale", args.scale, 14))
    features = read_agft(args.features)
    if args.mask is not None:
        fg = mask_to_grid(load_gray8(args.mask), features.grid_h, features.grid_w)
    else:
        fg = np.ones((features.grid_h, features.grid_w), dtype=bool)
    if args.joint is not None:
        points = []
        for path in sorted(Path(args.joint).glob("*.agft")):
            ft = read_agft(path)
            mask_path = path.with_suffix(".png")
            if mask_path.exists():
                m = mask_to_grid(load_gray8(mask_path), ft.grid_h, ft.grid_w)
            else:
                m = np.ones((ft.grid_h, ft.grid_w), dtype=bool)
            points.append(ft.values[m])
        pc = fit_pca_points(np.concatenate(points, axis=0))
    else:
        pc = fit_pca3(features, fg)
    rgb = upscale_nearest(render_rgb(features, pc, fg), scale)
    out = run.out_path(args.out, "pcaviz.png")
    save_png(rgb, out)
    log.info("pcaviz done: %s (%dx%d), shares=%s", out, rgb.shape[1], rgb.shape[0],
             [round(float(s), 4) for s in pc.shares])
    return 0


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="agricurate",
        description="Dataset curation and evaluation pipeline for herbicide-trial imagery.")
    parser.add_argument("--config", help="TOML config file shared by all stages")
    parser.add_argument("--workdir", help="root for default stage outputs")
    parser.add_argument("--workers", type=int, default=None,
                        help="worker processes (0 = all cores); "
                             "AGRICURATE_WORKERS overrides")
    parser.add_argument("--seed", type=int, default=None, help="global seed")
    parser.add_argument("--verbose", action="store_true")
    parser.add_argument("--version", action="version", version=f"agricurate {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("curate", help="assign quality statuses to a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--images", required=True)
    p.add_argument("--blur-threshold", type=float, default=None)
    p.add_argument("--dark-threshold", type=float, default=None)
    p.add_argument("--phash-distance", type=int, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--report", default=None)
    p.set_defaults(handler=cmd_curate)

    p = sub.add_parser("tile", help="cut kept images into whole tiles")
    p.add_argument("--manifest", required=True)
    p.add_argument("--images", default=None,
                   help="image root (default: the manifest's directory)")
    p.add_argument("--size", type=int, default=None)
    p.add_argument("--out-dir", default=None)
    p.add_argument("--out-manifest", default=None)
    p.add_argument("--report", default=None)
    p.set_defaults(handler=cmd_tile)

    p = sub.add_parser("vegcover", help="compute per-tile vegetation coverage")
    p.add_argument("--tiles", required=True)
    p.add_argument("--images", default=None)
    p.add_argument("--mode", choices=("exg", "mask"), default=None)
    p.add_argument("--mask-dir", default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--report", default=None)
    p.set_defaults(handler=cmd_vegcover)

    p = sub.add_parser("balance", help="interval-balanced tile selection")
    p.add_argument("--tiles", required=True)
    p.add_argument("--target", type=int, default=None)
    p.add_argument("--edges", default=None, help="comma-separated bin edges")
    p.add_argument("--seed", dest="seed_stage", type=int, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--report", default=None)
    p.set_defaults(handler=cmd_balance)

    p = sub.add_parser("primitives", help="extract single-blob plant crops")
    p.add_argument("--images", required=True)
    p.add_argument("--masks", required=True)
    p.add_argument("--classes", required=True)
    p.add_argument("--min-area", type=int, default=None)
    p.add_argument("--padding", type=int, default=None)
    p.add_argument("--out-dir", default=None)
    p.add_argument("--index", default=None)
    p.add_argument("--report", default=None)
    p.set_defaults(handler=cmd_primitives)

    p = sub.add_parser("weights", help="class-balanced loss weights")
    p.add_argument("--masks", required=True)
    p.add_argument("--classes", required=True)
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(handler=cmd_weights)

    p = sub.add_parser("split", help="assign train/val/test splits")
    p.add_argument("--manifest", required=True)
    p.add_argument("--rule", action="append", required=True,
                   help="COLLECTION:train,val,test (repeatable)")
    p.add_argument("--seed", dest="seed_stage", type=int, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--report", default=None)
    p.set_defaults(handler=cmd_split)

    p = sub.add_parser("subsets", help="nested annotation-efficiency subsets")
    p.add_argument("--manifest", required=True)
    p.add_argument("--counts", required=True, help="comma-separated per-collection counts")
    p.add_argument("--seed", dest="seed_stage", type=int, default=None)
    p.add_argument("--out-dir", default=None)
    p.add_argument("--report", default=None)
    p.set_defaults(handler=cmd_subsets)

    p = sub.add_parser("eval", help="confusion matrix and F1 report")
    p.add_argument("--gt", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--classes", required=True)
    p.add_argument("--model-tag", default="")
    p.add_argument("--dataset-tag", default="")
    p.add_argument("--out", default=None)
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("delta", help="class-wise F1 deltas between two reports")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--pixels", required=True,
                   help="JSON of per-class training pixels (weights.json also works)")
    p.add_argument("--out", default=None)
    p.set_defaults(handler=cmd_delta)

    p = sub.add_parser("probe", help="linear probe over frozen features")
    p.add_argument("--features", required=True, help="directory of .agft files")
    p.add_argument("--labels", required=True, help="JSONL of {file, label}")
    p.add_argument("--epoch", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--l2", type=float, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(handler=cmd_probe)

    p = sub.add_parser("select", help="pick the best checkpoint from probe reports")
    p.add_argument("--reports", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(handler=cmd_select)

    p = sub.add_parser("pcaviz", help="PCA feature visualization")
    p.add_argument("--features", required=True, help="single .agft file")
    p.add_argument("--mask", default=None, help="vegetation mask PNG")
    p.add_argument("--joint", default=None,
                   help="fit the PCA across all .agft files in this directory")
    p.add_argument("--scale", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(handler=cmd_pcaviz)

    return parser


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        ctx = Run(args)
        log.info("agricurate %s | command=%s | config_hash=%s | seed=%d | workers=%d",
                 __version__, args.command, _config_hash(ctx.config),
                 ctx.seed, ctx.workers)
        return args.handler(ctx, args)
    except Exception as exc:                      # CLI contract: one parsable line
        print(json.dumps({"stage": args.command,
                          "error": type(exc).__name__,
                          "message": str(exc)}),
              file=sys.stderr)
        if args.verbose and not isinstance(exc, PipelineError):
            raise
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
