#!/usr/bin/env python3
"""Run the whole pipeline on the synthetic corpus.

Builds the 50-image fixture, then drives curate -> tile -> vegcover ->
balance -> primitives -> weights -> subsets -> eval through the CLI with a
shared workdir.  This is the same stage sequence and parameter set the
end-to-end acceptance test freezes into golden reports.

Usage: python scripts/run_pipeline.py --root /tmp/demo [--seed N] [--workers N]
"""

import argparse
import sys
import time
from pathlib import Path

from agricurate.cli import run
from agricurate.fixture import DEFAULT_SEED, build_corpus, pipeline_commands


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--root", required=True, help="scratch directory")
    parser.add_argument("--seed", type=int, default=DEFAULT_SEED)
    parser.add_argument("--workers", type=int, default=1)
    args = parser.parse_args()

    root = Path(args.root)
    corpus = build_corpus(root / "corpus", seed=args.seed)
    workdir = root / "work"
    started = time.time()
    for argv in pipeline_commands(corpus, workdir, args.workers):
        code = run(argv)
        if code != 0:
            print(f"stage failed: {argv}", file=sys.stderr)
            return code
    print(f"pipeline finished in {time.time() - started:.1f}s; "
          f"reports under {workdir / 'reports'}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
