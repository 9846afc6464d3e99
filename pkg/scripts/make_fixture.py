#!/usr/bin/env python3
"""Materialize the bundled 50-image synthetic corpus.

Usage: python scripts/make_fixture.py --out /tmp/corpus [--seed N]
"""

import argparse

from agricurate.fixture import DEFAULT_SEED, build_corpus


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", required=True, help="corpus root directory")
    parser.add_argument("--seed", type=int, default=DEFAULT_SEED)
    args = parser.parse_args()
    paths = build_corpus(args.out, seed=args.seed)
    for key, value in paths.items():
        print(f"{key}: {value}")


if __name__ == "__main__":
    main()
