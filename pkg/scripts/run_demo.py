#!/usr/bin/env python3
"""Run the full offline pipeline on the bundled synthetic corpus.

Writes every artifact under --out and prints the evaluation table plus the
generated story brief. Equivalent to `somonitor demo`.
"""

import argparse
from pathlib import Path

from somonitor.pipeline import run_demo


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="somonitor-demo", help="output directory")
    parser.add_argument("--n", type=int, default=200, help="synthetic corpus size")
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args()

    summary = run_demo(args.out, n=args.n, seed=args.seed)
    print(f"dataset {summary['dataset_id']}: {summary['item_count']} creatives")
    print(
        f"pillars: {summary['pillar_rows']} rows | personas: {summary['persona_count']} | "
        f"challenges: {summary['challenge_count']}"
    )
    print()
    print(summary["report"])
    print(f"selected cell: {summary['selected_persona']} x {summary['selected_challenge']}")
    print(f"story insight: {summary['story_insight']}")
    print()
    print(Path(summary["brief_path"]).read_text(encoding="utf-8"))


if __name__ == "__main__":
    main()
