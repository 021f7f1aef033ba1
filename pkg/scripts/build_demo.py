#!/usr/bin/env python3
"""Build the offline demo: mini-corpus plus a seeded replay cache.

Usage:
    python scripts/build_demo.py [DEST]

Writes DEST/corpus (tables.json, questions.json, SQLite files) and DEST/cache
(recorded completions), then prints the replay command to run the pipeline.
"""

from __future__ import annotations

import sys
from pathlib import Path

from text2sql.minicorpus import build_corpus, seed_replay_cache


def main() -> int:
    dest = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("demo")
    corpus_dir = build_corpus(dest / "corpus")
    link_summary, generate_summary = seed_replay_cache(corpus_dir, dest / "cache")
    if not (link_summary.ok and generate_summary.ok):
        print("seeding failed:", link_summary.failures + generate_summary.failures)
        return 1
    print(f"corpus: {corpus_dir}")
    print(f"cache:  {dest / 'cache'}")
    print("\nrun the pipeline offline with:\n")
    print(
        "  text2sql run"
        f" --tables {corpus_dir / 'tables.json'}"
        f" --questions {corpus_dir / 'questions.json'}"
        f" --backend replay --cache-dir {dest / 'cache'}"
        f" --out {dest / 'artifacts'}"
    )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
