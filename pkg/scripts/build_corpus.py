#!/usr/bin/env python3
"""Generate the oracle fixture corpus: synthetic videos, a JSONL dataset,
and authored single-stage programs.

Usage:
    python scripts/build_corpus.py --out data/oracle
    python scripts/build_corpus.py --out data/oracle --items 30 --seed 0
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from morevqa.corpus import build_oracle_corpus, write_corpus


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--items", type=int, default=30)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    bundle = build_oracle_corpus(n_items=args.items, seed=args.seed)
    out = write_corpus(bundle, args.out)
    print(f"wrote {len(bundle.fixtures)} fixtures to {out / 'fixtures'}")
    print(f"wrote {len(bundle.rows)} dataset rows to {out / 'dataset.jsonl'}")
    print(f"wrote {len(bundle.programs)} single-stage programs to {out / 'programs'}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
