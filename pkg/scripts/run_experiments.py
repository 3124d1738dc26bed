#!/usr/bin/env python3
"""Evaluate all four systems plus the stage ablation grid over one corpus
and print a compact comparison table.

Usage:
    python scripts/build_corpus.py --out data/oracle
    python scripts/run_experiments.py --corpus data/oracle --out results/
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from morevqa.harness import SYSTEMS, load_dataset, run_ablation, run_eval
from morevqa.tools import MockBackend, load_corpus


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--corpus", required=True, help="directory from build_corpus.py")
    parser.add_argument("--out", help="where to write per-system results")
    parser.add_argument("--workers", type=int, default=1)
    args = parser.parse_args()

    corpus_dir = Path(args.corpus)
    fixtures = load_corpus(corpus_dir / "fixtures")
    items = load_dataset(corpus_dir / "dataset.jsonl")
    backend = MockBackend(fixtures)
    out_root = Path(args.out) if args.out else None

    print(f"{len(items)} items over {len(fixtures)} videos\n")
    print(f"{'system':<14} {'accuracy':>9} {'fail rate':>10}  per-subset")
    for system in SYSTEMS:
        started = time.perf_counter()
        _, summary = run_eval(
            items,
            system,
            backend,
            fixtures,
            out_dir=out_root / system if out_root else None,
            workers=args.workers,
            dataset_dir=corpus_dir,
        )
        elapsed = time.perf_counter() - started
        subsets = " ".join(f"{k}={v:.2f}" for k, v in summary["per_subset"].items())
        print(
            f"{system:<14} {summary['accuracy']:>9.3f} {summary['failure_rate']:>10.3f}"
            f"  {subsets}  ({elapsed:.1f}s)"
        )

    print("\nstage ablation (m1, m2, m3 -> accuracy)")
    rows = run_ablation(
        items,
        backend,
        fixtures,
        out_path=out_root / "ablation.csv" if out_root else None,
        workers=args.workers,
    )
    for mask, accuracy in rows:
        bits = " ".join("on " if b else "off" for b in mask)
        print(f"  {bits} -> {accuracy:.3f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
