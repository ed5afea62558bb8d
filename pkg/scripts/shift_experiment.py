"""Hull overlap with the test split: filter-chain survivors vs. size-matched raw candidates.

    python3 scripts/shift_experiment.py --corpus-seeds 0,1,2,3 --seeds 5
    python3 scripts/shift_experiment.py --corpus-fillers      # thesaurus without novel words

Prints one line per corpus seed with both means over the run seeds.
"""

import argparse
import logging
import tempfile
import time
from dataclasses import replace

from boostaug.experiments import DESK_FILTERS, shift_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--corpus-seeds", default="0,1,2,3")
    ap.add_argument("--seeds", type=int, default=5, help="pipeline seeds per corpus")
    ap.add_argument("--threshold", type=float, default=DESK_FILTERS.confidence_threshold)
    ap.add_argument("--flip-share", type=float, default=0.5)
    ap.add_argument("--corpus-fillers", action="store_true", help="map fillers to other corpus words")
    args = ap.parse_args()
    logging.basicConfig(level=logging.ERROR)
    filters = replace(DESK_FILTERS, confidence_threshold=args.threshold)
    wins = 0
    seeds = [int(s) for s in args.corpus_seeds.split(",")]
    with tempfile.TemporaryDirectory() as work:
        for cs in seeds:
            t0 = time.perf_counter()
            out = shift_experiment(work, cs, range(args.seeds), filters, not args.corpus_fillers, args.flip_share)
            ok = out.mean_filtered >= out.mean_unfiltered
            wins += ok
            print(f"corpus {cs}: filtered {out.mean_filtered:.4f}  unfiltered {out.mean_unfiltered:.4f}  "
                  f"survivors/run {sum(out.sizes) / len(out.sizes):.0f}  {'ok' if ok else 'reversed'}  "
                  f"({time.perf_counter() - t0:.1f}s)", flush=True)
    print(f"filtered >= unfiltered on {wins}/{len(seeds)} corpora")


if __name__ == "__main__":
    main()
