"""Macro-F1 against candidates per example for BoostAug and the raw backend.

    python3 scripts/sweep_experiment.py --n 1,2,4,8,12 --modes boostaug,monoaug,raw_backend
    python3 scripts/sweep_experiment.py --threshold 0.99 --corpus-seeds 0,1,2,3

Writes the sweep TSV for each corpus seed to --out-dir (or stdout) and prints
whether the directional claim holds: BoostAug at the largest N is at least its
value at the smallest N, while the raw backend gains no more than one stderr.
"""

import argparse
import logging
import tempfile
import time
from dataclasses import replace
from pathlib import Path

from boostaug.experiments import DESK_FILTERS, sweep_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--corpus-seeds", default="0")
    ap.add_argument("--n", default="2,8")
    ap.add_argument("--modes", default="boostaug,raw_backend")
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--threshold", type=float, default=DESK_FILTERS.confidence_threshold)
    ap.add_argument("--ratio", type=float, default=DESK_FILTERS.relative_ratio)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out-dir")
    args = ap.parse_args()
    logging.basicConfig(level=logging.ERROR)
    n_values = [int(x) for x in args.n.split(",")]
    modes = args.modes.split(",")
    filters = replace(DESK_FILTERS, confidence_threshold=args.threshold, relative_ratio=args.ratio)
    lo, hi = min(n_values), max(n_values)
    with tempfile.TemporaryDirectory() as work:
        for cs in (int(s) for s in args.corpus_seeds.split(",")):
            t0 = time.perf_counter()
            res = sweep_experiment(work, cs, n_values, range(args.seeds), modes, filters, jobs=args.jobs)
            if args.out_dir:
                Path(args.out_dir).mkdir(parents=True, exist_ok=True)
                (Path(args.out_dir) / f"sweep_corpus{cs}.tsv").write_text(res.to_tsv(), encoding="utf-8")
            else:
                print(res.to_tsv(), end="")
            verdict = ""
            if "boostaug" in modes and "raw_backend" in modes and lo != hi:
                b_lo, b_hi = res.row("boostaug", lo), res.row("boostaug", hi)
                r_lo, r_hi = res.row("raw_backend", lo), res.row("raw_backend", hi)
                ok = b_hi.f1_mean >= b_lo.f1_mean and r_hi.f1_mean <= r_lo.f1_mean + r_lo.f1_stderr
                verdict = (f"boostaug {b_lo.f1_mean:.4f}->{b_hi.f1_mean:.4f}  raw {r_lo.f1_mean:.4f}->"
                           f"{r_hi.f1_mean:.4f} (stderr {r_lo.f1_stderr:.4f})  {'holds' if ok else 'fails'}  ")
            print(f"corpus {cs}: {verdict}({time.perf_counter() - t0:.1f}s)", flush=True)


if __name__ == "__main__":
    main()
