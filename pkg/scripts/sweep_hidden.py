#!/usr/bin/env python3
"""Hidden-size sweep: earliest and latest accuracy of the multi-stage model per hidden width.

Usage:
    python scripts/sweep_hidden.py --hidden 8 16 32 64 --out results/hidden.csv
"""

from __future__ import annotations

import argparse
import csv
import logging
import statistics
from pathlib import Path

from anticip import harness


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--hidden", type=int, nargs="+", default=[8, 16, 32, 64])
    ap.add_argument("--config")
    ap.add_argument("--seeds", type=int, nargs="+")
    ap.add_argument("--out", default="hidden.csv")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s [%(levelname)s] %(name)s: %(message)s")

    cfg = harness.load_config(args.config) if args.config else harness.ExperimentConfig()
    cfg = cfg.replace(losses=("anticipation",))
    if args.seeds:
        cfg = cfg.replace(seeds=tuple(args.seeds))
    rows = harness.sweep_hidden(cfg, args.hidden)

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("hidden", "avg_pool", "seed", "k", "accuracy"))
        for h, pool, seed, k, acc in rows:
            w.writerow((h, "on" if pool else "off", seed, k, repr(acc)))

    T = cfg.data.n_frames
    print(f"{'hidden':>6s} {'pool':>5s} {'k=1':>6s} {'k=T':>6s}")
    for h in args.hidden:
        for pool in (False, True):
            sel = [r for r in rows if r[0] == h and r[1] == pool]
            e = 100 * statistics.fmean(r[4] for r in sel if r[3] == 1)
            l = 100 * statistics.fmean(r[4] for r in sel if r[3] == T)
            print(f"{h:6d} {'on' if pool else 'off':>5s} {e:6.1f} {l:6.1f}")


if __name__ == "__main__":
    main()
