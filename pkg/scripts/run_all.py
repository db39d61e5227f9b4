#!/usr/bin/env python3
"""Run every comparison study on the default desk protocol and print a results table.

Usage:
    python scripts/run_all.py --out results/
    python scripts/run_all.py --out results/ --config configs/quick.cfg --seeds 0 1
"""

from __future__ import annotations

import argparse
import logging
import statistics
import time
from pathlib import Path

from anticip import harness
from anticip.losses import LossKind
from anticip.mslstm import FUSION_VARIANTS

logger = logging.getLogger("run_all")


def mean_at(rows, loss, variant, k):
    return 100.0 * statistics.fmean(r.accuracy for r in rows if r.loss == loss and r.variant == variant and r.k == k)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="results", help="output directory")
    ap.add_argument("--config", help="key = value config file")
    ap.add_argument("--seeds", type=int, nargs="+")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s [%(levelname)s] %(name)s: %(message)s")

    cfg = harness.load_config(args.config) if args.config else harness.ExperimentConfig()
    if args.seeds:
        cfg = cfg.replace(seeds=tuple(args.seeds))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    T = cfg.data.n_frames

    t0 = time.perf_counter()
    losses = harness.compare_losses(cfg.replace(out=str(out / "losses.csv")))
    features = harness.ablate_features(cfg.replace(out=str(out / "features.csv")))
    arch = harness.ablate_arch(cfg.replace(out=str(out / "arch.csv")))
    logger.info("all studies done in %.0fs", time.perf_counter() - t0)

    print(f"\nloss comparison (multistage, {len(cfg.seeds)} seeds)")
    print(f"  {'loss':13s} {'k=1':>6s} {'k=1 pool':>9s} {'k=T':>6s} {'k=T pool':>9s}")
    for kind in cfg.losses:
        k = kind.value
        print(f"  {k:13s} {mean_at(losses[False], k, 'multistage', 1):6.1f} "
              f"{mean_at(losses[True], k, 'multistage', 1):9.1f} {mean_at(losses[False], k, 'multistage', T):6.1f} "
              f"{mean_at(losses[True], k, 'multistage', T):9.1f}")

    a = LossKind.ANTICIPATION.value
    print("\nfeature ablation (earliest / latest)")
    for v in ("context_only", "action_only", "multistage"):
        print(f"  {v:14s} {mean_at(features, a, v, 1):6.1f} {mean_at(features, a, v, T):6.1f}")

    print("\narchitecture ablation (earliest / latest)")
    for v in FUSION_VARIANTS:
        print(f"  {v.value:14s} {mean_at(arch, a, v.value, 1):6.1f} {mean_at(arch, a, v.value, T):6.1f}")

    fw = [harness.framewise_baseline(cfg, s) for s in cfg.seeds]
    print("\nframe-wise linear baseline (earliest / latest)")
    print(f"  {'framewise':14s} {100 * statistics.fmean(c[0] for c in fw):6.1f} "
          f"{100 * statistics.fmean(c[-1] for c in fw):6.1f}")


if __name__ == "__main__":
    main()
