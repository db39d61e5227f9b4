#!/usr/bin/env python3
"""Write a synthetic activation volume and trained class weights for ``anticip cam-demo``.

Each class lights up a fixed subset of units inside its own spatial blob;
the weights are a softmax classifier fitted on GAP features of many such
volumes.

Usage:
    python scripts/make_cam_inputs.py --out cam_inputs/
    anticip cam-demo --volume cam_inputs/volume.txt --weights cam_inputs/weights.txt --out cam_out/
"""

from __future__ import annotations

import argparse
import logging
from pathlib import Path

import numpy as np

from anticip.cam import class_scores, fit_class_weights, format_volume, format_weights, gap_features
from anticip.numeric import SplitMix64

logger = logging.getLogger("make_cam_inputs")


def blob_volume(rng: SplitMix64, k: int, size: int, units: int, n_classes: int) -> np.ndarray:
    f = 0.2 * np.abs(rng.normal((size, size, units)))
    cy, cx = rng.integers(size), rng.integers(size)
    yy, xx = np.mgrid[0:size, 0:size]
    blob = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2.0 * (size / 6.0) ** 2))
    per = units // n_classes
    f[:, :, k * per:(k + 1) * per] += blob[:, :, None]
    return f


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="cam_inputs")
    ap.add_argument("--classes", type=int, default=4)
    ap.add_argument("--units", type=int, default=16)
    ap.add_argument("--size", type=int, default=14)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s [%(levelname)s] %(name)s: %(message)s")

    rng = SplitMix64(args.seed)
    labels = np.arange(200) % args.classes
    vols = np.stack([blob_volume(rng, int(k), args.size, args.units, args.classes) for k in labels])
    w = fit_class_weights(vols, labels, args.classes)
    acc = np.mean([np.argmax(class_scores(gap_features(v), w)) == k for v, k in zip(vols, labels)])
    logger.info("GAP classifier training accuracy %.3f", acc)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    probe = blob_volume(rng, 1, args.size, args.units, args.classes)
    (out / "volume.txt").write_text(format_volume(probe), encoding="utf-8", newline="\n")
    (out / "weights.txt").write_text(format_weights(w), encoding="utf-8", newline="\n")
    logger.info("wrote %s and %s (probe class 1)", out / "volume.txt", out / "weights.txt")


if __name__ == "__main__":
    main()
