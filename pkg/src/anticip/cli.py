"""Command-line entry point: ``anticip <subcommand> [--config PATH] [--seed S] [--out PATH]``."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from . import cam, harness
from .datagen import save_dataset
from .losses import LossKind
from .mslstm import MsLstmModel, Variant

log = logging.getLogger("anticip")


def _config(args) -> harness.ExperimentConfig:
    cfg = harness.load_config(args.config) if args.config else harness.ExperimentConfig()
    over = {}
    if args.seed is not None:
        over["seeds"] = (args.seed,)
    if args.out is not None:
        over["out"] = args.out
    if args.avg_pool is not None:
        over["avg_pool"] = args.avg_pool == "on"
    return cfg.replace(**over) if over else cfg


def cmd_gen(args):
    cfg = _config(args)
    out = Path(args.out or "data")
    out.mkdir(parents=True, exist_ok=True)
    train, test = harness.generate(cfg.data, cfg.seeds[0])
    save_dataset(out / "train.txt", train)
    save_dataset(out / "test.txt", test)
    log.info("wrote %d train / %d test sequences to %s", len(train), len(test), out)


def cmd_train(args):
    cfg = _config(args)
    seed = cfg.seeds[0]
    kind = LossKind.parse(args.loss) if args.loss else cfg.losses[0]
    variant = Variant(args.variant) if args.variant else cfg.variants[0]
    train, _ = harness.load_data(cfg, seed)
    model, losses = harness.run_training(cfg, train, variant, kind, seed)
    out = Path(args.out or "model.txt")
    out.parent.mkdir(parents=True, exist_ok=True)
    model.save(out)
    log_path = out.with_name(out.stem + ".loss.csv")
    with log_path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("epoch", "loss"))
        for i, L in enumerate(losses, 1):
            w.writerow((i, repr(L)))
    log.info("trained %s/%s seed=%d: loss %.4f -> %.4f; checkpoint %s",
             kind.value, variant.value, seed, losses[0], losses[-1], out)


def cmd_eval(args):
    cfg = _config(args)
    model = MsLstmModel.load(args.model)
    seed = cfg.seeds[0]
    _, test = harness.load_data(cfg, seed)
    kind = LossKind.parse(args.loss) if args.loss else cfg.losses[0]
    curve = harness.evaluate_curve(model, test, cfg.avg_pool)
    rows = harness.curve_rows(kind, model.variant, seed, curve)
    harness.write_csv(cfg.out, rows)
    log.info("k=1 accuracy %.4f, k=%d accuracy %.4f -> %s", curve[0], len(curve), curve[-1], cfg.out)


def cmd_compare_losses(args):
    harness.compare_losses(_config(args))


def cmd_ablate_features(args):
    harness.ablate_features(_config(args))


def cmd_ablate_arch(args):
    harness.ablate_arch(_config(args))


def cam_demo(volume_path, weights_path, out_dir, conv_path=None) -> dict:
    """CAM for the top-scoring class, the masked volume, and a PGM heatmap."""
    f = cam.read_volume(volume_path)
    w = cam.read_weights(weights_path)
    conv = f if conv_path is None else cam.read_volume(conv_path)
    scores = cam.class_scores(cam.gap_features(f), w)
    k = cam.select_cam_class(scores)
    m = cam.cam_map(f, w, k)
    masked = cam.action_aware_mask(conv, m)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "cam.txt").write_text(cam.format_weights(m), encoding="utf-8", newline="\n")
    (out / "masked.txt").write_text(cam.format_volume(masked), encoding="utf-8", newline="\n")
    (out / "heatmap.pgm").write_text(cam.heatmap_pgm(m), encoding="ascii", newline="\n")
    total = float(m.sum())
    rel = abs(total - scores[k]) / max(1.0, abs(scores[k]))
    return {"class": k, "score": float(scores[k]), "cam_sum": total, "rel_error": rel}


def cmd_cam_demo(args):
    info = cam_demo(args.volume, args.weights, args.out or "cam_out", args.conv)
    ok = info["rel_error"] <= 1e-9
    log.info("class %d: score %.6g, CAM sum %.6g (%s)", info["class"], info["score"], info["cam_sum"],
             "sum identity holds" if ok else f"sum identity VIOLATED, rel err {info['rel_error']:.3g}")
    if not ok:
        raise SystemExit(1)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="anticip", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help):
        sp = sub.add_parser(name, help=help)
        sp.add_argument("--config", help="key = value config file")
        sp.add_argument("--seed", type=int, help="run a single seed instead of the configured list")
        sp.add_argument("--out", help="output path")
        sp.add_argument("--avg-pool", choices=("on", "off"), help="temporal average pooling at inference")
        sp.set_defaults(fn=fn)
        return sp

    add("gen", cmd_gen, "write a synthetic train/test pair into --out DIR")
    sp = add("train", cmd_train, "train one model and write a checkpoint")
    sp.add_argument("--loss")
    sp.add_argument("--variant")
    sp = add("eval", cmd_eval, "accuracy curve of a checkpoint on the test split")
    sp.add_argument("--model", required=True)
    sp.add_argument("--loss", help="value for the CSV loss column")
    add("compare-losses", cmd_compare_losses, "accuracy curves per training loss")
    add("ablate-features", cmd_ablate_features, "context-only vs action-only vs multi-stage")
    add("ablate-arch", cmd_ablate_arch, "fusion architecture comparison")
    sp = add("cam-demo", cmd_cam_demo, "class activation map of one activation volume")
    sp.add_argument("--volume", required=True)
    sp.add_argument("--weights", required=True)
    sp.add_argument("--conv", help="volume to mask (defaults to --volume)")
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        args.fn(args)
    except (OSError, ValueError) as e:
        log.error("%s", e)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
