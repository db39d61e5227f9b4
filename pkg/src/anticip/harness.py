"""Experiment runner: training cells, accuracy curves, comparison tables.

Every experiment is a grid of independent *cells* ``(loss, variant, seed)``.
A cell generates (or loads) its data, initialises a model from the seed,
trains it, and evaluates an accuracy-vs-frames curve.  Cells are pure
functions of their inputs, so results are memoised per process.
"""

from __future__ import annotations

import csv
import dataclasses
import logging
import statistics
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple

import numpy as np

from .datagen import Dataset, SyntheticConfig, generate, load_dataset
from .losses import LossKind
from .mslstm import FUSION_VARIANTS, MsLstmModel, Variant, forward, predict_curve, train_step
from .numeric import SgdState, ShapeError, SplitMix64

log = logging.getLogger(__name__)

CSV_HEADER = ("loss", "variant", "seed", "k", "accuracy")
SUMMARY_HEADER = ("loss", "variant", "k", "mean_accuracy", "n_seeds")


def default_data() -> SyntheticConfig:
    """The desk protocol's synthetic benchmark (N=5, T=20)."""
    r0 = 0.55 / 3.0
    ramp = np.minimum(1.0, np.concatenate([np.full(5, r0), np.linspace(r0, 1.0, 9)[1:], np.ones(7)]))
    return SyntheticConfig(
        n_classes=5, n_frames=20, d_ctx=16, d_act=16, v_train=500, v_test=200,
        noise_sigma=0.5, noise_corr=0.8, proto_scale=3.0,
        ctx_class_weight=0.05, act_group_weight=0.15,
        ramp=tuple(float(x) for x in ramp),
    )


@dataclass
class ExperimentConfig:
    data: SyntheticConfig = field(default_factory=default_data)
    dataset: str | None = None      # directory with train.txt / test.txt; overrides ``data``
    losses: tuple = tuple(LossKind)
    variants: tuple = (Variant.MULTI_STAGE,)
    seeds: tuple = (0, 1, 2, 3, 4)
    epochs: int = 30
    lr: float = 0.003
    momentum: float = 0.9
    weight_decay: float = 0.0
    batch_size: int = 8
    hidden: int = 32
    avg_pool: bool = False
    out: str = "results.csv"

    def __post_init__(self):
        self.losses = tuple(LossKind.parse(k) if isinstance(k, str) else LossKind(k) for k in self.losses)
        self.variants = tuple(Variant(v) for v in self.variants)
        self.seeds = tuple(int(s) for s in self.seeds)
        if not self.seeds or not self.losses or not self.variants:
            raise ValueError("seeds, losses and variants must be non-empty")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1 or self.hidden < 1:
            raise ValueError("batch_size and hidden must be >= 1")

    def replace(self, **kw) -> "ExperimentConfig":
        return dataclasses.replace(self, **kw)


class AccuracyRow(NamedTuple):
    loss: str
    variant: str
    seed: int
    k: int
    accuracy: float


# --------------------------------------------------------------------------
# config files


_DATA_FIELDS = {f.name: f for f in dataclasses.fields(SyntheticConfig)}
_EXP_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}


def _convert(key: str, raw: str, default):
    raw = raw.strip()
    if key in ("losses", "variants", "seeds", "ramp", "crop_scale"):
        items = [s.strip() for s in raw.split(",") if s.strip()]
        if key == "seeds":
            return tuple(int(s) for s in items)
        if key == "ramp":
            return tuple(float(s) for s in items)
        return tuple(items)
    if key == "groups":
        # e.g. "0 1 2 | 3 4"
        return tuple(tuple(int(x) for x in g.split()) for g in raw.split("|"))
    if key == "dataset":
        return raw or None
    if isinstance(default, bool):
        if raw.lower() in ("on", "true", "yes", "1"):
            return True
        if raw.lower() in ("off", "false", "no", "0"):
            return False
        raise ValueError(f"{key}: expected on/off, got {raw!r}")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    return raw


def parse_config(text: str, source="<config>") -> ExperimentConfig:
    """``key = value`` lines, ``#`` comments.  Data keys and experiment keys share one namespace."""
    base = ExperimentConfig()
    data_kw: dict = {}
    exp_kw: dict = {}
    for ln, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{source}:{ln}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        try:
            if key in _EXP_FIELDS and key != "data":
                exp_kw[key] = _convert(key, raw, getattr(base, key))
            elif key in _DATA_FIELDS:
                data_kw[key] = _convert(key, raw, getattr(base.data, key))
            else:
                raise ValueError(f"unknown key {key!r}")
        except ValueError as e:
            raise ValueError(f"{source}:{ln}: {e}") from None
    if data_kw:
        # a ramp override from the file wins; a changed frame count without one falls back to linear
        if "n_frames" in data_kw and "ramp" not in data_kw:
            data_kw["ramp"] = None
        exp_kw["data"] = dataclasses.replace(base.data, **data_kw)
    return ExperimentConfig(**exp_kw)


def load_config(path) -> ExperimentConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"), source=str(path))


# --------------------------------------------------------------------------
# cells


def load_data(cfg: ExperimentConfig, seed: int) -> tuple[Dataset, Dataset]:
    if cfg.dataset:
        root = Path(cfg.dataset)
        return load_dataset(root / "train.txt"), load_dataset(root / "test.txt")
    return generate(cfg.data, seed)


def run_training(cfg: ExperimentConfig, train: Dataset, variant: Variant, kind: LossKind, seed: int,
                 model: MsLstmModel | None = None):
    """Train one model; returns ``(model, per-epoch mean training loss)``."""
    if model is None:
        model = MsLstmModel.init(train.n_classes, train.ctx.shape[2], train.act.shape[2],
                                 cfg.hidden, variant, seed=seed)
    opt = SgdState(cfg.lr, cfg.momentum, cfg.weight_decay)
    order_rng = SplitMix64(seed).substream("batch-order")
    losses = []
    for _ in range(cfg.epochs):
        order = order_rng.permutation(len(train))
        total, n = 0.0, 0
        for s in range(0, len(order), cfg.batch_size):
            idx = order[s:s + cfg.batch_size]
            total += train_step(model, train.ctx[idx], train.act[idx], train.labels[idx], kind, opt) * len(idx)
            n += len(idx)
        losses.append(total / n)
    return model, losses


def evaluate_curve(model: MsLstmModel, test: Dataset, avg_pool: bool) -> np.ndarray:
    """Accuracy after observing k = 1..T frames (index k-1)."""
    if test.ctx.shape[2] != model.d_ctx or test.act.shape[2] != model.d_act:
        raise ShapeError(f"model expects ({model.d_ctx}, {model.d_act}) features, dataset has "
                         f"({test.ctx.shape[2]}, {test.act.shape[2]})")
    if len(test) == 0:
        raise ValueError("empty test set")
    trace = forward(model, test.ctx, test.act)
    pred = predict_curve(trace.yhat_a, avg_pool)
    return (pred == test.labels[:, None]).mean(axis=0)


def curve_rows(kind, variant, seed, curve) -> list[AccuracyRow]:
    return [AccuracyRow(LossKind(kind).value, Variant(variant).value, int(seed), k + 1, float(a))
            for k, a in enumerate(curve)]


_CELLS: dict = {}


def _cell_key(cfg: ExperimentConfig, kind, variant, seed):
    data = cfg.dataset if cfg.dataset else repr(cfg.data)
    return (data, LossKind(kind), Variant(variant), seed, cfg.epochs, cfg.lr, cfg.momentum,
            cfg.weight_decay, cfg.batch_size, cfg.hidden)


def run_cell(cfg: ExperimentConfig, kind, variant, seed) -> dict:
    """Train and evaluate one cell; returns pooled and unpooled curves (memoised)."""
    key = _cell_key(cfg, kind, variant, seed)
    if key not in _CELLS:
        t0 = time.perf_counter()
        train, test = load_data(cfg, seed)
        model, losses = run_training(cfg, train, Variant(variant), LossKind(kind), seed)
        _CELLS[key] = {
            True: evaluate_curve(model, test, True),
            False: evaluate_curve(model, test, False),
            "losses": losses,
        }
        log.info("cell %s/%s/seed=%d trained in %.1fs (final loss %.4f)",
                 LossKind(kind).value, Variant(variant).value, seed, time.perf_counter() - t0, losses[-1])
    return _CELLS[key]


def clear_cache() -> None:
    _CELLS.clear()


def run_grid(cfg: ExperimentConfig, kinds: Iterable, variants: Iterable, avg_pool: bool) -> list[AccuracyRow]:
    rows = []
    for kind in kinds:
        for variant in variants:
            for seed in cfg.seeds:
                rows += curve_rows(kind, variant, seed, run_cell(cfg, kind, variant, seed)[avg_pool])
    return sort_rows(rows)


def sort_rows(rows: Iterable[AccuracyRow]) -> list[AccuracyRow]:
    return sorted(rows, key=lambda r: (r.loss, r.variant, r.seed, r.k))


# --------------------------------------------------------------------------
# CSV


def write_csv(path, rows: Iterable[AccuracyRow]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in sort_rows(rows):
            w.writerow((r.loss, r.variant, r.seed, r.k, repr(r.accuracy)))


def read_csv(path) -> list[AccuracyRow]:
    with Path(path).open(encoding="utf-8", newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd)
        if tuple(header) != CSV_HEADER:
            raise ValueError(f"{path}: unexpected header {header}")
        return [AccuracyRow(a, b, int(c), int(d), float(e)) for a, b, c, d, e in rd]


def summarize(rows: Iterable[AccuracyRow], ks: Iterable[int] | None = None) -> list[tuple]:
    """Mean accuracy over seeds for each (loss, variant, k); ``ks`` defaults to earliest and latest."""
    groups: dict = {}
    for r in rows:
        groups.setdefault((r.loss, r.variant), {}).setdefault(r.k, []).append(r.accuracy)
    out = []
    for (loss, variant), by_k in sorted(groups.items()):
        want = sorted({1, max(by_k)}) if ks is None else sorted(ks)
        for k in want:
            vals = by_k[k]
            out.append((loss, variant, k, statistics.fmean(vals), len(vals)))
    return out


def write_summary(path, summary) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_HEADER)
        for loss, variant, k, mean, n in summary:
            w.writerow((loss, variant, k, repr(mean), n))


def summary_path(out) -> Path:
    out = Path(out)
    return out.with_name(out.stem + ".summary.csv")


def _format_summary(summary) -> str:
    return "\n".join(f"  {loss:13s} {variant:14s} k={k:<3d} mean={mean:.4f} (n={n})"
                     for loss, variant, k, mean, n in summary)


def _emit(cfg: ExperimentConfig, rows, out=None, title="") -> list[AccuracyRow]:
    out = Path(out or cfg.out)
    write_csv(out, rows)
    summary = summarize(rows)
    write_summary(summary_path(out), summary)
    log.info("%s -> %s\n%s", title, out, _format_summary(summary))
    return rows


# --------------------------------------------------------------------------
# experiments


def compare_losses(cfg: ExperimentConfig) -> dict[bool, list[AccuracyRow]]:
    """Multi-stage model under each configured loss, curves with and without pooling.

    Writes ``cfg.out`` for the configured pooling mode and ``<stem>-pool.csv``
    or ``<stem>-nopool.csv`` for the other one, each with a summary file.
    """
    variant = cfg.variants[0]
    result = {p: run_grid(cfg, cfg.losses, [variant], p) for p in (False, True)}
    out = Path(cfg.out)
    other = not cfg.avg_pool
    alt = out.with_name(f"{out.stem}-{'pool' if other else 'nopool'}{out.suffix}")
    _emit(cfg, result[cfg.avg_pool], out, "loss comparison")
    _emit(cfg, result[other], alt, "loss comparison (other pooling mode)")
    return result


def ablate_features(cfg: ExperimentConfig) -> list[AccuracyRow]:
    """Context-only LSTM, action-only LSTM and the multi-stage model, anticipation loss."""
    variants = (Variant.CONTEXT_ONLY, Variant.ACTION_ONLY, Variant.MULTI_STAGE)
    rows = run_grid(cfg, [LossKind.ANTICIPATION], variants, cfg.avg_pool)
    return _emit(cfg, rows, title="feature ablation")


def ablate_arch(cfg: ExperimentConfig) -> list[AccuracyRow]:
    """The four fusion architectures, anticipation loss."""
    rows = run_grid(cfg, [LossKind.ANTICIPATION], FUSION_VARIANTS, cfg.avg_pool)
    return _emit(cfg, rows, title="architecture ablation")


def sweep_hidden(cfg: ExperimentConfig, hidden_units: Iterable[int]) -> list[tuple]:
    """Latest-frame accuracy for each hidden size, with and without pooling.

    Returns rows ``(hidden, avg_pool, seed, k, accuracy)``.
    """
    rows = []
    for h in hidden_units:
        sub = cfg.replace(hidden=int(h))
        for seed in cfg.seeds:
            cell = run_cell(sub, cfg.losses[0], cfg.variants[0], seed)
            for pool in (False, True):
                rows += [(int(h), pool, seed, k + 1, float(a)) for k, a in enumerate(cell[pool])]
    return rows


def framewise_baseline(cfg: ExperimentConfig, seed: int, epochs: int = 300, lr: float = 0.5) -> np.ndarray:
    """Accuracy curve of a memoryless linear softmax classifier on frame k alone.

    Stand-in for a per-frame CNN classifier: one weight matrix over
    ``[ctx_t, act_t]`` trained on every training frame, full-batch.
    """
    train, test = load_data(cfg, seed)
    X = np.concatenate([train.ctx, train.act], axis=2).reshape(-1, train.ctx.shape[2] + train.act.shape[2])
    X = np.hstack([X, np.ones((len(X), 1))])
    Y = np.eye(train.n_classes)[np.repeat(train.labels, train.n_frames)]
    w = np.zeros((X.shape[1], train.n_classes))
    for _ in range(epochs):
        z = X @ w
        z -= z.max(axis=1, keepdims=True)
        p = np.exp(z)
        p /= p.sum(axis=1, keepdims=True)
        w -= lr * X.T @ (p - Y) / len(X)
    Xt = np.concatenate([test.ctx, test.act, np.ones(test.ctx.shape[:2] + (1,))], axis=2)
    pred = np.argmax(Xt @ w, axis=-1)
    return (pred == test.labels[:, None]).mean(axis=0)
