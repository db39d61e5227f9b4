"""Synthetic anticipation benchmark with early-frame ambiguity.

Every class k belongs to a confusable group.  Per stream, a frame is

    x_t = (1 - r(t)) * g(k) + r(t) * p(k) + noise

with ``g(k)`` shared by all classes of a group and ``p(k)`` the class
prototype.  The context stream is group-heavy (its class-specific part is
scaled by ``ctx_class_weight``); the action stream is class-heavy with a
weaker group part (``act_group_weight``).  Early frames therefore reveal
the group from context, and only a faint class cue from action.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .numeric import SplitMix64


@dataclass
class SyntheticConfig:
    n_classes: int = 5
    n_frames: int = 20
    d_ctx: int = 16
    d_act: int = 16
    v_train: int = 500
    v_test: int = 200
    noise_sigma: float = 0.5
    noise_corr: float = 0.0  # AR(1) coefficient of the per-frame noise
    groups: tuple = ((0, 1, 2), (3, 4))
    ramp_start: float = 0.15
    ramp_frames: int = 12
    ramp: tuple | None = None  # explicit r(1..T); overrides ramp_start/ramp_frames
    proto_scale: float = 1.0  # norm of every group / class prototype direction
    ctx_class_weight: float = 0.35
    act_group_weight: float = 0.3

    def __post_init__(self):
        if self.n_classes < 2:
            raise ValueError("need at least two classes")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if not 0.0 <= self.noise_corr < 1.0:
            raise ValueError("noise_corr must lie in [0, 1)")
        self.groups = tuple(tuple(int(k) for k in g) for g in self.groups)
        flat = sorted(k for g in self.groups for k in g)
        if flat != list(range(self.n_classes)):
            raise ValueError(f"groups {self.groups} must partition 0..{self.n_classes - 1}")
        r = self.ramp_values()
        if r.shape != (self.n_frames,) or np.any(np.diff(r) < 0) or r[-1] != 1.0 or np.any(r < 0):
            raise ValueError("ramp must be nondecreasing in [0, 1] with r(T) = 1")

    def ramp_values(self) -> np.ndarray:
        if self.ramp is not None:
            return np.asarray(self.ramp, dtype=np.float64)
        T = self.n_frames
        n = min(self.ramp_frames, T)  # the ramp always completes by the last frame
        if n <= 1:
            return np.ones(T)
        t = np.arange(T, dtype=np.float64)
        return np.minimum(1.0, self.ramp_start + (1.0 - self.ramp_start) * t / (n - 1))

    def group_of(self) -> np.ndarray:
        out = np.empty(self.n_classes, dtype=np.int64)
        for gi, g in enumerate(self.groups):
            out[list(g)] = gi
        return out


@dataclass
class Dataset:
    """A set of labelled sequences, stored as stacked arrays."""

    ctx: np.ndarray      # (V, T, D_ctx)
    act: np.ndarray      # (V, T, D_act)
    labels: np.ndarray   # (V,)
    n_classes: int

    def __len__(self):
        return len(self.labels)

    @property
    def n_frames(self) -> int:
        return self.ctx.shape[1]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.ctx[idx], self.act[idx], self.labels[idx], self.n_classes)


@dataclass
class Prototypes:
    ctx_early: np.ndarray  # g(k) per class, context stream
    ctx_class: np.ndarray  # p(k)
    act_early: np.ndarray
    act_class: np.ndarray


def _unit_rows(rng: SplitMix64, rows: int, d: int) -> np.ndarray:
    m = rng.normal((rows, d))
    return m / np.linalg.norm(m, axis=1, keepdims=True)


def prototypes(cfg: SyntheticConfig, rng: SplitMix64) -> Prototypes:
    grp = cfg.group_of()
    sc = cfg.proto_scale
    n_groups = len(cfg.groups)
    g_ctx = sc * _unit_rows(rng.substream("group-ctx"), n_groups, cfg.d_ctx)[grp]
    g_act = sc * _unit_rows(rng.substream("group-act"), n_groups, cfg.d_act)[grp]
    q_ctx = sc * _unit_rows(rng.substream("class-ctx"), cfg.n_classes, cfg.d_ctx)
    q_act = sc * _unit_rows(rng.substream("class-act"), cfg.n_classes, cfg.d_act)
    return Prototypes(
        ctx_early=g_ctx,
        ctx_class=g_ctx + cfg.ctx_class_weight * q_ctx,
        act_early=cfg.act_group_weight * g_act,
        act_class=q_act + cfg.act_group_weight * g_act,
    )


def _sample(cfg: SyntheticConfig, protos: Prototypes, rng: SplitMix64, n: int) -> Dataset:
    # balanced labels, then shuffled
    labels = np.arange(n) % cfg.n_classes
    labels = labels[rng.permutation(n)]
    r = cfg.ramp_values()[None, :, None]
    T = cfg.n_frames

    def stream(early, cls, d, name):
        base = (1.0 - r) * early[labels][:, None, :] + r * cls[labels][:, None, :]
        if cfg.noise_sigma == 0:
            return base
        e = rng.substream(name).normal((n, T, d))
        rho = cfg.noise_corr
        if rho:
            # stationary AR(1): marginal std stays noise_sigma at every frame
            for t in range(1, T):
                e[:, t] = rho * e[:, t - 1] + np.sqrt(1.0 - rho * rho) * e[:, t]
        return base + cfg.noise_sigma * e

    ctx = stream(protos.ctx_early, protos.ctx_class, cfg.d_ctx, "noise-ctx")
    act = stream(protos.act_early, protos.act_class, cfg.d_act, "noise-act")
    return Dataset(ctx, act, labels.astype(np.int64), cfg.n_classes)


def generate(cfg: SyntheticConfig, seed: int) -> tuple[Dataset, Dataset]:
    """Train and test sets, a pure function of ``(cfg, seed)``."""
    root = SplitMix64(seed).substream("synthetic")
    protos = prototypes(cfg, root.substream("prototypes"))
    train = _sample(cfg, protos, root.substream("train"), cfg.v_train)
    test = _sample(cfg, protos, root.substream("test"), cfg.v_test)
    return train, test


# --------------------------------------------------------------------------
# text format


def format_dataset(ds: Dataset) -> str:
    V, T, dc = ds.ctx.shape
    da = ds.act.shape[2]
    out = [f"{ds.n_classes} {T} {dc} {da} {V}"]
    for i in range(V):
        out.append(f"label {int(ds.labels[i])}")
        out += [" ".join(repr(float(v)) for v in row) for row in ds.ctx[i]]
        out += [" ".join(repr(float(v)) for v in row) for row in ds.act[i]]
    return "\n".join(out) + "\n"


def save_dataset(path, ds: Dataset) -> None:
    Path(path).write_text(format_dataset(ds), encoding="utf-8", newline="\n")


def load_dataset(path) -> Dataset:
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise OSError(f"cannot read dataset {path}: {e.strerror}") from e

    def err(ln, msg):
        return ValueError(f"{path}:{ln + 1}: {msg}")

    try:
        N, T, dc, da, V = (int(x) for x in lines[0].split())
    except (ValueError, IndexError):
        raise err(0, "expected header 'N T D_ctx D_act V'") from None
    ctx = np.empty((V, T, dc))
    act = np.empty((V, T, da))
    labels = np.empty(V, dtype=np.int64)
    ln = 1
    for i in range(V):
        if ln >= len(lines):
            raise err(ln, "unexpected end of file")
        parts = lines[ln].split()
        if len(parts) != 2 or parts[0] != "label":
            raise err(ln, f"expected 'label k', got {lines[ln]!r}")
        labels[i] = int(parts[1])
        if not 0 <= labels[i] < N:
            raise err(ln, f"label {labels[i]} outside 0..{N - 1}")
        ln += 1
        for arr, d in ((ctx, dc), (act, da)):
            for t in range(T):
                if ln >= len(lines):
                    raise err(ln, "unexpected end of file")
                try:
                    row = [float(x) for x in lines[ln].split()]
                except ValueError:
                    raise err(ln, "non-numeric feature value") from None
                if len(row) != d:
                    raise err(ln, f"expected {d} values, got {len(row)}")
                arr[i, t] = row
                ln += 1
    return Dataset(ctx, act, labels, N)
