"""Per-sequence anticipation losses and their gradients w.r.t. probabilities.

All functions take a label array ``y`` and prediction array ``p`` of shape
``(..., T, N)`` (leading axes are batch axes) and return ``(loss, grad)``
where ``loss`` has the leading shape and ``grad`` has the shape of ``p``.
Frames are indexed t = 1..T.
"""

from __future__ import annotations

from enum import Enum

import numpy as np

from .numeric import ShapeError

EPS = 1e-7


class LossKind(str, Enum):
    ANTICIPATION = "anticipation"
    CE = "ce"
    ECE = "ece"
    LGL = "lgl"

    @classmethod
    def parse(cls, s: str) -> "LossKind":
        try:
            return cls(s.strip().lower())
        except ValueError:
            raise ValueError(f"unknown loss kind {s!r}; expected one of "
                             f"{[k.value for k in cls]}") from None


def one_hot_sequence(label: int, n_classes: int, n_frames: int) -> np.ndarray:
    y = np.zeros((n_frames, n_classes))
    y[:, label] = 1.0
    return y


def _prepare(y, p):
    y = np.asarray(y, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    if y.shape != p.shape or y.ndim < 2:
        raise ShapeError(f"labels {y.shape} and predictions {p.shape} must agree as (..., T, N)")
    if not np.all((y == 0.0) | (y == 1.0)) or not np.all(y.sum(axis=-1) == 1.0):
        raise ValueError("labels must be one-hot in every frame")
    if not np.all(y == y[..., :1, :]):
        raise ValueError("label must be constant across frames")
    pc = np.clip(p, EPS, 1.0 - EPS)
    inside = (p >= EPS) & (p <= 1.0 - EPS)
    return y, pc, inside


def _bce_terms(y, pc):
    """Per-frame sums over classes: (true-class log term, false-class log term)."""
    pos = (y * np.log(pc)).sum(axis=-1)
    neg = ((1.0 - y) * np.log(1.0 - pc)).sum(axis=-1)
    return pos, neg


def _frame_sum(per_frame: np.ndarray) -> np.ndarray:
    # sequential over t so single-frame sequences reduce exactly
    out = per_frame[..., 0].copy()
    for t in range(1, per_frame.shape[-1]):
        out += per_frame[..., t]
    return out


def anticipation_loss(y, p):
    """False negatives weighted 1 throughout; false positives weighted t/T."""
    y, pc, inside = _prepare(y, p)
    T, N = y.shape[-2:]
    w = np.arange(1, T + 1) / T
    pos, neg = _bce_terms(y, pc)
    loss = -_frame_sum(pos + w * neg) / N
    grad = -(y / pc - w[:, None] * (1.0 - y) / (1.0 - pc)) / N
    return loss, grad * inside


def _weighted_bce(y, p, weights):
    y, pc, inside = _prepare(y, p)
    pos, neg = _bce_terms(y, pc)
    w = weights(y.shape[-2])
    loss = _frame_sum(-(w * (pos + neg)))
    grad = -w[:, None] * (y / pc - (1.0 - y) / (1.0 - pc))
    return loss, grad * inside


def ce_loss(y, p):
    """Binary cross-entropy summed over classes at the final frame only."""
    return _weighted_bce(y, p, lambda T: (np.arange(1, T + 1) == T).astype(np.float64))


def ece_loss(y, p):
    """Frame-wise cross-entropy weighted by exp(-(T - t))."""
    return _weighted_bce(y, p, lambda T: np.exp(-(T - np.arange(1, T + 1.0))))


def lgl_loss(y, p):
    """Frame-wise cross-entropy weighted by t / T."""
    return _weighted_bce(y, p, lambda T: np.arange(1, T + 1) / T)


LOSSES = {
    LossKind.ANTICIPATION: anticipation_loss,
    LossKind.CE: ce_loss,
    LossKind.ECE: ece_loss,
    LossKind.LGL: lgl_loss,
}


def loss_dispatch(kind: LossKind | str, y, p):
    return LOSSES[LossKind(kind)](y, p)
