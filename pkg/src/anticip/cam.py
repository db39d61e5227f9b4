"""Class activation maps and the action-aware masking layer.

An activation volume is an ``(H, W, L)`` array: ``f[x, y, l]`` is unit
``l`` at spatial location ``(x, y)``.  Class weights are ``(L, N)``.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .numeric import ShapeError


def _volume(f) -> np.ndarray:
    f = np.asarray(f, dtype=np.float64)
    if f.ndim != 3 or min(f.shape) < 1:
        raise ShapeError(f"activation volume must be (H, W, L) with all extents >= 1, got {f.shape}")
    return f


def gap_features(f) -> np.ndarray:
    """Per-unit spatial *sum* of activations (length L).

    This is the plain sum, not the mean: the two differ by the constant
    H*W, which scales every class score equally.
    """
    f = _volume(f)
    return f.sum(axis=(0, 1))


def class_scores(F, w) -> np.ndarray:
    F = np.asarray(F, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 2 or F.shape != (w.shape[0],):
        raise ShapeError(f"features {F.shape} do not match class weights {w.shape}")
    return F @ w


def cam_map(f, w, k: int) -> np.ndarray:
    """``M_k(x, y) = sum_l w[l, k] * f[x, y, l]`` as an (H, W) map."""
    f = _volume(f)
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 2 or w.shape[0] != f.shape[2]:
        raise ShapeError(f"class weights {w.shape} do not match {f.shape[2]} units")
    if not 0 <= k < w.shape[1]:
        raise ValueError(f"class index {k} outside 0..{w.shape[1] - 1}")
    return f @ w[:, k]


def action_aware_mask(conv, cam) -> np.ndarray:
    """Scale every channel of ``conv`` at (x, y) by ``max(0, cam[x, y])``."""
    conv = _volume(conv)
    cam = np.asarray(cam, dtype=np.float64)
    if cam.shape != conv.shape[:2]:
        raise ShapeError(f"CAM {cam.shape} does not match spatial extent {conv.shape[:2]}")
    return conv * np.maximum(cam, 0.0)[:, :, None]


def select_cam_class(scores) -> int:
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 1 or scores.size == 0:
        raise ValueError("need a non-empty score vector")
    return int(np.argmax(scores))  # first maximum wins ties


def fit_class_weights(volumes: np.ndarray, labels: np.ndarray, n_classes: int,
                      epochs: int = 200, lr: float = 0.1) -> np.ndarray:
    """Train (L, N) weights as a softmax classifier over GAP features.

    Features are standardised by their global scale only, so the resulting
    weights still act on raw activations.  Full-batch gradient descent.
    """
    F = np.stack([gap_features(v) for v in volumes])
    scale = np.abs(F).max() or 1.0
    X = F / scale
    Y = np.eye(n_classes)[np.asarray(labels)]
    w = np.zeros((X.shape[1], n_classes))
    for _ in range(epochs):
        z = X @ w
        z -= z.max(axis=1, keepdims=True)
        p = np.exp(z)
        p /= p.sum(axis=1, keepdims=True)
        w -= lr * X.T @ (p - Y) / len(X)
    return w / scale


# --------------------------------------------------------------------------
# text formats


class ParseError(ValueError):
    def __init__(self, source, line: int, msg: str):
        super().__init__(f"{source}:{line}: {msg}")
        self.line = line


def _numbers(source, ln: int, text: str, count: int | None = None, kind=float):
    try:
        vals = [kind(tok) for tok in text.split()]
    except ValueError:
        raise ParseError(source, ln, f"non-numeric value in {text!r}") from None
    if count is not None and len(vals) != count:
        raise ParseError(source, ln, f"expected {count} values, got {len(vals)}")
    return vals


def format_volume(f) -> str:
    f = _volume(f)
    H, W, L = f.shape
    lines = [f"{H} {W} {L}"]
    lines += [" ".join(repr(float(v)) for v in f[x, y]) for x in range(H) for y in range(W)]
    return "\n".join(lines) + "\n"


def parse_volume(text: str, source="<volume>") -> np.ndarray:
    lines = text.splitlines()
    if not lines:
        raise ParseError(source, 1, "empty file")
    H, W, L = _numbers(source, 1, lines[0], 3, int)
    if min(H, W, L) < 1:
        raise ParseError(source, 1, "extents must be >= 1")
    if len(lines) < 1 + H * W:
        raise ParseError(source, len(lines) + 1, f"expected {H * W} rows of activations")
    f = np.empty((H, W, L))
    for i in range(H * W):
        f[i // W, i % W] = _numbers(source, i + 2, lines[i + 1], L)
    return f


def format_weights(w) -> str:
    w = np.asarray(w, dtype=np.float64)
    lines = [f"{w.shape[0]} {w.shape[1]}"]
    lines += [" ".join(repr(float(v)) for v in row) for row in w]
    return "\n".join(lines) + "\n"


def parse_weights(text: str, source="<weights>") -> np.ndarray:
    lines = text.splitlines()
    if not lines:
        raise ParseError(source, 1, "empty file")
    L, N = _numbers(source, 1, lines[0], 2, int)
    if len(lines) < 1 + L:
        raise ParseError(source, len(lines) + 1, f"expected {L} rows of class weights")
    return np.array([_numbers(source, i + 2, lines[i + 1], N) for i in range(L)]).reshape(L, N)


def read_volume(path) -> np.ndarray:
    return parse_volume(Path(path).read_text(encoding="utf-8"), source=path)


def read_weights(path) -> np.ndarray:
    return parse_weights(Path(path).read_text(encoding="utf-8"), source=path)


def heatmap_pgm(m, maxval: int = 255) -> str:
    """Min-max normalised ASCII PGM (P2).  A constant map renders all zeros."""
    m = np.asarray(m, dtype=np.float64)
    lo, hi = m.min(), m.max()
    g = np.zeros(m.shape, dtype=np.int64) if hi == lo else \
        np.rint((m - lo) / (hi - lo) * maxval).astype(np.int64)
    rows = [" ".join(str(v) for v in row) for row in g]
    return f"P2\n{m.shape[1]} {m.shape[0]}\n{maxval}\n" + "\n".join(rows) + "\n"
