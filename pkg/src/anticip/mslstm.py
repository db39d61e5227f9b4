"""Multi-stage LSTM classifier, its fusion-ablation variants, and inference.

A model is a flat ``dict[str, ndarray]`` of parameters plus its wiring
(``variant``).  Parameter names::

    stage1.{W,U,b}   first (or only) LSTM
    fc1.{W,b}        stage-1 softmax head (two-stage variants only)
    stage2.{W,U,b}   second LSTM (two-stage and parallel variants)
    fc2.{W,b}        final softmax head

Wiring per variant (x_c = context features, x_a = action features):

    multistage      h1 = LSTM1(x_c);  y_c = fc1(h1);  y_a = fc2(LSTM2([h1, x_a]))
    swapped         as multistage with x_c and x_a exchanged
    concatenation   y_a = fc2(LSTM1([x_c, x_a]))
    parallel        y_a = fc2([LSTM1(x_c), LSTM2(x_a)])
    context_only    y_a = fc2(LSTM1(x_c))
    action_only     y_a = fc2(LSTM1(x_a))

The last two are the single-stream baselines of the feature ablation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .losses import LossKind, loss_dispatch
from .numeric import (LstmCache, LstmParams, SgdState, ShapeError, SplitMix64, StateError,
                      glorot_uniform, load_checkpoint, lstm_backward, lstm_run, save_checkpoint,
                      sgd_update, softmax, softmax_backward)


class Variant(str, Enum):
    MULTI_STAGE = "multistage"
    SWAPPED = "swapped"
    CONCATENATION = "concatenation"
    PARALLEL = "parallel"
    CONTEXT_ONLY = "context_only"
    ACTION_ONLY = "action_only"

    @property
    def two_stage(self) -> bool:
        return self in (Variant.MULTI_STAGE, Variant.SWAPPED)


FUSION_VARIANTS = (Variant.MULTI_STAGE, Variant.SWAPPED, Variant.CONCATENATION, Variant.PARALLEL)


@dataclass
class MsLstmModel:
    n_classes: int
    d_ctx: int
    d_act: int
    hidden: int
    variant: Variant = Variant.MULTI_STAGE
    params: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        self.variant = Variant(self.variant)
        if self.n_classes < 2 or self.hidden < 1:
            raise ValueError("need n_classes >= 2 and hidden >= 1")
        expected = param_shapes(self.variant, self.n_classes, self.d_ctx, self.d_act, self.hidden)
        if self.params:
            for name, shape in expected.items():
                if name not in self.params or self.params[name].shape != shape:
                    got = self.params[name].shape if name in self.params else None
                    raise ShapeError(f"parameter {name}: expected {shape}, got {got}")
            if set(self.params) != set(expected):
                raise ShapeError(f"unexpected parameters {sorted(set(self.params) - set(expected))}")

    @classmethod
    def init(cls, n_classes, d_ctx, d_act, hidden, variant=Variant.MULTI_STAGE, seed: int = 0):
        variant = Variant(variant)
        rng = SplitMix64(seed).substream("init")
        params = {}
        for name, shape in param_shapes(variant, n_classes, d_ctx, d_act, hidden).items():
            if name.endswith(".W") and name.startswith("stage"):
                lp = LstmParams.init(rng, shape[1], hidden)
                prefix = name[:-2]
                params[prefix + ".W"], params[prefix + ".U"], params[prefix + ".b"] = lp.W, lp.U, lp.b
            elif name.startswith("fc") and name.endswith(".W"):
                params[name] = glorot_uniform(rng, *shape)
                params[name[:-2] + ".b"] = np.zeros(n_classes)
        return cls(n_classes, d_ctx, d_act, hidden, variant, params)

    def lstm(self, stage: str) -> LstmParams:
        p = self.params
        return LstmParams(p[stage + ".W"], p[stage + ".U"], p[stage + ".b"])

    def copy(self) -> "MsLstmModel":
        return MsLstmModel(self.n_classes, self.d_ctx, self.d_act, self.hidden, self.variant,
                           {k: v.copy() for k, v in self.params.items()})

    # -- persistence -------------------------------------------------------

    def header(self) -> str:
        return f"mslstm {self.n_classes} {self.d_ctx} {self.d_act} {self.hidden} {self.variant.value}"

    def save(self, path) -> None:
        blocks = {k: (v[None, :] if v.ndim == 1 else v) for k, v in self.params.items()}
        save_checkpoint(path, blocks, header=self.header())

    @classmethod
    def load(cls, path) -> "MsLstmModel":
        header, blocks = load_checkpoint(path, has_header=True)
        parts = header.split()
        if len(parts) != 6 or parts[0] != "mslstm":
            raise ValueError(f"{path}:1: bad model header {header!r}")
        n, dc, da, h = (int(x) for x in parts[1:5])
        params = {k: (v[0] if k.endswith(".b") else v) for k, v in blocks.items()}
        return cls(n, dc, da, h, Variant(parts[5]), params)


def param_shapes(variant: Variant, N: int, d_ctx: int, d_act: int, H: int) -> dict[str, tuple]:
    def lstm(name, d):
        return {f"{name}.W": (4 * H, d), f"{name}.U": (4 * H, H), f"{name}.b": (4 * H,)}

    def fc(name, d):
        return {f"{name}.W": (N, d), f"{name}.b": (N,)}

    variant = Variant(variant)
    if variant.two_stage:
        d1, d2 = (d_ctx, d_act) if variant is Variant.MULTI_STAGE else (d_act, d_ctx)
        return {**lstm("stage1", d1), **fc("fc1", H), **lstm("stage2", H + d2), **fc("fc2", H)}
    if variant is Variant.CONCATENATION:
        return {**lstm("stage1", d_ctx + d_act), **fc("fc2", H)}
    if variant is Variant.PARALLEL:
        return {**lstm("stage1", d_ctx), **lstm("stage2", d_act), **fc("fc2", 2 * H)}
    d = d_ctx if variant is Variant.CONTEXT_ONLY else d_act
    return {**lstm("stage1", d), **fc("fc2", H)}


@dataclass
class ForwardTrace:
    """Per-frame class probabilities plus whatever backprop needs.

    ``yhat_c`` is ``None`` for single-series variants.  Arrays are
    ``(B, T, N)``; :func:`forward` squeezes B for single-sample input.
    """

    yhat_a: np.ndarray
    yhat_c: np.ndarray | None
    caches: dict = field(default_factory=dict, repr=False)


def _as_batch(x, d, what):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 2
    if single:
        x = x[None]
    if x.ndim != 3 or x.shape[2] != d or x.shape[1] < 1:
        raise ShapeError(f"{what}: expected (T, {d}) or (B, T, {d}), got {x.shape}")
    return x, single


def _head(params, name, h):
    return h @ params[name + ".W"].T + params[name + ".b"]


def forward(model: MsLstmModel, ctx, act) -> ForwardTrace:
    ctx, single = _as_batch(ctx, model.d_ctx, "context features")
    act, _ = _as_batch(act, model.d_act, "action features")
    if ctx.shape[:2] != act.shape[:2]:
        raise ShapeError(f"context {ctx.shape[:2]} and action {act.shape[:2]} streams disagree")
    trace = _forward_batch(model, ctx.transpose(1, 0, 2), act.transpose(1, 0, 2))
    if single:
        trace.yhat_a = trace.yhat_a[0]
        trace.yhat_c = None if trace.yhat_c is None else trace.yhat_c[0]
        trace.caches["single"] = True
    return trace


def _forward_batch(model: MsLstmModel, xc: np.ndarray, xa: np.ndarray) -> ForwardTrace:
    """``xc``, ``xa`` are time-major (T, B, D)."""
    p, v = model.params, model.variant
    caches: dict = {}
    yc = None
    if v.two_stage:
        x1, x2 = (xc, xa) if v is Variant.MULTI_STAGE else (xa, xc)
        c1 = caches["stage1"] = lstm_run(model.lstm("stage1"), x1)
        h1 = c1.h[1:]
        yc = softmax(_head(p, "fc1", h1))
        c2 = caches["stage2"] = lstm_run(model.lstm("stage2"), np.concatenate([h1, x2], axis=-1))
        top = c2.h[1:]
    elif v is Variant.PARALLEL:
        c1 = caches["stage1"] = lstm_run(model.lstm("stage1"), xc)
        c2 = caches["stage2"] = lstm_run(model.lstm("stage2"), xa)
        top = np.concatenate([c1.h[1:], c2.h[1:]], axis=-1)
    else:
        x = {Variant.CONCATENATION: lambda: np.concatenate([xc, xa], axis=-1),
             Variant.CONTEXT_ONLY: lambda: xc,
             Variant.ACTION_ONLY: lambda: xa}[v]()
        c1 = caches["stage1"] = lstm_run(model.lstm("stage1"), x)
        top = c1.h[1:]
    caches["top"] = top
    ya = softmax(_head(p, "fc2", top))
    if yc is not None:
        caches["h1"] = h1
    # batch-major outputs
    return ForwardTrace(ya.transpose(1, 0, 2), None if yc is None else yc.transpose(1, 0, 2), caches)


def backward(model: MsLstmModel, trace: ForwardTrace | None, d_ya, d_yc=None) -> dict[str, np.ndarray]:
    """Gradients of every parameter given dL/dyhat for each output series.

    ``d_ya``/``d_yc`` have the (B, T, N) layout of the trace; ``d_yc`` is
    ignored for single-series variants.
    """
    if trace is None or "top" not in trace.caches:
        raise StateError("backward called before forward")
    if trace.caches.get("single"):
        raise StateError("backward needs a batched trace; call forward with (B, T, D) inputs")
    p, v, H = model.params, model.variant, model.hidden
    grads: dict[str, np.ndarray] = {}
    ya = trace.yhat_a.transpose(1, 0, 2)
    dza = softmax_backward(ya, np.asarray(d_ya).transpose(1, 0, 2))
    top = trace.caches["top"]
    grads["fc2.W"] = np.einsum("tbn,tbh->nh", dza, top)
    grads["fc2.b"] = dza.sum(axis=(0, 1))
    dtop = dza @ p["fc2.W"]

    def lstm_grads(stage, dh):
        dx, g = lstm_backward(model.lstm(stage), trace.caches[stage], dh)
        grads[stage + ".W"], grads[stage + ".U"], grads[stage + ".b"] = g.W, g.U, g.b
        return dx

    if v.two_stage:
        dx2 = lstm_grads("stage2", dtop)
        dh1 = dx2[..., :H]
        if d_yc is not None:
            yc = trace.yhat_c.transpose(1, 0, 2)
            dzc = softmax_backward(yc, np.asarray(d_yc).transpose(1, 0, 2))
            h1 = trace.caches["h1"]
            grads["fc1.W"] = np.einsum("tbn,tbh->nh", dzc, h1)
            grads["fc1.b"] = dzc.sum(axis=(0, 1))
            dh1 = dh1 + dzc @ p["fc1.W"]
        else:
            grads["fc1.W"] = np.zeros_like(p["fc1.W"])
            grads["fc1.b"] = np.zeros_like(p["fc1.b"])
        lstm_grads("stage1", dh1)
    elif v is Variant.PARALLEL:
        lstm_grads("stage1", dtop[..., :H])
        lstm_grads("stage2", dtop[..., H:])
    else:
        lstm_grads("stage1", dtop)
    return grads


# --------------------------------------------------------------------------
# loss over a batch


def label_array(labels, n_classes: int, n_frames: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    y = np.zeros((labels.size, n_frames, n_classes))
    y[np.arange(labels.size), :, labels] = 1.0
    return y


def overall_loss(kind: LossKind | str, trace: ForwardTrace, y: np.ndarray, with_grad: bool = False):
    """Mean over samples of stage-1 loss plus final-stage loss.

    ``y`` is (V, T, N) one-hot.  Single-series variants contribute only the
    final-series term.  With ``with_grad`` returns ``(L, d_ya, d_yc)``.
    """
    y = np.asarray(y, dtype=np.float64)
    if y.ndim == 2:
        y = y[None]
    V = y.shape[0]
    if V == 0:
        raise ValueError("overall_loss over an empty batch")
    ya = trace.yhat_a if trace.yhat_a.ndim == 3 else trace.yhat_a[None]
    la, ga = loss_dispatch(kind, y, ya)
    total = la
    gc = None
    if trace.yhat_c is not None:
        yc = trace.yhat_c if trace.yhat_c.ndim == 3 else trace.yhat_c[None]
        lc, gc = loss_dispatch(kind, y, yc)
        total = lc + la
        gc = gc / V
    L = float(total.sum() / V)
    if with_grad:
        return L, ga / V, gc
    return L


def loss_and_grads(model: MsLstmModel, kind, ctx, act, labels):
    """Batch loss and parameter gradients. ``ctx``/``act`` are (B, T, D)."""
    trace = forward(model, np.asarray(ctx), np.asarray(act))
    y = label_array(labels, model.n_classes, trace.yhat_a.shape[1])
    L, ga, gc = overall_loss(kind, trace, y, with_grad=True)
    return L, backward(model, trace, ga, gc)


def train_step(model: MsLstmModel, ctx, act, labels, kind, opt: SgdState) -> float:
    """One SGD step on a mini-batch; mutates ``model.params``; returns the pre-step loss."""
    L, grads = loss_and_grads(model, kind, ctx, act, labels)
    sgd_update(model.params, grads, opt)
    return L


# --------------------------------------------------------------------------
# inference


def pooled_predictions(yhat: np.ndarray) -> np.ndarray:
    """Running mean of per-frame probabilities along the frame axis (-2)."""
    csum = np.cumsum(yhat, axis=-2)
    counts = np.arange(1, yhat.shape[-2] + 1, dtype=np.float64)[:, None]
    return csum / counts


def infer(trace_or_yhat, t: int, avg_pool: bool = True):
    """Class at frame ``t`` (1-based) and the probability vector it came from.

    Only the final-stage series is used.  Pooling averages probabilities
    over frames 1..t, accumulated in frame order.
    """
    yhat = trace_or_yhat.yhat_a if isinstance(trace_or_yhat, ForwardTrace) else np.asarray(trace_or_yhat)
    if yhat.ndim != 2:
        raise ShapeError(f"infer expects a single (T, N) series, got {yhat.shape}")
    T = yhat.shape[0]
    if not 1 <= t <= T:
        raise ValueError(f"frame index {t} outside 1..{T}")
    if avg_pool:
        acc = yhat[0].copy()
        for s in range(1, t):
            acc += yhat[s]
        vec = acc / t
    else:
        vec = yhat[t - 1].copy()
    return int(np.argmax(vec)), vec


def predict_curve(yhat: np.ndarray, avg_pool: bool) -> np.ndarray:
    """(B, T) predicted classes for every prefix length k = 1..T."""
    probs = pooled_predictions(yhat) if avg_pool else yhat
    return np.argmax(probs, axis=-1)
