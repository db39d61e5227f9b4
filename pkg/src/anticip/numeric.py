"""Dense numeric core: matrices, activations, a batched LSTM with BPTT, SGD.

Everything is float64 numpy.  Arrays laid out as ``(T, B, D)`` inside the
recurrent code; the public single-sample helpers accept plain vectors too.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

GATES = ("i", "f", "o", "g")

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


class StateError(RuntimeError):
    """Raised when an operation is called out of order."""


def _check_finite(x: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(x)):
        raise FloatingPointError(f"{what} produced non-finite values")
    return x


# --------------------------------------------------------------------------
# deterministic RNG


def fnv1a64(name: str) -> int:
    h = 0xCBF29CE484222325
    for byte in name.encode("utf-8"):
        h ^= byte
        h = (h * 0x100000001B3) & _MASK64
    return h


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


class SplitMix64:
    """Counter-based splitmix64 generator, vectorised over numpy uint64.

    Sub-streams are seeded with ``splitmix64(seed ^ fnv1a64(name))`` so that
    named streams are independent of the order in which they are requested.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK64
        self._state = np.uint64(self.seed)

    def substream(self, name: str) -> "SplitMix64":
        start = np.array([self.seed ^ fnv1a64(name)], dtype=np.uint64)
        return SplitMix64(int(_mix(start + _GAMMA)[0]))

    def next_u64(self, n: int) -> np.ndarray:
        with np.errstate(over="ignore"):
            steps = np.arange(1, n + 1, dtype=np.uint64)
            states = self._state + steps * _GAMMA
            if n:
                self._state = states[-1]
            return _mix(states)

    def uniform(self, size=None, low: float = 0.0, high: float = 1.0):
        shape = () if size is None else size
        n = int(np.prod(shape))
        u = (self.next_u64(n) >> np.uint64(11)).astype(np.float64) * 2.0**-53
        out = low + (high - low) * u
        return float(out[0]) if size is None else out.reshape(shape)

    def normal(self, size) -> np.ndarray:
        """Standard normals via Box-Muller (one pair of uniforms per draw)."""
        n = int(np.prod(size))
        u1 = 1.0 - self.uniform(n)  # in (0, 1]
        u2 = self.uniform(n)
        z = np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)
        return z.reshape(size)

    def integers(self, high: int, size=None):
        u = self.uniform(size)
        if size is None:
            return min(int(u * high), high - 1)
        return np.minimum((u * high).astype(np.int64), high - 1)

    def permutation(self, n: int) -> np.ndarray:
        # stable argsort keeps this deterministic even on (astronomically rare) ties
        return np.argsort(self.uniform(n), kind="stable")


# --------------------------------------------------------------------------
# linear algebra and activations


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product with the inner index accumulated in ascending order.

    Matches a naive triple loop bit-for-bit.  The training path uses ``@``
    directly; this is the reference product.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    out = np.zeros((a.shape[0], b.shape[1]))
    for j in range(a.shape[1]):
        out += a[:, j:j + 1] * b[j:j + 1, :]
    return _check_finite(out, "matmul")


def sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def softmax(v: np.ndarray) -> np.ndarray:
    """Softmax over the last axis, max-shifted for stability."""
    v = np.asarray(v, dtype=np.float64)
    if v.size == 0 or v.shape[-1] == 0:
        raise ValueError("softmax of an empty vector")
    z = np.exp(v - v.max(axis=-1, keepdims=True))
    return z / z.sum(axis=-1, keepdims=True)


def softmax_backward(p: np.ndarray, dp: np.ndarray) -> np.ndarray:
    """Vector-Jacobian product of softmax over the last axis."""
    return p * (dp - (dp * p).sum(axis=-1, keepdims=True))


def glorot_uniform(rng: SplitMix64, rows: int, cols: int, fan_in=None, fan_out=None) -> np.ndarray:
    fan_in = cols if fan_in is None else fan_in
    fan_out = rows if fan_out is None else fan_out
    s = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform((rows, cols), -s, s)


# --------------------------------------------------------------------------
# LSTM


@dataclass
class LstmParams:
    """Standard LSTM (no peepholes), gates stacked in the order i, f, o, g.

    ``W`` is (4H, D), ``U`` is (4H, H), ``b`` is (4H,).  The per-gate blocks
    ``W_i``, ``U_f``, ``b_o`` ... are views into the stacked arrays.
    """

    W: np.ndarray
    U: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        h4, d = self.W.shape
        if h4 % 4 or self.U.shape != (h4, h4 // 4) or self.b.shape != (h4,):
            raise ShapeError(f"inconsistent LSTM shapes W{self.W.shape} U{self.U.shape} b{self.b.shape}")

    @property
    def input_dim(self) -> int:
        return self.W.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.U.shape[1]

    def gate(self, name: str, which: str) -> np.ndarray:
        k = GATES.index(which)
        h = self.hidden_dim
        return getattr(self, name)[k * h:(k + 1) * h]

    def __getattr__(self, item):
        # W_i, U_g, b_f, ...
        if len(item) == 3 and item[0] in "WUb" and item[1] == "_" and item[2] in GATES:
            return self.gate(item[0], item[2])
        raise AttributeError(item)

    @classmethod
    def zeros(cls, input_dim: int, hidden_dim: int) -> "LstmParams":
        return cls(np.zeros((4 * hidden_dim, input_dim)), np.zeros((4 * hidden_dim, hidden_dim)),
                   np.zeros(4 * hidden_dim))

    @classmethod
    def init(cls, rng: SplitMix64, input_dim: int, hidden_dim: int) -> "LstmParams":
        H = hidden_dim
        W = np.concatenate([glorot_uniform(rng, H, input_dim) for _ in GATES])
        U = np.concatenate([glorot_uniform(rng, H, H) for _ in GATES])
        b = np.zeros(4 * H)
        b[H:2 * H] = 1.0  # forget gate
        return cls(W, U, b)


def lstm_step(p: LstmParams, x, h_prev, c_prev):
    """One LSTM step.  Works on vectors or on (B, .) batches."""
    x, h_prev, c_prev = (np.asarray(a, dtype=np.float64) for a in (x, h_prev, c_prev))
    H = p.hidden_dim
    if x.shape[-1] != p.input_dim or h_prev.shape[-1] != H or c_prev.shape[-1] != H:
        raise ShapeError(f"lstm_step: x{x.shape} h{h_prev.shape} c{c_prev.shape} "
                         f"vs input_dim={p.input_dim} hidden_dim={H}")
    z = (x @ p.W.T + p.b) + h_prev @ p.U.T
    s = sigmoid(z[..., :3 * H])
    i, f, o = s[..., :H], s[..., H:2 * H], s[..., 2 * H:]
    g = np.tanh(z[..., 3 * H:])
    c = f * c_prev + i * g
    h = o * np.tanh(c)
    return h, c


@dataclass
class LstmCache:
    x: np.ndarray        # (T, B, D)
    h: np.ndarray        # (T+1, B, H); h[0] is the initial state
    c: np.ndarray        # (T+1, B, H)
    gates: np.ndarray    # (T, B, 4H) post-activation i, f, o, g
    tanh_c: np.ndarray   # (T, B, H)


def lstm_run(p: LstmParams, xs: np.ndarray) -> LstmCache:
    """Batched forward over ``xs`` of shape (T, B, D) from zero initial state."""
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim != 3 or xs.shape[0] < 1:
        raise ShapeError(f"lstm_run expects (T, B, D) with T >= 1, got {xs.shape}")
    if xs.shape[2] != p.input_dim:
        raise ShapeError(f"lstm_run: input dim {xs.shape[2]} != {p.input_dim}")
    T, B, _ = xs.shape
    H = p.hidden_dim
    hs = np.zeros((T + 1, B, H))
    cs = np.zeros((T + 1, B, H))
    gates = np.empty((T, B, 4 * H))
    tcs = np.empty((T, B, H))
    zx = xs @ p.W.T + p.b
    UT = p.U.T
    for t in range(T):
        z = zx[t] + hs[t] @ UT
        gt = gates[t]
        gt[:, :3 * H] = sigmoid(z[:, :3 * H])
        gt[:, 3 * H:] = np.tanh(z[:, 3 * H:])
        cs[t + 1] = gt[:, H:2 * H] * cs[t] + gt[:, :H] * gt[:, 3 * H:]
        tcs[t] = np.tanh(cs[t + 1])
        hs[t + 1] = gt[:, 2 * H:3 * H] * tcs[t]
    return LstmCache(xs, hs, cs, gates, tcs)


def lstm_forward(p: LstmParams, xs: Iterable) -> list[tuple[np.ndarray, np.ndarray]]:
    """Single-sequence forward: a list of per-frame ``(h, c)`` pairs."""
    xs = np.asarray(list(xs) if not isinstance(xs, np.ndarray) else xs, dtype=np.float64)
    if xs.ndim != 2 or xs.shape[0] == 0:
        raise ShapeError(f"lstm_forward expects a non-empty (T, D) sequence, got {xs.shape}")
    cache = lstm_run(p, xs[:, None, :])
    return [(cache.h[t + 1, 0], cache.c[t + 1, 0]) for t in range(xs.shape[0])]


def lstm_backward(p: LstmParams, cache: LstmCache | None, dh_out: np.ndarray):
    """BPTT through a recorded :func:`lstm_run`.

    ``dh_out`` is dL/dh_t for every frame, shape (T, B, H).  Returns
    ``(dx, LstmParams-shaped grads)``.
    """
    if cache is None:
        raise StateError("backward called before forward")
    T, B, H = dh_out.shape
    if (T, B, H) != cache.tanh_c.shape:
        raise ShapeError(f"upstream gradient {dh_out.shape} vs recorded {cache.tanh_c.shape}")
    dz = np.empty((T, B, 4 * H))
    dh_next = np.zeros((B, H))
    dc_next = np.zeros((B, H))
    U = p.U
    for t in range(T - 1, -1, -1):
        gt = cache.gates[t]
        i, f, o, g = gt[:, :H], gt[:, H:2 * H], gt[:, 2 * H:3 * H], gt[:, 3 * H:]
        tc = cache.tanh_c[t]
        dh = dh_out[t] + dh_next
        dc = dh * o * (1.0 - tc * tc) + dc_next
        d = dz[t]
        d[:, :H] = dc * g * i * (1.0 - i)
        d[:, H:2 * H] = dc * cache.c[t] * f * (1.0 - f)
        d[:, 2 * H:3 * H] = dh * tc * o * (1.0 - o)
        d[:, 3 * H:] = dc * i * (1.0 - g * g)
        dc_next = dc * f
        dh_next = d @ U
    flat = dz.reshape(T * B, 4 * H)
    dW = flat.T @ cache.x.reshape(T * B, -1)
    dU = flat.T @ cache.h[:-1].reshape(T * B, H)
    db = flat.sum(axis=0)
    dx = dz @ p.W
    return dx, LstmParams(dW, dU, db)


# --------------------------------------------------------------------------
# optimiser


@dataclass
class SgdState:
    learning_rate: float = 0.001
    momentum: float = 0.9
    weight_decay: float = 0.0005
    velocity: dict[str, np.ndarray] = field(default_factory=dict)


def sgd_update(params: dict[str, np.ndarray], grads: Mapping[str, np.ndarray], state: SgdState):
    """Classical momentum: ``v = mu*v - lr*(g + wd*theta); theta += v`` (in place)."""
    for name, theta in params.items():
        g = grads[name]
        if g.shape != theta.shape:
            raise ShapeError(f"{name}: gradient {g.shape} vs parameter {theta.shape}")
        v = state.velocity.get(name)
        if v is None:
            v = state.velocity[name] = np.zeros_like(theta)
        elif v.shape != theta.shape:
            raise ShapeError(f"{name}: velocity {v.shape} vs parameter {theta.shape}")
        v *= state.momentum
        v -= state.learning_rate * (g + state.weight_decay * theta)
        theta += v
    return params


# --------------------------------------------------------------------------
# checkpoint text format


def format_matrix_block(name: str, m: np.ndarray) -> str:
    m = np.atleast_2d(np.asarray(m, dtype=np.float64))
    if m.ndim != 2:
        raise ShapeError(f"{name}: only 2-D blocks are serialisable, got {m.shape}")
    lines = [f"{name} {m.shape[0]} {m.shape[1]}"]
    lines += [" ".join(repr(float(v)) for v in row) for row in m]
    return "\n".join(lines) + "\n"


def parse_matrix_blocks(lines: list[str], start: int = 0, source: str = "<text>"):
    """Parse ``name rows cols`` blocks from ``lines[start:]``; returns an ordered dict."""
    out: dict[str, np.ndarray] = {}
    i = start
    while i < len(lines):
        if not lines[i].strip():
            i += 1
            continue
        head = lines[i].split()
        try:
            name, rows, cols = head[0], int(head[1]), int(head[2])
            if len(head) != 3:
                raise ValueError
        except (ValueError, IndexError):
            raise ValueError(f"{source}:{i + 1}: expected 'name rows cols', got {lines[i]!r}") from None
        data = np.empty((rows, cols))
        for r in range(rows):
            ln = i + 1 + r
            if ln >= len(lines):
                raise ValueError(f"{source}:{ln + 1}: block {name!r} truncated")
            try:
                vals = [float(tok) for tok in lines[ln].split()]
            except ValueError:
                raise ValueError(f"{source}:{ln + 1}: non-numeric entry") from None
            if len(vals) != cols:
                raise ValueError(f"{source}:{ln + 1}: expected {cols} values, got {len(vals)}")
            data[r] = vals
        out[name] = data
        i += rows + 1
    return out


def save_checkpoint(path, params: Mapping[str, np.ndarray], header: str | None = None) -> None:
    text = "" if header is None else header.rstrip("\n") + "\n"
    text += "".join(format_matrix_block(n, v) for n, v in params.items())
    Path(path).write_text(text, encoding="utf-8", newline="\n")


def load_checkpoint(path, has_header: bool = False):
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    header = lines[0] if has_header else None
    blocks = parse_matrix_blocks(lines, 1 if has_header else 0, source=str(path))
    return header, blocks
