"""Frame augmentation: flips, small rotations, aspect-preserving crops, colour jitter.

Images are float64 arrays of shape (H, W, 3) with values in [0, 255].
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .numeric import SplitMix64

GREY_WEIGHTS = np.array([0.299, 0.587, 0.114])


@dataclass
class AugmentConfig:
    alpha: float = 0.3
    max_rotation: float = 8.0      # degrees, symmetric
    crop_scale: tuple = (0.8, 1.0)
    aspect: float = 320 / 240
    out_size: tuple = (224, 224)   # (height, width)
    rgb_shift: float = 20.0
    apply_prob: float = 0.5        # per random transform

    def __post_init__(self):
        lo, hi = self.crop_scale
        if not 0 < lo <= hi <= 1:
            raise ValueError("crop_scale must satisfy 0 < lo <= hi <= 1")
        if not 0 <= self.alpha <= 1:
            raise ValueError("alpha must lie in [0, 1]")


def _check(img) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3 or img.shape[0] < 8 or img.shape[1] < 8:
        raise ValueError(f"expected an (H>=8, W>=8, 3) image, got {img.shape}")
    return img


def grey(img) -> np.ndarray:
    """BT.601 luma, shape (H, W, 1) so it broadcasts over channels.

    Written relative to the red channel so that R == G == B gives back
    exactly R.
    """
    img = np.asarray(img, dtype=np.float64)
    r, g, b = img[..., 0], img[..., 1], img[..., 2]
    return (r + GREY_WEIGHTS[1] * (g - r) + GREY_WEIGHTS[2] * (b - r))[:, :, None]


def _mean(x: np.ndarray) -> float:
    # offset by the minimum: exact for constant inputs
    lo = x.min()
    return float(lo + (x - lo).mean())


def flip_h(img) -> np.ndarray:
    return _check(img)[:, ::-1].copy()


def bilinear_sample(img: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """Sample ``img`` at fractional coordinates; out-of-range clamps to the edge."""
    H, W = img.shape[:2]
    r = np.clip(rows, 0.0, H - 1.0)
    c = np.clip(cols, 0.0, W - 1.0)
    r0 = np.floor(r).astype(np.int64)
    c0 = np.floor(c).astype(np.int64)
    r1 = np.minimum(r0 + 1, H - 1)
    c1 = np.minimum(c0 + 1, W - 1)
    fr = (r - r0)[..., None]
    fc = (c - c0)[..., None]
    top = img[r0, c0] * (1 - fc) + img[r0, c1] * fc
    bot = img[r1, c0] * (1 - fc) + img[r1, c1] * fc
    return top * (1 - fr) + bot * fr


def rotate(img, degrees: float) -> np.ndarray:
    """Rotate about the image centre (counter-clockwise, edge-replicated)."""
    img = _check(img)
    H, W = img.shape[:2]
    th = np.deg2rad(degrees)
    cy, cx = (H - 1) / 2.0, (W - 1) / 2.0
    yy, xx = np.mgrid[0:H, 0:W].astype(np.float64)
    dy, dx = yy - cy, xx - cx
    # inverse map: output pixel -> source location
    src_y = cy + np.cos(th) * dy - np.sin(th) * dx
    src_x = cx + np.sin(th) * dy + np.cos(th) * dx
    return bilinear_sample(img, src_y, src_x)


def resize(img, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize with corner-aligned sampling grids."""
    img = np.asarray(img, dtype=np.float64)
    H, W = img.shape[:2]
    rows = np.linspace(0.0, H - 1.0, out_h) if out_h > 1 else np.zeros(1)
    cols = np.linspace(0.0, W - 1.0, out_w) if out_w > 1 else np.zeros(1)
    rr, cc = np.meshgrid(rows, cols, indexing="ij")
    return bilinear_sample(img, rr, cc)


def max_crop_rect(h: int, w: int, aspect: float) -> tuple[int, int]:
    """Largest (height, width) with width/height == aspect that fits in h x w."""
    if w / h >= aspect:
        ch = h
        cw = min(w, int(round(h * aspect)))
    else:
        cw = w
        ch = min(h, int(round(w / aspect)))
    return ch, cw


def crop_procedure(img, rng: SplitMix64, cfg: AugmentConfig | None = None) -> np.ndarray:
    """Max aspect-ratio rectangle, scaled by u in crop_scale, placed at random, resized."""
    cfg = cfg or AugmentConfig()
    img = _check(img)
    H, W = img.shape[:2]
    ch, cw = max_crop_rect(H, W, cfg.aspect)
    u = rng.uniform(None, *cfg.crop_scale)
    ch, cw = max(1, int(round(ch * u))), max(1, int(round(cw * u)))
    top = rng.integers(H - ch + 1)
    left = rng.integers(W - cw + 1)
    sub = img[top:top + ch, left:left + cw]
    return resize(sub, *cfg.out_size)


def rgb_shift(img, rng: SplitMix64, magnitude: float = 20.0) -> np.ndarray:
    """Add an independent uniform offset in [-magnitude, magnitude] to each channel."""
    img = _check(img)
    shift = rng.uniform(3, -magnitude, magnitude)
    return np.clip(img + shift, 0.0, 255.0)


def brightness(img, alpha: float) -> np.ndarray:
    return np.clip(alpha * _check(img), 0.0, 255.0)


def contrast(img, alpha: float) -> np.ndarray:
    img = _check(img)
    # img * alpha + (1 - alpha) * mean(grey(img)), arranged to be exact at fixed points
    return np.clip(img + (1.0 - alpha) * (_mean(grey(img)) - img), 0.0, 255.0)


def saturation(img, alpha: float) -> np.ndarray:
    img = _check(img)
    return np.clip(img + (1.0 - alpha) * (grey(img) - img), 0.0, 255.0)


def augment(img, rng: SplitMix64, cfg: AugmentConfig | None = None) -> np.ndarray:
    """Full pipeline: flip, rotate, crop, RGB shift, then brightness/contrast/saturation.

    Each random transform (flip, rotation, shift, each colour op) fires
    independently with ``cfg.apply_prob``; the crop always runs.
    """
    cfg = cfg or AugmentConfig()
    img = _check(img)
    if rng.uniform() < cfg.apply_prob:
        img = flip_h(img)
    if rng.uniform() < cfg.apply_prob:
        img = rotate(img, rng.uniform(None, -cfg.max_rotation, cfg.max_rotation))
    img = crop_procedure(img, rng, cfg)
    if rng.uniform() < cfg.apply_prob:
        img = rgb_shift(img, rng, cfg.rgb_shift)
    for op in (brightness, contrast, saturation):
        if rng.uniform() < cfg.apply_prob:
            img = op(img, cfg.alpha)
    return img


# --------------------------------------------------------------------------
# PPM (P3)


def format_ppm(img) -> str:
    img = np.asarray(img)
    H, W = img.shape[:2]
    px = np.clip(np.rint(img), 0, 255).astype(np.int64)
    rows = [" ".join(str(v) for v in px[y].reshape(-1)) for y in range(H)]
    return f"P3\n{W} {H}\n255\n" + "\n".join(rows) + "\n"


def parse_ppm(text: str) -> np.ndarray:
    tokens = [tok for line in text.splitlines() for tok in line.split("#", 1)[0].split()]
    if not tokens or tokens[0] != "P3":
        raise ValueError("not an ASCII PPM (P3) file")
    W, H, maxval = (int(t) for t in tokens[1:4])
    vals = np.array([int(t) for t in tokens[4:]], dtype=np.float64)
    if vals.size != W * H * 3:
        raise ValueError(f"expected {W * H * 3} samples, got {vals.size}")
    return vals.reshape(H, W, 3) * (255.0 / maxval)


def write_ppm(path, img) -> None:
    Path(path).write_text(format_ppm(img), encoding="ascii", newline="\n")


def read_ppm(path) -> np.ndarray:
    return parse_ppm(Path(path).read_text(encoding="ascii"))
