"""Deterministic synthetic YUV 4:2:0 clip generation.

Clips are sampled from an oversized band-limited noise master texture so
motion is well-posed for flow estimation (flat frames are not). Everything
is a pure function of (spec, seed).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter

from .frames import Frame420

KINDS = ("static", "translate", "rotate", "noise")


@dataclass(frozen=True)
class ClipSpec:
    kind: str
    width: int = 128
    height: int = 128
    frames: int = 8
    seed: int = 0
    # translate: luma pixels per frame (may be fractional)
    dx: float = 0.0
    dy: float = 0.0
    # rotate: degrees per frame
    deg_per_frame: float = 0.0
    # texture band limit: larger blurs more (lower entropy)
    smoothness: float = 3.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown clip kind {self.kind!r}")
        if self.width % 2 or self.height % 2:
            raise ValueError("clip dimensions must be even")


def _texture(rng: np.random.Generator, h: int, w: int, smoothness: float,
             lo: float, hi: float) -> np.ndarray:
    """Band-limited noise field scaled into [lo, hi]."""
    t = gaussian_filter(rng.standard_normal((h, w)), sigma=smoothness)
    t -= t.min()
    span = t.max()
    if span > 0:
        t /= span
    return lo + t * (hi - lo)


def _sample_bilinear(master: np.ndarray, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """Bilinear lookup of master at float coords (clamped to borders)."""
    h, w = master.shape
    ys = np.clip(ys, 0, h - 1)
    xs = np.clip(xs, 0, w - 1)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = ys - y0
    fx = xs - x0
    top = master[y0, x0] * (1 - fx) + master[y0, x1] * fx
    bot = master[y1, x0] * (1 - fx) + master[y1, x1] * fx
    return top * (1 - fy) + bot * fy


def _window(master: np.ndarray, oy: float, ox: float, h: int, w: int) -> np.ndarray:
    """Read an h-by-w window at float offset; integer offsets are exact slices."""
    if float(oy).is_integer() and float(ox).is_integer():
        iy, ix = int(oy), int(ox)
        return master[iy : iy + h, ix : ix + w].copy()
    ys, xs = np.meshgrid(np.arange(h) + oy, np.arange(w) + ox, indexing="ij")
    return _sample_bilinear(master, ys, xs)


def _rotated_window(master: np.ndarray, cy: float, cx: float, h: int, w: int,
                    deg: float) -> np.ndarray:
    rad = np.deg2rad(deg)
    c, s = np.cos(rad), np.sin(rad)
    ys, xs = np.meshgrid(np.arange(h) - (h - 1) / 2, np.arange(w) - (w - 1) / 2,
                         indexing="ij")
    ry = cy + s * xs + c * ys
    rx = cx + c * xs - s * ys
    return _sample_bilinear(master, ry, rx)


def _to_u8(a: np.ndarray) -> np.ndarray:
    return np.clip(np.round(a), 0, 255).astype(np.uint8)


def generate(spec: ClipSpec) -> list[Frame420]:
    """Generate the clip described by ``spec``; byte-deterministic."""
    rng = np.random.default_rng(spec.seed)
    h, w = spec.height, spec.width
    ch, cw = h // 2, w // 2

    if spec.kind == "noise":
        frames = []
        for _ in range(spec.frames):
            y = _texture(rng, h, w, spec.smoothness, 20, 235)
            u = _texture(rng, ch, cw, spec.smoothness, 64, 192)
            v = _texture(rng, ch, cw, spec.smoothness, 64, 192)
            frames.append(Frame420(_to_u8(y), _to_u8(u), _to_u8(v)))
        return frames

    # margin covers the full motion extent plus rotation overhang
    extent_x = abs(spec.dx) * (spec.frames - 1)
    extent_y = abs(spec.dy) * (spec.frames - 1)
    diag = 0 if spec.kind != "rotate" else int(np.hypot(h, w) / 2) + 2
    mh = h + 2 * (int(np.ceil(extent_y)) + 4 + diag)
    mw = w + 2 * (int(np.ceil(extent_x)) + 4 + diag)
    master_y = _texture(rng, mh, mw, spec.smoothness, 20, 235)
    master_u = _texture(rng, mh // 2, mw // 2, spec.smoothness, 64, 192)
    master_v = _texture(rng, mh // 2, mw // 2, spec.smoothness, 64, 192)

    oy0 = (mh - h) / 2
    ox0 = (mw - w) / 2

    frames = []
    for t in range(spec.frames):
        if spec.kind == "static":
            oy, ox = oy0, ox0
        elif spec.kind == "translate":
            # content moves by (+dx, +dy); the sampling window moves opposite
            oy, ox = oy0 - spec.dy * t, ox0 - spec.dx * t
        else:  # rotate
            deg = spec.deg_per_frame * t
            y = _rotated_window(master_y, mh / 2, mw / 2, h, w, deg)
            u = _rotated_window(master_u, mh / 4, mw / 4, ch, cw, deg)
            v = _rotated_window(master_v, mh / 4, mw / 4, ch, cw, deg)
            frames.append(Frame420(_to_u8(y), _to_u8(u), _to_u8(v)))
            continue
        y = _window(master_y, oy, ox, h, w)
        u = _window(master_u, oy / 2, ox / 2, ch, cw)
        v = _window(master_v, oy / 2, ox / 2, ch, cw)
        frames.append(Frame420(_to_u8(y), _to_u8(u), _to_u8(v)))
    return frames
