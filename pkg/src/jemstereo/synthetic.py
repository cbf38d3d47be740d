"""Synthetic random-dot stereo pairs with known disparity."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class StereoScene:
    left: np.ndarray          # (H, W, 3) uint8
    right: np.ndarray         # (H, W, 3) uint8
    disparity: np.ndarray     # (H, W) float32, left-view ground truth
    nocc: np.ndarray          # (H, W) bool, visible in both views
    levels: int
    thin: np.ndarray | None = None   # (H, W) bool, thin-structure pixels


def random_dots(shape, rng, palette=None, region=None) -> np.ndarray:
    """Random-dot texture; each region of ``region`` gets its own colour tint."""
    h, w = shape
    intensity = rng.random((h, w))
    if palette is None or region is None:
        gray = (40 + 190 * intensity).astype(np.uint8)
        return np.repeat(gray[..., None], 3, axis=2)
    tint = palette[region]
    img = tint * (0.35 + 0.65 * intensity[..., None])
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def render_pair(disparity: np.ndarray, left: np.ndarray, rng) -> tuple[np.ndarray, np.ndarray]:
    """Warp ``left`` into the right view by integer disparity.

    Nearer surfaces (larger disparity) win where several left pixels land on
    the same right pixel; uncovered right pixels get fresh dots. Returns the
    right image and the non-occlusion mask of the left view.
    """
    h, w = disparity.shape
    disp = disparity.astype(np.int64)
    right = np.zeros_like(left)
    depth = np.full((h, w), -1, dtype=np.int64)
    owner = np.full((h, w), -1, dtype=np.int64)
    xs = np.arange(w)
    for y in range(h):
        target = xs - disp[y]
        # paint far-to-near so the nearest surface ends up on top
        for x in np.argsort(disp[y], kind="stable"):
            t = target[x]
            if 0 <= t < w and disp[y, x] >= depth[y, t]:
                depth[y, t] = disp[y, x]
                owner[y, t] = x
                right[y, t] = left[y, x]
    holes = owner < 0
    if holes.any():
        fill = random_dots((h, w), rng)
        right[holes] = fill[holes]
    nocc = np.zeros((h, w), dtype=bool)
    for y in range(h):
        seen = owner[y][owner[y] >= 0]
        nocc[y, seen] = True
    return right, nocc


def _between(rng, low, high) -> int:
    """Random integer in ``[low, high)``, falling back to ``high - 1`` on small images."""
    high = max(int(high), 1)
    return int(rng.integers(min(int(low), high - 1), high))


def layered_scene(height=128, width=128, levels=16, values=(2, 5, 9), seed=0,
                  thin_bars=0, colored=True) -> StereoScene:
    """Piecewise-constant disparity: background plus nested rectangles.

    ``values`` are the disparities of background, middle and front layers.
    ``thin_bars`` adds narrow vertical and horizontal bars at the front
    disparity, the kind of structure a purely global prior tends to erase.
    """
    rng = np.random.default_rng(seed)
    h, w = height, width
    region = np.zeros((h, w), dtype=np.int64)
    disparity = np.full((h, w), float(values[0]), dtype=np.float32)
    n_layers = len(values)
    for layer in range(1, n_layers):
        rh = int(rng.integers(h // 4, h // 2))
        rw = int(rng.integers(w // 4, w // 2))
        y0 = _between(rng, 2, h - rh - 2)
        x0 = _between(rng, values[layer] + 2, w - rw - 2)
        disparity[y0:y0 + rh, x0:x0 + rw] = values[layer]
        region[y0:y0 + rh, x0:x0 + rw] = layer
    thin = np.zeros((h, w), dtype=bool)
    front = values[-1]
    for b in range(thin_bars):
        width_px = int(rng.integers(2, 4))
        if b % 2 == 0:
            x0 = _between(rng, front + 4, w - width_px - 4)
            y0 = _between(rng, 0, h // 3)
            y1 = _between(rng, 2 * h // 3, h)
            sl = (slice(y0, y1), slice(x0, x0 + width_px))
        else:
            y0 = _between(rng, 4, h - width_px - 4)
            x0 = _between(rng, front + 2, w // 3)
            x1 = _between(rng, 2 * w // 3, w)
            sl = (slice(y0, y0 + width_px), slice(x0, x1))
        disparity[sl] = front
        region[sl] = n_layers
        thin[sl] = True
    palette = None
    if colored:
        palette = rng.integers(60, 256, size=(n_layers + 1, 3)).astype(np.float64)
    left = random_dots((h, w), rng, palette, region)
    right, nocc = render_pair(disparity, left, rng)
    return StereoScene(left, right, disparity, nocc, levels, thin if thin_bars else None)


def shifted_pair(height=32, width=48, shift=3, seed=0) -> StereoScene:
    """Right view = left view shifted by a constant disparity."""
    rng = np.random.default_rng(seed)
    disparity = np.full((height, width), float(shift), dtype=np.float32)
    left = random_dots((height, width), rng)
    right, nocc = render_pair(disparity, left, rng)
    return StereoScene(left, right, disparity, nocc, max(2 * shift + 2, 4))
