"""Disparity refinement: left-right check, occlusion filling, weighted median."""
from __future__ import annotations

import numpy as np

from .lattice import FeatureSpec


def lrc_check(disp_left: np.ndarray, disp_right: np.ndarray, tol: float = 1.0) -> np.ndarray:
    """Validity mask of left disparities that agree with the right view.

    Pixel ``(x, y)`` is kept when ``x - round(dL)`` lies in the image and
    ``|dL(x, y) - dR(x - round(dL), y)| <= tol``.
    """
    dl = np.asarray(disp_left, dtype=np.float64)
    dr = np.asarray(disp_right, dtype=np.float64)
    if dl.shape != dr.shape or dl.ndim != 2:
        raise ValueError(f"disparity maps differ in shape: {dl.shape} vs {dr.shape}")
    h, w = dl.shape
    finite = np.isfinite(dl)
    xs = np.arange(w)[None, :] - np.rint(np.where(finite, dl, 0.0)).astype(np.int64)
    in_view = finite & (xs >= 0) & (xs < w)
    rows = np.broadcast_to(np.arange(h)[:, None], (h, w))
    matched = dr[rows, np.clip(xs, 0, w - 1)]
    with np.errstate(invalid="ignore"):
        agree = np.abs(dl - matched) <= tol
    return in_view & agree


def _fill_rows(disp, valid):
    """Scanline fill; rows without any valid pixel are left as NaN."""
    h, w = disp.shape
    cols = np.broadcast_to(np.arange(w), (h, w))
    left_idx = np.maximum.accumulate(np.where(valid, cols, -1), axis=1)
    right_idx = np.minimum.accumulate(np.where(valid, cols, w)[:, ::-1], axis=1)[:, ::-1]
    rows = np.arange(h)[:, None]
    left_val = np.where(left_idx >= 0, disp[rows, np.clip(left_idx, 0, w - 1)], np.inf)
    right_val = np.where(right_idx < w, disp[rows, np.clip(right_idx, 0, w - 1)], np.inf)
    fill = np.minimum(left_val, right_val)
    out = np.where(valid, disp, fill)
    out[~valid.any(axis=1)] = np.nan
    return out


def occlusion_fill(disp: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Replace invalid pixels by the smaller of the nearest valid disparities
    to the left and right on the same scanline.

    A row with no valid pixel copies the filled row nearest to it (the
    smaller disparity per column on a tie).
    """
    disp = np.asarray(disp, dtype=np.float32)
    valid = np.asarray(mask, dtype=bool) & np.isfinite(disp)
    if disp.shape != valid.shape:
        raise ValueError(f"mask {valid.shape} does not match disparity {disp.shape}")
    if not valid.any():
        raise ValueError("cannot fill a disparity map without valid pixels")
    out = _fill_rows(disp, valid)
    empty = np.isnan(out[:, 0])
    if empty.any():
        good = np.nonzero(~empty)[0]
        for y in np.nonzero(empty)[0]:
            dist = np.abs(good - y)
            nearest = good[dist == dist.min()]
            out[y] = out[nearest].min(axis=0)
    return out.astype(np.float32)


def weighted_median(disp: np.ndarray, guide: np.ndarray, mask: np.ndarray, window: int = 9,
                    spec: FeatureSpec | None = None) -> np.ndarray:
    """Bilateral weighted median applied only where ``mask`` is False.

    The median is the smallest window value whose cumulative weight reaches
    half the total weight; out-of-image window positions are ignored.
    """
    spec = spec or FeatureSpec()
    if window < 1 or window % 2 == 0:
        raise ValueError(f"window must be odd, got {window}")
    disp = np.asarray(disp, dtype=np.float32)
    mask = np.asarray(mask, dtype=bool)
    guide = np.asarray(guide, dtype=np.float64)
    if disp.shape != mask.shape or guide.shape[:2] != disp.shape:
        raise ValueError("disparity, mask and guide must share height and width")
    if not np.isfinite(disp).all():
        raise ValueError("weighted_median expects a filled disparity map")
    out = disp.copy()
    ys, xs = np.nonzero(~mask)
    if len(ys) == 0:
        return out

    h, w = disp.shape
    r = window // 2
    dy, dx = np.mgrid[-r:r + 1, -r:r + 1]
    dy, dx = dy.ravel(), dx.ravel()
    spatial = (dy ** 2 + dx ** 2) / (2.0 * spec.sigma_x ** 2)
    for start in range(0, len(ys), 4096):
        py = ys[start:start + 4096, None] + dy[None, :]
        px = xs[start:start + 4096, None] + dx[None, :]
        inside = (py >= 0) & (py < h) & (px >= 0) & (px < w)
        py, px = np.clip(py, 0, h - 1), np.clip(px, 0, w - 1)
        centre = guide[ys[start:start + 4096], xs[start:start + 4096]][:, None, :]
        color = ((guide[py, px] - centre) ** 2).sum(axis=-1) / (2.0 * spec.sigma_f ** 2)
        weight = np.where(inside, np.exp(-spatial[None, :] - color), 0.0)
        values = disp[py, px]
        order = np.argsort(values, axis=1, kind="stable")
        sv = np.take_along_axis(values, order, axis=1)
        cw = np.cumsum(np.take_along_axis(weight, order, axis=1), axis=1)
        pick = np.argmax(cw >= 0.5 * cw[:, -1:], axis=1)
        out[ys[start:start + 4096], xs[start:start + 4096]] = sv[np.arange(len(pick)), pick]
    return out
