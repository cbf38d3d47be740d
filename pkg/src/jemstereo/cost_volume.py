"""Census + horizontal-gradient matching cost.

Cost volumes are ``(H, W, M)`` float32 arrays indexed ``[y, x, d]``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MAX_LEVELS = 1024


@dataclass(frozen=True)
class CostParams:
    census_window: int = 5
    w_census: float = 1.0
    w_grad: float = 0.4
    tau_grad: float = 16.0
    # None means 0.9 x the largest in-view cost
    cost_out_of_view: float | None = None

    def __post_init__(self):
        if self.census_window < 3 or self.census_window % 2 == 0:
            raise ValueError(f"census_window must be odd and >= 3, got {self.census_window}")
        if self.w_census < 0 or self.w_grad < 0:
            raise ValueError("cost weights must be non-negative")
        if not self.tau_grad > 0:
            raise ValueError("tau_grad must be positive")
        if self.cost_out_of_view is not None and self.cost_out_of_view < 0:
            raise ValueError("cost_out_of_view must be non-negative")

    @property
    def max_in_view(self) -> float:
        return self.w_census * (self.census_window ** 2 - 1) + self.w_grad * self.tau_grad

    @property
    def out_of_view(self) -> float:
        if self.cost_out_of_view is None:
            return 0.9 * self.max_in_view
        return float(self.cost_out_of_view)


@dataclass(frozen=True)
class CensusField:
    """Bit-packed census codes.

    ``bits`` has shape ``(H, W, ceil(nbits / 8))``; bit ``k`` (``np.packbits``
    big-endian order) is set when the k-th window neighbour, counted row-major
    with the centre skipped, is strictly darker than the centre.
    """
    window: int
    bits: np.ndarray

    @property
    def nbits(self) -> int:
        return self.window ** 2 - 1

    @property
    def shape(self):
        return self.bits.shape[:2]

    def unpack(self) -> np.ndarray:
        return np.unpackbits(self.bits, axis=-1, count=self.nbits).astype(bool)


def census(gray: np.ndarray, window: int = 5) -> CensusField:
    gray = np.asarray(gray, dtype=np.float32)
    if gray.ndim != 2:
        raise ValueError(f"expected 2-D intensity image, got shape {gray.shape}")
    h, w = gray.shape
    if window < 3 or window % 2 == 0:
        raise ValueError(f"census window must be odd and >= 3, got {window}")
    if window > min(h, w):
        raise ValueError(f"census window {window} exceeds image size {w}x{h}")
    r = window // 2
    padded = np.pad(gray, r, mode="edge")
    planes = []
    for dy in range(window):
        for dx in range(window):
            if dy == r and dx == r:
                continue
            planes.append(padded[dy:dy + h, dx:dx + w] < gray)
    return CensusField(window, np.packbits(np.stack(planes, axis=-1), axis=-1))


def hamming(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Bit-count distance between packed code arrays (last axis = bytes)."""
    return np.bitwise_count(np.bitwise_xor(a, b)).sum(axis=-1, dtype=np.int32)


def gradient_x(gray: np.ndarray) -> np.ndarray:
    gray = np.asarray(gray, dtype=np.float32)
    if gray.shape[1] < 2:
        return np.zeros_like(gray)
    return np.gradient(gray, axis=1).astype(np.float32)


def build_cost_volume(left: np.ndarray, right: np.ndarray, levels: int,
                      params: CostParams | None = None,
                      reference: str = "left") -> np.ndarray:
    """Unary cost for every pixel of the reference view and every disparity.

    With ``reference="left"`` pixel ``x`` of the left image is compared to
    ``x - d`` in the right image; ``"right"`` compares right ``x`` to left
    ``x + d``. Matches that fall outside the image get ``out_of_view``.
    """
    params = params or CostParams()
    left = np.asarray(left, dtype=np.float32)
    right = np.asarray(right, dtype=np.float32)
    if left.shape != right.shape or left.ndim != 2:
        raise ValueError(f"image shapes differ or are not 2-D: {left.shape} vs {right.shape}")
    if not 2 <= levels <= MAX_LEVELS:
        raise ValueError(f"levels must be in [2, {MAX_LEVELS}], got {levels}")
    if reference not in ("left", "right"):
        raise ValueError(f"reference must be 'left' or 'right', got {reference!r}")

    h, w = left.shape
    if reference == "left":
        ref, other = left, right
        sign = -1
    else:
        ref, other = right, left
        sign = 1
    c_ref = census(ref, params.census_window).bits
    c_oth = census(other, params.census_window).bits
    g_ref = gradient_x(ref)
    g_oth = gradient_x(other)

    cost = np.full((h, w, levels), params.out_of_view, dtype=np.float32)
    for d in range(min(levels, w)):
        if sign < 0:
            rs, os_ = slice(d, w), slice(0, w - d)
        else:
            rs, os_ = slice(0, w - d), slice(d, w)
        ham = hamming(c_ref[:, rs], c_oth[:, os_]).astype(np.float32)
        grad = np.minimum(np.abs(g_ref[:, rs] - g_oth[:, os_]), params.tau_grad)
        cost[:, rs, d] = params.w_census * ham + params.w_grad * grad
    return cost
