"""Mean-field inference for the joint fully/locally connected stereo model.

Belief volumes are ``(H, W, M)`` float64 arrays whose last axis is a
probability distribution over disparities.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .lattice import FeatureSpec, PermutohedralLattice, build_lattice, exact_filter, image_features

log = logging.getLogger(__name__)


class NumericalError(RuntimeError):
    """Raised when an update produces non-finite values."""


@dataclass(frozen=True)
class FullPairParams:
    omega: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.omega) and self.omega >= 0):
            raise ValueError(f"omega must be finite and >= 0, got {self.omega}")


@dataclass(frozen=True)
class LocalPairParams:
    omega_t: float = 1.0
    lambda1: float = 3.5
    lambda2: float = 3.0
    lambda3: float = 1.0
    mu1: float = 7.0
    mu2: float = 15.0
    beta: float = 0.5
    connectivity: int = 4

    def __post_init__(self):
        if not (np.isfinite(self.omega_t) and self.omega_t >= 0):
            raise ValueError(f"omega_t must be finite and >= 0, got {self.omega_t}")
        if not self.mu1 < self.mu2:
            raise ValueError("mu1 must be smaller than mu2")
        if not self.lambda1 >= self.lambda2 >= self.lambda3 >= 0:
            raise ValueError("edge weights must satisfy lambda1 >= lambda2 >= lambda3 >= 0")
        if not 0 <= self.beta <= 1:
            raise ValueError("beta must lie in [0, 1]")
        if self.connectivity not in (4, 8):
            raise ValueError("connectivity must be 4 or 8")


@dataclass(frozen=True)
class InferenceConfig:
    iterations: int = 5
    full: FullPairParams = field(default_factory=FullPairParams)
    local: LocalPairParams = field(default_factory=LocalPairParams)
    feature: FeatureSpec = field(default_factory=FeatureSpec)
    # stop early once no belief moves by more than this; None disables
    early_exit_tol: float | None = None

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")


@dataclass(frozen=True)
class EdgeWeights:
    """Local edge weights for one half of the neighbourhood.

    ``weights[k]`` belongs to ``offsets[k] = (dy, dx)`` and has the shape of
    the overlap region: entry ``[y, x]`` weights the edge between pixel
    ``(y0 + y, x0 + x)`` and that pixel shifted by ``(dy, dx)``.
    """
    shape: tuple
    offsets: tuple
    weights: tuple

    def edge_list(self):
        """``(i, j, w)`` flat-index triples, each undirected edge once."""
        h, w = self.shape
        idx = np.arange(h * w).reshape(h, w)
        out_i, out_j, out_w = [], [], []
        for (dy, dx), wt in zip(self.offsets, self.weights):
            src, dst = _overlap(h, w, dy, dx)
            out_i.append(idx[src].ravel())
            out_j.append(idx[dst].ravel())
            out_w.append(wt.ravel())
        return np.concatenate(out_i), np.concatenate(out_j), np.concatenate(out_w)


def _overlap(h, w, dy, dx):
    """Slices selecting pixels p and p + (dy, dx) where both are in-image."""
    ys = slice(max(0, -dy), h - max(0, dy))
    xs = slice(max(0, -dx), w - max(0, dx))
    yd = slice(max(0, dy), h - max(0, -dy))
    xd = slice(max(0, dx), w - max(0, -dx))
    return (ys, xs), (yd, xd)


def _half_offsets(connectivity):
    if connectivity == 4:
        return ((0, 1), (1, 0))
    return ((0, 1), (1, 0), (1, 1), (1, -1))


def softmax_neg(energy: np.ndarray) -> np.ndarray:
    """``exp(-e) / sum exp(-e)`` over the last axis, max-shifted."""
    shifted = -(energy - energy.min(axis=-1, keepdims=True))
    np.exp(shifted, out=shifted)
    shifted /= shifted.sum(axis=-1, keepdims=True)
    return shifted


def init_beliefs(cost: np.ndarray) -> np.ndarray:
    return softmax_neg(np.asarray(cost, dtype=np.float64))


def local_edge_weights(image: np.ndarray, params: LocalPairParams | None = None) -> EdgeWeights:
    """Three-level edge weights from the summed absolute RGB difference."""
    params = params or LocalPairParams()
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) image, got shape {image.shape}")
    h, w = image.shape[:2]
    img = image.astype(np.int32)
    offsets, weights = [], []
    for dy, dx in _half_offsets(params.connectivity):
        src, dst = _overlap(h, w, dy, dx)
        diff = np.abs(img[src] - img[dst]).sum(axis=-1)
        wt = np.where(diff < params.mu1, params.lambda1,
                      np.where(diff < params.mu2, params.lambda2, params.lambda3))
        offsets.append((dy, dx))
        weights.append(wt.astype(np.float64))
    return EdgeWeights((h, w), tuple(offsets), tuple(weights))


def local_messages(q: np.ndarray, edges: EdgeWeights) -> np.ndarray:
    """``P~_i(l) = sum_{j in N(i)} w(i, j) Q_j(l)``."""
    h, w = edges.shape
    out = np.zeros_like(q)
    for (dy, dx), wt in zip(edges.offsets, edges.weights):
        src, dst = _overlap(h, w, dy, dx)
        out[src] += wt[..., None] * q[dst]
        out[dst] += wt[..., None] * q[src]
    return out


def potts_transform(qt: np.ndarray, omega: float) -> np.ndarray:
    """``omega * sum_{l != d} Q~(l)``."""
    return omega * (qt.sum(axis=-1, keepdims=True) - qt)


def smoothness_transform(pt: np.ndarray, omega_t: float, beta: float) -> np.ndarray:
    """``omega_t * sum_l phi(d, l) P~(l)`` with phi = 0 / beta / 1 for |d-l| = 0 / 1 / >1."""
    prev = np.zeros_like(pt)
    nxt = np.zeros_like(pt)
    prev[..., 1:] = pt[..., :-1]
    nxt[..., :-1] = pt[..., 1:]
    adjacent = prev + nxt
    far = pt.sum(axis=-1, keepdims=True) - pt - adjacent
    return omega_t * (beta * adjacent + far)


class _ExactFilter:
    """Brute-force stand-in for the lattice (small images, testing)."""

    def __init__(self, features):
        self.features = np.asarray(features, dtype=np.float64)
        self.n_points = len(self.features)

    def filter(self, values):
        return exact_filter(self.features, values)


def exact_kernel_filter(image: np.ndarray, spec: FeatureSpec | None = None) -> _ExactFilter:
    """Drop-in replacement for :func:`build_lattice` using the O(N^2) sum."""
    return _ExactFilter(image_features(image, spec or FeatureSpec()))


def mf_iteration(q: np.ndarray, cost: np.ndarray, lattice, edges: EdgeWeights | None,
                 cfg: InferenceConfig) -> np.ndarray:
    """One synchronous mean-field update of every pixel.

    ``lattice`` may be any object with a ``filter`` method (``None`` when
    ``omega == 0``); ``edges`` may be ``None`` when ``omega_t == 0``.
    """
    q = np.asarray(q, dtype=np.float64)
    if q.shape != cost.shape:
        raise ValueError(f"beliefs {q.shape} and cost {cost.shape} differ in shape")
    h, w, m = q.shape
    energy = np.array(cost, dtype=np.float64)

    omega = cfg.full.omega
    if omega > 0:
        flat = q.reshape(h * w, m)
        qt = (lattice.filter(flat) - flat).reshape(h, w, m)
        energy += potts_transform(qt, omega)

    lp = cfg.local
    if lp.omega_t > 0:
        pt = local_messages(q, edges)
        energy += smoothness_transform(pt, lp.omega_t, lp.beta)

    if not np.isfinite(energy).all():
        bad = np.argwhere(~np.isfinite(energy))[0]
        raise NumericalError(f"non-finite update at pixel (y={bad[0]}, x={bad[1]}), label {bad[2]}")
    return softmax_neg(energy)


def run_inference(cost: np.ndarray, image: np.ndarray, cfg: InferenceConfig | None = None,
                  lattice=None, trace=None) -> np.ndarray:
    """Initialise from the unary term and apply ``cfg.iterations`` updates.

    ``trace``, if given, is called as ``trace(iteration, beliefs, change)``
    after every update.
    """
    cfg = cfg or InferenceConfig()
    cost = np.asarray(cost)
    if cost.shape[:2] != np.asarray(image).shape[:2]:
        raise ValueError(f"cost volume {cost.shape} does not match image {np.shape(image)}")
    if cfg.full.omega > 0 and lattice is None:
        lattice = build_lattice(image, cfg.feature)
    edges = local_edge_weights(image, cfg.local) if cfg.local.omega_t > 0 else None

    q = init_beliefs(cost)
    for it in range(cfg.iterations):
        new = mf_iteration(q, cost, lattice, edges, cfg)
        change = float(np.abs(new - q).max())
        q = new
        if trace is not None:
            trace(it + 1, q, change)
        if cfg.early_exit_tol is not None and change < cfg.early_exit_tol:
            log.debug("mean field converged after %d iterations", it + 1)
            break
    return q


def wta(q: np.ndarray) -> np.ndarray:
    """Winner-take-all disparity; ties go to the smaller disparity."""
    return np.argmax(q, axis=-1).astype(np.float32)


def belief_entropy(q: np.ndarray) -> float:
    """Mean per-pixel entropy in nats."""
    with np.errstate(divide="ignore", invalid="ignore"):
        ent = -np.where(q > 0, q * np.log(q), 0.0).sum(axis=-1)
    return float(ent.mean())


def gibbs_energy(disp: np.ndarray, cost: np.ndarray, image: np.ndarray,
                 cfg: InferenceConfig | None = None, max_points: int = 10_000) -> float:
    """Exact energy of a labelling (quadratic in the number of pixels).

    Unary + ``sum_{i<j} omega [d_i != d_j] k(i, j)`` + ``sum_i sum_{j in N(i)}``
    of the local term; the local sum visits each neighbour pair from both
    ends.
    """
    cfg = cfg or InferenceConfig()
    disp = np.asarray(disp)
    h, w, m = cost.shape
    n = h * w
    if n > max_points:
        raise ValueError(f"exact energy limited to {max_points} pixels, got {n}")
    if disp.shape != (h, w) or not np.isfinite(disp).all():
        raise ValueError("labelling must be finite and match the cost volume")
    labels = disp.astype(np.int64)
    if labels.min() < 0 or labels.max() >= m:
        raise ValueError("labels out of range")

    energy = float(np.take_along_axis(cost, labels[..., None], axis=-1).sum())

    flat = labels.ravel()
    if cfg.full.omega > 0:
        feats = image_features(image, cfg.feature)
        total = 0.0
        for i0 in range(0, n, 256):
            d2 = ((feats[i0:i0 + 256, None, :] - feats[None, :, :]) ** 2).sum(axis=-1)
            differ = flat[i0:i0 + 256, None] != flat[None, :]
            total += float((np.exp(-0.5 * d2) * differ).sum())
        energy += cfg.full.omega * total / 2.0

    lp = cfg.local
    if lp.omega_t > 0:
        ii, jj, ww = local_edge_weights(image, lp).edge_list()
        gap = np.abs(flat[ii] - flat[jj])
        phi = np.where(gap == 0, 0.0, np.where(gap == 1, lp.beta, 1.0))
        energy += 2.0 * lp.omega_t * float((ww * phi).sum())
    return energy
