"""Independent, deliberately naive reference implementations used by tests.

Nothing here imports the package under test; each routine follows the
defining formula directly, pixel by pixel.
"""
import math

import numpy as np


def census_bits(gray, window):
    """Per-pixel list of booleans, row-major neighbours, centre skipped."""
    h, w = gray.shape
    r = window // 2
    out = np.zeros((h, w, window * window - 1), dtype=bool)
    for y in range(h):
        for x in range(w):
            k = 0
            for dy in range(-r, r + 1):
                for dx in range(-r, r + 1):
                    if dy == 0 and dx == 0:
                        continue
                    yy = min(max(y + dy, 0), h - 1)
                    xx = min(max(x + dx, 0), w - 1)
                    out[y, x, k] = gray[yy, xx] < gray[y, x]
                    k += 1
    return out


def grad_x(gray):
    h, w = gray.shape
    g = np.zeros((h, w))
    for y in range(h):
        for x in range(w):
            if w < 2:
                continue
            if x == 0:
                g[y, x] = gray[y, 1] - gray[y, 0]
            elif x == w - 1:
                g[y, x] = gray[y, w - 1] - gray[y, w - 2]
            else:
                g[y, x] = (gray[y, x + 1] - gray[y, x - 1]) / 2.0
    return g


def cost_volume(left, right, levels, window=5, w_c=1.0, w_g=0.4, tau=16.0, oov=None):
    """Left-reference cost by the defining formula."""
    if oov is None:
        oov = 0.9 * (w_c * (window * window - 1) + w_g * tau)
    cl, cr = census_bits(left, window), census_bits(right, window)
    gl, gr = grad_x(left), grad_x(right)
    h, w = left.shape
    cost = np.empty((h, w, levels))
    for y in range(h):
        for x in range(w):
            for d in range(levels):
                if x - d < 0:
                    cost[y, x, d] = oov
                    continue
                ham = int(np.sum(cl[y, x] != cr[y, x - d]))
                cost[y, x, d] = w_c * ham + w_g * min(abs(gl[y, x] - gr[y, x - d]), tau)
    return cost


def features(image, sigma_x=5.0, sigma_f=55.0):
    h, w, _ = image.shape
    out = []
    for y in range(h):
        for x in range(w):
            r, g, b = (float(c) for c in image[y, x])
            out.append([x / sigma_x, y / sigma_x, r / sigma_f, g / sigma_f, b / sigma_f])
    return np.array(out)


def kernel(fi, fj):
    return math.exp(-0.5 * sum((a - b) ** 2 for a, b in zip(fi, fj)))


def gaussian_sum(feats, values):
    """sum_j exp(-|p_i - p_j|^2 / 2) v_j, self term included, double loop."""
    n = len(feats)
    values = np.asarray(values, dtype=np.float64).reshape(n, -1)
    out = np.zeros_like(values)
    for i in range(n):
        for j in range(n):
            out[i] += kernel(feats[i], feats[j]) * values[j]
    return out


def edge_weight(ci, cj, mu1=7, mu2=15, l1=3.5, l2=3.0, l3=1.0):
    diff = sum(abs(int(a) - int(b)) for a, b in zip(ci, cj))
    if diff < mu1:
        return l1
    if diff < mu2:
        return l2
    return l3


def phi(a, b, beta):
    gap = abs(a - b)
    return 0.0 if gap == 0 else (beta if gap == 1 else 1.0)


def neighbours(y, x, h, w):
    for dy, dx in ((-1, 0), (1, 0), (0, -1), (0, 1)):
        if 0 <= y + dy < h and 0 <= x + dx < w:
            yield y + dy, x + dx


def mean_field_update(q, cost, image, omega, omega_t, beta, sigma_x=5.0, sigma_f=55.0):
    """One synchronous update written straight from the update equation.

    Q_i(d) proportional to exp(-psi_u(i, d)
        - omega * sum_{j != i} k(i, j) sum_{l != d} Q_j(l)
        - omega_t * sum_{j in N(i)} w(i, j) sum_l phi(d, l) Q_j(l)).
    """
    h, w, m = cost.shape
    feats = features(image, sigma_x, sigma_f)
    qf = q.reshape(h * w, m)
    new = np.zeros((h, w, m))
    for y in range(h):
        for x in range(w):
            i = y * w + x
            kij = np.array([kernel(feats[i], feats[j]) if j != i else 0.0 for j in range(h * w)])
            u = np.zeros(m)
            for d in range(m):
                full = 0.0
                for j in range(h * w):
                    if j != i and kij[j] != 0.0:
                        full += kij[j] * (qf[j].sum() - qf[j, d])
                local = 0.0
                for yy, xx in neighbours(y, x, h, w):
                    wt = edge_weight(image[y, x], image[yy, xx])
                    local += wt * sum(phi(d, l, beta) * q[yy, xx, l] for l in range(m))
                u[d] = -cost[y, x, d] - omega * full - omega_t * local
            u -= u.max()
            e = np.exp(u)
            new[y, x] = e / e.sum()
    return new


def energy(labels, cost, image, omega, omega_t, beta, sigma_x=5.0, sigma_f=55.0):
    """Unary + sum_{i<j} omega [d_i != d_j] k + sum_i sum_{j in N(i)} omega_t w phi."""
    h, w, m = cost.shape
    feats = features(image, sigma_x, sigma_f)
    flat = labels.ravel().astype(int)
    e = sum(cost[y, x, int(labels[y, x])] for y in range(h) for x in range(w))
    for i in range(h * w):
        for j in range(i + 1, h * w):
            if flat[i] != flat[j]:
                e += omega * kernel(feats[i], feats[j])
    for y in range(h):
        for x in range(w):
            for yy, xx in neighbours(y, x, h, w):
                e += omega_t * edge_weight(image[y, x], image[yy, xx]) * phi(
                    labels[y, x], labels[yy, xx], beta)
    return e


def weighted_median(disp, guide, y, x, window, sigma_x=5.0, sigma_f=55.0):
    """Smallest window value whose cumulative bilateral weight reaches half."""
    h, w = disp.shape
    r = window // 2
    pairs = []
    for dy in range(-r, r + 1):
        for dx in range(-r, r + 1):
            yy, xx = y + dy, x + dx
            if not (0 <= yy < h and 0 <= xx < w):
                continue
            dc = sum((float(a) - float(b)) ** 2 for a, b in zip(guide[yy, xx], guide[y, x]))
            wt = math.exp(-(dy * dy + dx * dx) / (2 * sigma_x ** 2) - dc / (2 * sigma_f ** 2))
            pairs.append((float(disp[yy, xx]), wt))
    pairs.sort(key=lambda p: p[0])
    total = sum(wt for _, wt in pairs)
    acc = 0.0
    for v, wt in pairs:
        acc += wt
        if acc >= 0.5 * total:
            return v
    return pairs[-1][0]
