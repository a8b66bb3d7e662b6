"""Pure numpy versions of the compiled kernels (same signatures, same math)."""
from __future__ import annotations

import numpy as np


def sinc2_product(t, a, a2_tail, a4_tail, x_small):
    t = np.abs(np.asarray(t, dtype=float))
    out = np.empty_like(t)
    # a is decreasing, so the exactly-evaluated factors form a prefix
    cut = np.searchsorted(-a, -x_small / np.maximum(t, 1e-300), side="right")
    for i, (tt, m) in enumerate(zip(t, cut)):
        if m:
            x = a[:m] * tt
            p = np.prod((np.sin(x) / x) ** 2)
        else:
            p = 1.0
        t2 = tt * tt
        out[i] = p * np.exp(-t2 * a2_tail[m] / 3.0 - t2 * t2 * a4_tail[m] / 90.0) if p > 1e-300 else 0.0
    return out


def multiplier_values(w, coefs, radius):
    w = np.asarray(w, dtype=float)
    aw = np.abs(w)
    npan, deg = coefs.shape[0], coefs.shape[1] - 1
    h = radius / npan
    p = np.minimum((aw / h).astype(np.int64), npan - 1)
    x = (aw - (p + 0.5) * h) / (0.5 * h)
    b1 = np.zeros_like(aw)
    b2 = np.zeros_like(aw)
    for k in range(deg, 0, -1):
        b1, b2 = coefs[p, k] + 2.0 * x * b1 - b2, b1
    val = coefs[p, 0] + x * b1 - b2
    out = np.where(w > 0, val, -val)
    far = aw >= radius
    out[far] = 1.0 / w[far]
    out[aw == 0.0] = 0.0
    return out


def multiplier_matrix(E, coefs, radius):
    E = np.asarray(E, dtype=float)
    G = np.empty((E.size, E.size))
    step = max(1, 2**20 // max(E.size, 1))
    for i in range(0, E.size, step):
        G[i:i + step] = multiplier_values((E[None, :] - E[i:i + step, None]).ravel(), coefs, radius).reshape(-1, E.size)
    return G
