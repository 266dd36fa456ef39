"""Shared test oracles.

numeric_gradient is the independent check for every autodiff op: central
differences on the raw numpy arrays, no Tensor machinery involved.
"""

import numpy as np


def numeric_gradient(f, arrays, index, h=1e-4):
    """Central-difference gradient of scalar f(*arrays) w.r.t. arrays[index]."""
    base = [np.array(a, dtype=np.float64) for a in arrays]
    target = base[index]
    grad = np.zeros_like(target)
    it = np.nditer(target, flags=["multi_index"])
    while not it.finished:
        ix = it.multi_index
        keep = target[ix]
        target[ix] = keep + h
        hi = f(*base)
        target[ix] = keep - h
        lo = f(*base)
        target[ix] = keep
        grad[ix] = (hi - lo) / (2.0 * h)
        it.iternext()
    return grad


def relative_error(analytic, numeric):
    """Norm-wise relative error between gradient arrays."""
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    denom = max(np.linalg.norm(a), np.linalg.norm(n), 1e-8)
    return np.linalg.norm(a - n) / denom


def pool_safe_input(rng, n, c, h, w, gap=0.25):
    """Random 4-D array whose every 2x2 pooling window has a clear maximum.

    Each window gets the values {0, 1, 2, 3} * gap in a random order plus
    jitter smaller than gap/2, so ties are impossible and finite differences
    never step across an argmax change.
    """
    h2, w2 = h // 2, w // 2
    base = np.arange(4.0) * gap
    out = np.zeros((n, c, h, w))
    for i in range(n):
        for j in range(c):
            for r in range(h2):
                for s in range(w2):
                    vals = base[rng.permutation(4)] + rng.uniform(0, gap * 0.4, 4)
                    out[i, j, 2 * r:2 * r + 2, 2 * s:2 * s + 2] = vals.reshape(2, 2)
            out[i, j] += rng.uniform(-0.5, 0.5)
    # odd trailing rows/columns are dropped by the pool; fill them anyway
    if h % 2:
        out[:, :, -1, :] = rng.uniform(-1, 1, (n, c, w))
    if w % 2:
        out[:, :, :, -1] = rng.uniform(-1, 1, (n, c, h))
    return out


def away_from_zero(rng, shape, low=0.1, high=1.2):
    """Values bounded away from 0 on both sides (safe for relu kinks)."""
    sign = np.where(rng.random(shape) < 0.5, -1.0, 1.0)
    return sign * rng.uniform(low, high, shape)
