"""Pure-numpy implementations of the hot kernels.

Every function here has a numba twin in ``_numba.py`` with the same
signature and, for integer outputs, bit-identical results.
"""

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_INV53 = 1.0 / 9007199254740992.0


def _splitmix(z):
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def hash_uniforms(key, n):
    """``n`` uniforms in (0, 1) from a 64-bit key (counter-mode splitmix64)."""
    with np.errstate(over="ignore"):
        ctr = np.uint64(key) + _GOLDEN * np.arange(1, n + 1, dtype=np.uint64)
        z = _splitmix(ctr)
    return ((z >> np.uint64(11)).astype(np.float64) + 0.5) * _INV53


def leading_successes(u, probs):
    """Count leading ``u[i, l] < probs[l]`` per row (first failure stops)."""
    ok = u < probs[None, :]
    fail = ~ok
    first_fail = np.argmax(fail, axis=1)
    all_ok = ~fail.any(axis=1)
    return np.where(all_ok, u.shape[1], first_fail).astype(np.int64)


def _min_envelope_entropy(p1, k):
    # entropy of (p1, ..., p1, r, 0, ...) with floor(1/p1) copies of p1
    m = np.minimum(np.floor(1.0 / p1), k)
    r = np.clip(1.0 - m * p1, 0.0, None)
    with np.errstate(divide="ignore", invalid="ignore"):
        rlogr = np.where(r > 0, r * np.log(np.where(r > 0, r, 1.0)), 0.0)
    return -m * p1 * np.log(p1) - rlogr


def min_p1_for_entropy(targets, k, iters=200):
    """Smallest top probability of a k-distribution with entropy == target.

    Bisection on the minimum-entropy envelope, which is non-increasing in p1.
    """
    targets = np.asarray(targets, dtype=np.float64)
    lo = np.full(targets.shape, 1.0 / k)
    hi = np.ones(targets.shape)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        h = _min_envelope_entropy(mid, k)
        above = h > targets
        lo = np.where(above, mid, lo)
        hi = np.where(above, hi, mid)
        if np.all(hi - lo <= 1e-15):
            break
    return hi


def _mix_entropy(w, v):
    a = 1.0 - w + w / v
    b = w / v
    with np.errstate(divide="ignore", invalid="ignore"):
        ha = np.where(a > 0, -a * np.log(np.where(a > 0, a, 1.0)), 0.0)
        hb = np.where(b > 0, -(v - 1) * b * np.log(np.where(b > 0, b, 1.0)), 0.0)
    return ha + hb


def mix_weight_for_entropy(targets, v, iters=200):
    """Weight ``w`` so that ``(1-w)*onehot + w*uniform`` has the target entropy."""
    targets = np.asarray(targets, dtype=np.float64)
    lo = np.zeros(targets.shape)
    hi = np.ones(targets.shape)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        below = _mix_entropy(mid, v) < targets
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
        if np.all(hi - lo <= 1e-16):
            break
    out = 0.5 * (lo + hi)
    out = np.where(targets <= 0.0, 0.0, out)
    return np.where(targets >= np.log(v), 1.0, out)


def lagged_pearson(x, max_lag):
    """Pearson r between ``x[:-k]`` and ``x[k:]`` for k = 0..max_lag.

    Returns ``(values, degenerate)``; a lag whose pairs have zero variance
    gets value 0 and ``degenerate=True``.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    values = np.zeros(max_lag + 1)
    degenerate = np.zeros(max_lag + 1, dtype=np.bool_)
    for k in range(max_lag + 1):
        a = x[: n - k]
        b = x[k:]
        da = a - a.mean()
        db = b - b.mean()
        saa = np.dot(da, da)
        sbb = np.dot(db, db)
        den = np.sqrt(saa) * np.sqrt(sbb)
        if den <= 0.0:
            degenerate[k] = True
            continue
        values[k] = min(1.0, max(-1.0, np.dot(da, db) / den))
    return values, degenerate


def ancestor_mask(parents):
    """Boolean |T|x|T| mask; row i marks i and its ancestors (parent -1 = root)."""
    parents = np.asarray(parents, dtype=np.int64)
    n = parents.shape[0]
    mask = np.zeros((n, n), dtype=np.bool_)
    for i in range(n):
        p = parents[i]
        if p >= 0:
            mask[i] = mask[p]
        mask[i, i] = True
    return mask
