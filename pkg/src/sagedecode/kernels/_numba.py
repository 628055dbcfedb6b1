"""numba-compiled twins of ``_numpy.py``."""

import math

import numpy as np
from numba import njit

_cfg = dict(nogil=True, cache=True, fastmath=False)

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_INV53 = 1.0 / 9007199254740992.0


@njit(**_cfg)
def _hash_uniforms(key, n):
    out = np.empty(n)
    for i in range(n):
        z = key + _GOLDEN * np.uint64(i + 1)
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
        z = z ^ (z >> np.uint64(31))
        out[i] = (np.float64(z >> np.uint64(11)) + 0.5) * _INV53
    return out


def hash_uniforms(key, n):
    return _hash_uniforms(np.uint64(key), n)


@njit(**_cfg)
def _leading_successes(u, probs):
    n, d = u.shape
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        c = 0
        while c < d and u[i, c] < probs[c]:
            c += 1
        out[i] = c
    return out


def leading_successes(u, probs):
    return _leading_successes(np.ascontiguousarray(u), np.ascontiguousarray(probs, dtype=np.float64))


@njit(**_cfg)
def _min_envelope_entropy(p1, k):
    m = min(math.floor(1.0 / p1), k)
    r = max(1.0 - m * p1, 0.0)
    h = -m * p1 * math.log(p1)
    if r > 0.0:
        h -= r * math.log(r)
    return h


@njit(**_cfg)
def _min_p1_for_entropy(targets, k, iters):
    out = np.empty(targets.shape[0])
    for j in range(targets.shape[0]):
        lo = 1.0 / k
        hi = 1.0
        for _ in range(iters):
            mid = 0.5 * (lo + hi)
            if _min_envelope_entropy(mid, k) > targets[j]:
                lo = mid
            else:
                hi = mid
            if hi - lo <= 1e-15:
                break
        out[j] = hi
    return out


def min_p1_for_entropy(targets, k, iters=200):
    t = np.asarray(targets, dtype=np.float64)
    return _min_p1_for_entropy(np.ascontiguousarray(t.ravel()), k, iters).reshape(t.shape)


@njit(**_cfg)
def _mix_entropy(w, v):
    a = 1.0 - w + w / v
    b = w / v
    h = 0.0
    if a > 0.0:
        h -= a * math.log(a)
    if b > 0.0:
        h -= (v - 1) * b * math.log(b)
    return h


@njit(**_cfg)
def _mix_weight_for_entropy(targets, v, iters):
    out = np.empty(targets.shape[0])
    hmax = math.log(v)
    for j in range(targets.shape[0]):
        t = targets[j]
        if t <= 0.0:
            out[j] = 0.0
            continue
        if t >= hmax:
            out[j] = 1.0
            continue
        lo = 0.0
        hi = 1.0
        for _ in range(iters):
            mid = 0.5 * (lo + hi)
            if _mix_entropy(mid, v) < t:
                lo = mid
            else:
                hi = mid
            if hi - lo <= 1e-16:
                break
        out[j] = 0.5 * (lo + hi)
    return out


def mix_weight_for_entropy(targets, v, iters=200):
    t = np.asarray(targets, dtype=np.float64)
    return _mix_weight_for_entropy(np.ascontiguousarray(t.ravel()), v, iters).reshape(t.shape)


@njit(**_cfg)
def _lagged_pearson(x, max_lag):
    n = x.shape[0]
    values = np.zeros(max_lag + 1)
    degenerate = np.zeros(max_lag + 1, dtype=np.bool_)
    for k in range(max_lag + 1):
        m = n - k
        ma = 0.0
        mb = 0.0
        for i in range(m):
            ma += x[i]
            mb += x[i + k]
        ma /= m
        mb /= m
        sab = 0.0
        saa = 0.0
        sbb = 0.0
        for i in range(m):
            da = x[i] - ma
            db = x[i + k] - mb
            sab += da * db
            saa += da * da
            sbb += db * db
        den = math.sqrt(saa) * math.sqrt(sbb)
        if den <= 0.0:
            degenerate[k] = True
        else:
            values[k] = min(1.0, max(-1.0, sab / den))
    return values, degenerate


def lagged_pearson(x, max_lag):
    return _lagged_pearson(np.ascontiguousarray(x, dtype=np.float64), max_lag)


@njit(**_cfg)
def _ancestor_mask(parents):
    n = parents.shape[0]
    mask = np.zeros((n, n), dtype=np.bool_)
    for i in range(n):
        p = parents[i]
        if p >= 0:
            for j in range(p + 1):
                mask[i, j] = mask[p, j]
        mask[i, i] = True
    return mask


def ancestor_mask(parents):
    return _ancestor_mask(np.ascontiguousarray(parents, dtype=np.int64))
