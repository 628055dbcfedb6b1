import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sagedecode import kernels
from sagedecode.kernels import _numba, _numpy

BACKENDS = [_numpy, _numba]


def test_backend_flag_default():
    assert kernels.BACKEND in ("numba", "numpy")


@given(st.integers(0, 2**64 - 1), st.integers(0, 50))
def test_hash_uniforms_match_across_backends(key, n):
    a = _numpy.hash_uniforms(key, n)
    b = _numba.hash_uniforms(key, n)
    assert np.array_equal(a, b)
    assert np.all((a > 0) & (a < 1))


def test_hash_uniforms_roughly_uniform():
    u = _numpy.hash_uniforms(12345, 200_000)
    assert abs(u.mean() - 0.5) < 0.005
    assert abs(u.var() - 1 / 12) < 0.002


@given(st.integers(1, 40), st.integers(1, 9), st.integers(0, 2**32 - 1))
def test_leading_successes_match_and_count(n, d, seed):
    rng = np.random.default_rng(seed)
    u = rng.random((n, d))
    probs = rng.random(d)
    a = _numpy.leading_successes(u, probs)
    b = _numba.leading_successes(u, probs)
    assert np.array_equal(a, b)
    for row, c in zip(u, a):
        assert all(row[:c] < probs[:c])
        assert c == d or row[c] >= probs[c]


@pytest.mark.parametrize("mod", BACKENDS)
def test_min_p1_endpoints(mod):
    k = 7
    out = mod.min_p1_for_entropy(np.array([0.0, math.log(k)]), k)
    assert out[0] == pytest.approx(1.0, abs=1e-12)
    assert out[1] == pytest.approx(1.0 / k, abs=1e-9)


@given(st.integers(2, 12), st.lists(st.floats(0, 1), min_size=1, max_size=8))
def test_min_p1_backends_agree(k, fracs):
    t = np.array(fracs) * math.log(k)
    assert np.allclose(_numpy.min_p1_for_entropy(t, k), _numba.min_p1_for_entropy(t, k), atol=1e-14)


@given(st.integers(2, 64), st.lists(st.floats(0, 1), min_size=1, max_size=8))
def test_mix_weight_hits_entropy(v, fracs):
    t = np.array(fracs) * math.log(v)
    for mod in BACKENDS:
        w = mod.mix_weight_for_entropy(t, v)
        a = 1 - w + w / v
        b = w / v
        with np.errstate(divide="ignore", invalid="ignore"):
            h = np.where(a > 0, -a * np.log(a), 0) + np.where(b > 0, -(v - 1) * b * np.log(b), 0)
        assert np.allclose(h, t, atol=1e-9)


@given(st.lists(st.floats(-100, 100), min_size=6, max_size=60), st.integers(1, 3))
def test_lagged_pearson_matches_corrcoef(xs, lag):
    x = np.array(xs)
    va, da = _numpy.lagged_pearson(x, lag)
    vb, db = _numba.lagged_pearson(x, lag)
    assert np.array_equal(da, db)
    assert np.allclose(va, vb, atol=1e-12)
    a, b = x[:-lag], x[lag:]
    if a.std() > 1e-9 and b.std() > 1e-9 and not da[lag]:
        assert va[lag] == pytest.approx(np.corrcoef(a, b)[0, 1], abs=1e-9)


def test_lagged_pearson_constant_is_flagged():
    v, d = _numpy.lagged_pearson(np.ones(10), 2)
    assert d.all() and not v.any()


@given(st.lists(st.integers(0, 10), max_size=30))
def test_ancestor_mask_backends_and_closure(seq):
    parents = [-1 if i == 0 else min(p, i - 1) if p % 3 else -1 for i, p in enumerate(seq)]
    a = _numpy.ancestor_mask(np.array(parents, dtype=np.int64))
    b = _numba.ancestor_mask(np.array(parents, dtype=np.int64))
    assert np.array_equal(a, b)
    for i in range(len(parents)):
        anc = {i}
        j = parents[i]
        while j >= 0:
            anc.add(j)
            j = parents[j]
        assert set(np.flatnonzero(a[i])) == anc


def test_benchmark_script_runs(capsys):
    import runpy
    from pathlib import Path

    bench = runpy.run_path(str(Path(__file__).parents[1] / "benchmarks" / "bench_kernels.py"))
    bench["main"](["--quick", "--repeat", "1"])
    out = capsys.readouterr().out.splitlines()
    assert len(out) == 7 and all(line.endswith("True") for line in out[1:])
