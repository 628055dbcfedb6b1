import csv
import hashlib
import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sagedecode.engine import DecodeTrace, decode
from sagedecode.metrics import (
    CSV_COLUMNS,
    export,
    lag_autocorrelation,
    load_trace,
    read_csv_column,
    summarize,
)
from sagedecode.models import ModelSpec, ar1_entropy_schedule, default_prompt, make_pair
from sagedecode.theory import CostModel


def _run(mode, spec, n=120, **kw):
    draft, target = make_pair(spec)
    return decode(mode, draft, target, default_prompt(spec), n, **kw)


@pytest.fixture(scope="module")
def sage_trace():
    return _run("sage", ModelSpec("coupled_pair", 16, 4, {"epsilon": 0.05}), 200)


def test_vanilla_speedup_is_one():
    t = _run("vanilla_ar", ModelSpec("coupled_pair", 16, 1, {"epsilon": 0.05}))
    for cost in (CostModel(0.05, 1), CostModel(0.3, 2.5)):
        s = summarize(t, cost)
        assert s.modeled_speedup == 1.0
        assert s.mean_tau == 0.0 and s.rounds == s.tokens == 120


def test_exact_draft_chain_speedup_is_five():
    t = _run("sd_chain", ModelSpec("coupled_pair", 16, 2, {"epsilon": 0.0}), 200, chain_depth=4)
    s = summarize(t, CostModel(0.0, 1.0))
    assert s.mean_tau == 4.0
    assert s.modeled_speedup == pytest.approx(5.0, abs=1e-12)


def test_per_level_cost_cheaper(sage_trace):
    node = summarize(sage_trace, CostModel(0.05, 1), "per_node")
    level = summarize(sage_trace, CostModel(0.05, 1), "per_level")
    assert level.modeled_speedup >= node.modeled_speedup
    assert level.mean_tau == node.mean_tau
    with pytest.raises(ValueError):
        summarize(sage_trace, CostModel(), "per_token")


@given(st.floats(0.001, 1000), st.floats(0, 1), st.floats(0.1, 10))
def test_speedup_scale_invariant(lam, c_d, c_t):
    t = _SCALE_TRACE
    a = summarize(t, CostModel(c_d, c_t)).modeled_speedup
    b = summarize(t, CostModel(lam * c_d, lam * c_t)).modeled_speedup
    assert b == pytest.approx(a, rel=1e-12)


_SCALE_TRACE = _run("sd_tree", ModelSpec("coupled_pair", 12, 9, {"epsilon": 0.1}), 60)


def test_summarize_errors():
    with pytest.raises(ValueError):
        summarize(DecodeTrace("sage", ()), CostModel())
    with pytest.raises(ValueError):
        summarize(_SCALE_TRACE, CostModel(0.1, 0.0))


# -- autocorrelation --------------------------------------------------------------


def test_lag_zero_and_constant():
    ac = lag_autocorrelation(np.arange(50.0) % 7, 3, include_zero=True)
    assert ac.lags[0] == 0 and ac.values[0] == pytest.approx(1.0)
    flat = lag_autocorrelation(np.ones(30), 5)
    assert flat.values == [0.0] * 5 and all(flat.degenerate)
    with pytest.raises(ValueError):
        lag_autocorrelation([1.0, 2.0, 3.0], 1)
    with pytest.raises(ValueError):
        lag_autocorrelation([1.0, float("nan")] * 10, 2)


def _schedule(ar, seed=0, n=10_000):
    h, _ = ar1_entropy_schedule(n, [(n, 1.7)], ar, 0.25, seed, np.log(32))
    return h


def test_ar1_and_iid_lag_one():
    assert 0.75 <= lag_autocorrelation(_schedule(0.8), 5).values[0] <= 0.85
    assert abs(lag_autocorrelation(_schedule(0.0), 5).values[0]) < 0.05
    noise = np.random.default_rng(5).standard_normal(10_000)
    assert abs(lag_autocorrelation(noise, 1).values[0]) < 0.05


def test_ar1_decay_matches_theory():
    vals = lag_autocorrelation(_schedule(0.8, seed=3, n=50_000), 4).values
    assert vals == pytest.approx([0.8**k for k in range(1, 5)], abs=0.03)


def test_matches_numpy_corrcoef():
    x = np.random.default_rng(1).standard_normal(500).cumsum()
    vals = lag_autocorrelation(x, 6).values
    ref = [np.corrcoef(x[:-k], x[k:])[0, 1] for k in range(1, 7)]
    assert vals == pytest.approx(ref, abs=1e-12)


@given(st.lists(st.floats(-1e3, 1e3), min_size=12, max_size=80), st.integers(1, 8))
def test_reversal_symmetry(xs, k):
    x = np.array(xs)
    k = min(k, len(x) - 3)
    a = lag_autocorrelation(x, k)
    b = lag_autocorrelation(x[::-1], k)
    assert a.degenerate == b.degenerate
    assert np.allclose(a.values, b.values, rtol=0, atol=1e-12)


# -- export -------------------------------------------------------------------------


def test_json_round_trip(tmp_path, sage_trace):
    p = export(sage_trace, "json", tmp_path / "t.json")
    assert load_trace(p) == sage_trace


def test_csv_rows_and_columns(tmp_path, sage_trace):
    p = export(sage_trace, "csv", tmp_path / "t.csv")
    with open(p, newline="") as fh:
        rows = list(csv.reader(fh))
    assert len(rows) == sage_trace.rounds + 1
    assert tuple(rows[0]) == CSV_COLUMNS
    ent = read_csv_column(p, "entropy")
    assert ent == [r.entropy for r in sage_trace.records if r.entropy is not None]


def test_summary_export(tmp_path, sage_trace):
    s = summarize(sage_trace)
    j = json.loads(export(s, "json", tmp_path / "s.json").read_text())
    assert j["mean_tau"] == s.mean_tau
    lines = export(s, "csv", tmp_path / "s.csv").read_text().splitlines()
    assert len(lines) == 2
    with pytest.raises(ValueError):
        export(s, "xml", tmp_path / "s.xml")
    with pytest.raises(TypeError):
        export({"a": 1}, "csv", tmp_path / "d.csv")
    with pytest.raises(OSError):
        export(s, "json", tmp_path / "missing" / "s.json")


def test_identical_runs_hash_identical(tmp_path):
    spec = ModelSpec("entropy_schedule", 12, 2, {"noise_std": 0.2})
    digests = set()
    for i in range(2):
        t = _run("sage", spec, 150)
        for fmt in ("json", "csv"):
            p = export(t, fmt, tmp_path / f"{i}.{fmt}")
            digests.add((fmt, hashlib.sha256(p.read_bytes()).hexdigest()))
    assert len(digests) == 2
