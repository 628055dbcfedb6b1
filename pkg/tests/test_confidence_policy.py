import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sagedecode.confidence import confidence, confidence_of, shannon_entropy, topk_renormalize
from sagedecode.models import ConfigError
from sagedecode.policy import (
    AdaptiveConfig,
    HistoryTracker,
    depth_for,
    history_update,
    level_threshold,
    level_width,
    round_half_up,
    shape_for,
    width_for,
)

DEFAULTS = AdaptiveConfig()

# -- confidence ----------------------------------------------------------------


def test_topk_examples():
    d = topk_renormalize(np.array([0.5, 0.3, 0.2]), 2)
    assert d.probs.tolist() == pytest.approx([0.625, 0.375])
    assert d.tokens.tolist() == [0, 1]
    one = topk_renormalize(np.eye(6)[4], 3)
    assert one.probs.tolist() == [1.0, 0.0, 0.0] and one.tokens[0] == 4
    assert np.allclose(topk_renormalize(np.full(5, 0.2), 5).probs, 0.2)
    with pytest.raises(ValueError):
        topk_renormalize(np.full(5, 0.2), 6)
    with pytest.raises(ValueError):
        topk_renormalize(np.full(5, 0.2), 1)


def test_tie_break_lower_id():
    d = topk_renormalize(np.array([0.1, 0.3, 0.3, 0.3]), 2)
    assert d.tokens.tolist() == [1, 2]


def test_entropy_examples():
    assert shannon_entropy(topk_renormalize(np.full(10, 0.1), 10)) == pytest.approx(math.log(10))
    assert shannon_entropy(topk_renormalize(np.eye(4)[0], 4)) == 0.0
    assert shannon_entropy(topk_renormalize(np.array([0.8, 0.2]), 2)) == pytest.approx(0.500402, abs=1e-6)


def test_confidence_examples():
    assert confidence(topk_renormalize(np.full(10, 0.1), 10)).alpha == pytest.approx(0.0, abs=1e-12)
    assert confidence(topk_renormalize(np.eye(10)[3], 10)).alpha == 1.0
    s = confidence(topk_renormalize(np.array([0.8, 0.2]), 2))
    assert s.alpha == pytest.approx(1 - 0.500402 / 0.693147, abs=1e-5)
    assert s.alpha == pytest.approx(0.27807, abs=1e-5)


dists = st.lists(st.floats(0.0, 1.0), min_size=2, max_size=20).filter(lambda v: sum(v) > 1e-3)


@given(dists, st.integers(2, 20))
def test_confidence_range_and_identity(v, k):
    p = np.array(v) / sum(v)
    k = min(k, p.size)
    s = confidence_of(p, k)
    assert 0.0 <= s.alpha <= 1.0
    assert 0.0 <= s.entropy <= math.log(k) + 1e-12
    assert s.alpha == pytest.approx(1 - s.entropy / math.log(k), abs=1e-12)


@given(dists, st.floats(0.01, 100))
def test_topk_scale_invariance(v, c):
    p = np.array(v) / sum(v)
    q = c * p
    q = q / q.sum()
    k = min(3, p.size)
    assert np.allclose(topk_renormalize(q, k).probs, topk_renormalize(p, k).probs, atol=1e-12)


@given(dists, dists)
def test_alpha_orders_like_entropy(a, b):
    n = min(len(a), len(b))
    p = np.array(a[:n]) + 1e-9
    q = np.array(b[:n]) + 1e-9
    sp, sq = confidence_of(p / p.sum(), n), confidence_of(q / q.sum(), n)
    if sp.entropy < sq.entropy - 1e-12:
        assert sp.alpha > sq.alpha


# -- policy --------------------------------------------------------------------


def test_endpoint_shapes():
    assert (depth_for(0.0, DEFAULTS), width_for(0.0, DEFAULTS)) == (3, 10)
    assert (depth_for(1.0, DEFAULTS), width_for(1.0, DEFAULTS)) == (8, 2)
    assert depth_for(0.5, DEFAULTS) == 6
    assert width_for(0.75, DEFAULTS) == 4
    s = shape_for(0.5, DEFAULTS)
    assert (s.depth, s.width, s.alpha) == (6, 6, 0.5)


def test_round_half_up():
    assert [round_half_up(x) for x in (0.5, 1.5, 2.5, 2.49)] == [1, 2, 3, 2]


@given(st.floats(0, 1), st.floats(0, 1), st.integers(3, 8))
def test_depth_width_monotone(a1, a2, eff):
    lo, hi = sorted((a1, a2))
    tr = HistoryTracker(DEFAULTS, effective_d_max=eff)
    assert depth_for(lo, DEFAULTS, tr) <= depth_for(hi, DEFAULTS, tr) <= eff
    assert DEFAULTS.d_min <= depth_for(lo, DEFAULTS, tr)
    assert width_for(lo, DEFAULTS) >= width_for(hi, DEFAULTS)
    assert DEFAULTS.w_min <= width_for(hi, DEFAULTS) <= DEFAULTS.w_max


def test_level_width_examples():
    assert level_width(8, 2, 0.5) == 4
    assert level_width(7, 1, 1.0) == 7
    assert level_width(7, 1, 1.0, cap_first_level=False) == 11
    assert level_width(2, 8, 0.0) == 1


@given(st.integers(1, 10), st.floats(0, 1), st.integers(1, 9))
def test_level_width_floor_and_decay(base, pp, level):
    assert level_width(base, level, pp) >= 1
    assert level_width(base, level + 1, pp) <= level_width(base, level, pp)


def test_level_threshold():
    assert level_threshold(5, 5) == pytest.approx(0.1)
    assert level_threshold(1, 5) == pytest.approx(0.02)
    assert [level_threshold(l, 6) for l in range(1, 7)] == sorted(level_threshold(l, 6) for l in range(1, 7))
    with pytest.raises(ValueError):
        level_threshold(0, 3)


def test_config_validation():
    for bad in ({"d_min": 1}, {"d_min": 9}, {"w_min": 0}, {"k": 1}, {"n_max": 2},
                {"lower_thresh": 3.0}, {"threshold_mode": "x"}, {"history_signal": "x"}):
        with pytest.raises(ConfigError):
            AdaptiveConfig(**bad)
    with pytest.raises(ConfigError):
        AdaptiveConfig.from_dict({"depth": 3})
    assert AdaptiveConfig.from_dict(DEFAULTS.to_dict()) == DEFAULTS


def test_history_streams():
    tr = HistoryTracker(DEFAULTS)
    seen = [history_update(tr, 1, DEFAULTS).effective_d_max for _ in range(15)]
    assert seen == [8] * 9 + [7, 6, 5, 4, 3, 3]
    ups = [tr.update(5).effective_d_max for _ in range(10)]
    # the window mean crosses 3 once six of ten entries are 5s
    assert ups == [3] * 5 + [4, 5, 6, 7, 8]
    band = HistoryTracker(DEFAULTS, effective_d_max=6)
    assert {band.update(t).effective_d_max for t in [2, 3] * 10} == {6}
    assert len(band.recent_taus) == DEFAULTS.window


@given(st.lists(st.integers(0, 9), max_size=80))
def test_history_bounds(taus):
    tr = HistoryTracker(DEFAULTS)
    for t in taus:
        tr.update(t)
        assert DEFAULTS.d_min <= tr.effective_d_max <= DEFAULTS.d_max
        assert len(tr.recent_taus) <= DEFAULTS.window


def test_history_rejects_negative():
    with pytest.raises(ValueError):
        HistoryTracker(DEFAULTS).update(-1)
