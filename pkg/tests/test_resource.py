import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import make_round
from dpor.config import UsageParams
from dpor.engine.resource import account_usage_score, usage_scores, usage_weight

PARAMS = UsageParams()


@pytest.mark.parametrize("x, expected", [(0.75, 1.0), (0.0, 0.0), (0.34, 0.5), (0.68, 1.0), (0.88, 1.0), (1.0, 0.0)])
def test_usage_weight_examples(x, expected):
    assert usage_weight(x, PARAMS) == pytest.approx(expected)


def test_falling_leg_midpoint():
    assert usage_weight(0.94, PARAMS) == pytest.approx(0.5)


@pytest.mark.parametrize("x", [-0.01, 1.01])
def test_ratio_outside_unit_interval(x):
    with pytest.raises(ValueError):
        usage_weight(x, PARAMS)


@given(st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_weight_rises_then_falls(x, y):
    lo, hi = sorted((x, y))
    if hi <= PARAMS.lo:
        assert usage_weight(lo, PARAMS) <= usage_weight(hi, PARAMS)
    if lo >= PARAMS.hi:
        assert usage_weight(lo, PARAMS) >= usage_weight(hi, PARAMS)
    assert 0.0 <= usage_weight(x, PARAMS) <= 1.0


def test_account_score_examples():
    assert account_usage_score([0.7, 0.8], PARAMS) == 1.0
    assert account_usage_score([], PARAMS) == 0.0
    assert account_usage_score([0.0, 0.68], PARAMS) == 0.5


def test_custom_band():
    params = UsageParams(lo=0.5, hi=0.6)
    assert usage_weight(0.25, params) == 0.5
    assert usage_weight(0.8, params) == pytest.approx(0.5)


def test_usage_scores_cover_registry():
    ledger = make_round([(1, "a", "b", "1")], usage=[("a", 1, 0.7), ("a", 2, 0.0), ("c", 1, 0.75)])
    assert usage_scores(ledger, PARAMS) == {"a": 0.5, "b": 0.0, "c": 1.0}
