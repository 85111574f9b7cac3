import logging

import pytest
from hypothesis import given
from hypothesis import strategies as st

from derreg.market import MarketInputs, annual_revenue, daily_credits, estimate_revenue


def test_direct_credits_pass_through():
    m = MarketInputs(184.3, 0.85, capability_credit=135, performance_credit=11)
    assert daily_credits(m) == (135.0, 11.0)


def test_annual_examples():
    assert annual_revenue(135, 11) == 53290
    assert annual_revenue(0, 0) == 0
    assert annual_revenue(1, 0) == 365
    with pytest.raises(ValueError):
        annual_revenue(-1, 0)


def test_zero_score_price_mode():
    m = MarketInputs(184.3, 0.0, capability_price=40.0, performance_price=5.0)
    assert daily_credits(m) == (0.0, 0.0)


def test_price_mode_linear_in_capacity():
    a = daily_credits(MarketInputs(100.0, 0.9, capability_price=40.0, performance_price=5.0))
    b = daily_credits(MarketInputs(200.0, 0.9, capability_price=40.0, performance_price=5.0))
    assert b == pytest.approx((2 * a[0], 2 * a[1]))
    assert a == pytest.approx((0.1 * 0.9 * 40, 0.1 * 0.9 * 5))


@given(st.floats(0, 1e4), st.floats(0, 1e4), st.floats(0.1, 10))
def test_annual_linear(c, p, k):
    assert annual_revenue(k * c, p) == pytest.approx(annual_revenue(c, p) + (k - 1) * c * 365, rel=1e-9, abs=1e-6)


def test_gating_below_eligibility(caplog):
    with caplog.at_level(logging.WARNING, logger="derreg.market"):
        out = estimate_revenue(MarketInputs(184.3, 0.6, capability_credit=135, performance_credit=11))
    assert out == {"eligible": False, "capability": 0.0, "performance": 0.0, "annual": 0.0}
    assert "not eligible" in caplog.text
    ok = estimate_revenue(MarketInputs(184.3, 0.85, capability_credit=135, performance_credit=11))
    assert ok["annual"] == 53290


@pytest.mark.parametrize("kw", [
    dict(capacity_kw=0, score=0.9, capability_credit=1, performance_credit=1),
    dict(capacity_kw=10, score=1.2, capability_credit=1, performance_credit=1),
    dict(capacity_kw=10, score=0.9, capability_credit=-1, performance_credit=1),
    dict(capacity_kw=10, score=0.9, capability_price=1),
])
def test_input_validation(kw):
    with pytest.raises(ValueError):
        MarketInputs(**kw)
