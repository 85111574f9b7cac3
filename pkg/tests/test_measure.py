import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from derreg.measure import FilterSpec, clean, moving_average, remove_outliers
from derreg.signal import SignalTrace


def test_moving_average_constant():
    assert np.array_equal(moving_average(np.full(50, 3.7), 4), np.full(50, 3.7))


def test_moving_average_window_one():
    x = np.random.default_rng(0).normal(size=30)
    assert np.array_equal(moving_average(x, 1), x)


def test_moving_average_hand_example():
    assert moving_average([0.0, 0.0, 4.0, 0.0], 2).tolist() == [0.0, 0.0, 2.0, 2.0]


def test_moving_average_errors():
    with pytest.raises(ValueError):
        moving_average([1.0, 2.0], 3)
    with pytest.raises(ValueError):
        moving_average([], 1)
    with pytest.raises(ValueError):
        moving_average([1.0], 0)


@given(st.floats(-1e6, 1e6), st.integers(1, 200), st.integers(1, 10))
def test_moving_average_preserves_any_constant(c, n, w):
    w = min(w, n)
    assert np.array_equal(moving_average(np.full(n, c), w), np.full(n, c))


def test_outliers_smooth_unchanged():
    x = 10 + np.sin(np.arange(100) / 10)
    assert np.array_equal(remove_outliers(x), x)


def test_outliers_constant_unchanged():
    assert np.array_equal(remove_outliers(np.full(20, 5.0)), np.full(20, 5.0))


def test_single_spike_replaced():
    x = np.full(100, 10.0)
    x[40] = 40.0
    out = remove_outliers(x)
    assert out[40] == 10.0
    assert np.all(out == 10.0)


def test_outliers_keep_trace_type():
    t = SignalTrace(np.full(10, 2.0), 0.5)
    assert isinstance(remove_outliers(t), SignalTrace)
    assert clean(t).period == 0.5


@given(st.integers(0, 2**31))
def test_outlier_removal_idempotent(seed):
    rng = np.random.default_rng(seed)
    x = 10 + np.cumsum(rng.normal(0, 0.3, 300))
    x[rng.choice(300, 5, replace=False)] += rng.uniform(10, 30, 5)
    once = remove_outliers(x)
    assert np.array_equal(remove_outliers(once), once)


def test_clean_uses_spec():
    x = np.full(60, 10.0)
    x[30] = 50.0
    out = clean(x, FilterSpec(window=4))
    assert np.all(out == 10.0)
    with pytest.raises(ValueError):
        FilterSpec(window=0)
    with pytest.raises(ValueError):
        FilterSpec(outlier_fraction=0)
