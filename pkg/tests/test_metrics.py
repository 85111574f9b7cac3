import numpy as np
import pytest

from derreg.metrics import (
    ELIGIBILITY, PjmScore, ScoreReport, delay_score, normalized_mse, performance_score, pjm_score,
    precision_score, rmse, shift_correlation, shift_rmse, tracking_delay,
)


def signal(n=1200, seed=0):
    rng = np.random.default_rng(seed)
    t = np.arange(n)
    return 5 + np.sin(t / 40) + 0.5 * np.sin(t / 13 + rng.uniform(0, 6))


def test_rmse_examples():
    x = signal()
    assert rmse(x, x) == 0.0
    assert rmse(np.zeros_like(x), x) == 1.0
    with pytest.raises(ValueError):
        rmse(x, np.zeros_like(x))
    with pytest.raises(ValueError):
        rmse(x[:-1], x)


def test_delay_recovered():
    x = signal()
    shifted = np.r_[np.full(3, x[0]), x[:-3]]
    assert tracking_delay(shifted, x, 50) == 3
    assert tracking_delay(x, x, 50) == 0


def test_delay_105():
    x = signal(2400)
    late = np.r_[np.full(105, x[0]), x[:-105]]
    assert tracking_delay(late, x, 300) == 105
    assert int(np.argmax(shift_correlation(late, x, 300))) == 105


def test_shift_rmse_zero_at_true_shift():
    x = signal()
    late = np.r_[np.zeros(7), x[:-7]]
    assert shift_rmse(late, x, 20)[7] == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(ValueError):
        shift_rmse(x, x, len(x))


def test_perfect_tracking_score():
    x = signal()
    s = pjm_score(x, x)
    assert (s.s_c, s.s_d, s.s_p) == pytest.approx((1.0, 1.0, 1.0))
    assert s.delay == 0
    assert s.s == pytest.approx(1.0) and s.eligible


def test_delay_score_examples():
    assert delay_score(105) == pytest.approx(0.65, abs=1e-15)
    assert delay_score(0) == 1.0
    assert delay_score(900) == 2.0 and delay_score(900, clip=True) == 1.0


def test_composite_score():
    s = PjmScore(0.98, 0.65, 0.91, 105, 105)
    assert s.s == pytest.approx(0.8467, abs=5e-5)
    assert s.eligible
    assert performance_score(0.7, 0.7, 0.7) < ELIGIBILITY


def test_precision_score():
    x = np.full(10, 4.0)
    assert precision_score(x, x) == 1.0
    assert precision_score(x + 1, x) == pytest.approx(0.75)
    with pytest.raises(ValueError):
        precision_score(x, np.zeros(10))


def test_degenerate_trace_rejected():
    with pytest.raises(ValueError):
        pjm_score(np.ones(50), signal(50))


def test_normalized_mse():
    a = np.random.default_rng(0).normal(size=(30, 4))
    assert normalized_mse(a, a) == 0.0
    assert normalized_mse(np.zeros_like(a), a) == pytest.approx(1.0)
    assert normalized_mse(a + 0.1, a, columns=[1]) == pytest.approx(0.01 / np.mean(a[:, 1] ** 2))
    with pytest.raises(ValueError):
        normalized_mse(a, a[:, :3])


def test_report_round_trip(tmp_path):
    rep = ScoreReport(0.1, 4, PjmScore(0.9, 0.98, 0.8, 4, 4), rmse_raw_target=0.2)
    assert "performance score S 0.8933" in rep.text()
    rep.write_csv(tmp_path / "s.csv")
    rows = dict(line.split(",") for line in (tmp_path / "s.csv").read_text().splitlines()[1:])
    assert float(rows["s"]) == pytest.approx(rep.pjm.s)
    assert rows["eligible"] == "1"
