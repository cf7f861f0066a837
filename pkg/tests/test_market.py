from datetime import date, timedelta

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from emomarket.market import (
    MarketError,
    OhlcvRecord,
    align,
    compute_returns,
    read_ohlcv,
    split_train_test,
    write_ohlcv,
)
from emomarket.synth import trading_days
from emomarket.timeseries import EmotionSeries

RECS = [
    OhlcvRecord(date(2015, 3, 2), 100.0, 101.0, 99.0, 100.0, 1000.0),
    OhlcvRecord(date(2015, 3, 3), 102.0, 106.0, 101.0, 105.0, 1500.0),
    OhlcvRecord(date(2015, 3, 4), 104.0, 105.0, 94.5, 94.5, 900.0),
]


def test_returns_against_previous_close():
    y = compute_returns(RECS)
    assert y.dates == (date(2015, 3, 3), date(2015, 3, 4))
    np.testing.assert_allclose(y.close_rc, [5.0, -10.0])
    np.testing.assert_allclose(y.open_rc, [2.0, (104 - 105) / 105 * 100])
    np.testing.assert_allclose(y.high_rc, [6.0, 0.0])
    np.testing.assert_allclose(y.low_rc, [1.0, -10.0])
    np.testing.assert_allclose(y.volume, [1500.0, 900.0])


def test_literal_mode_divides_by_current_close():
    y = compute_returns(RECS, "paper_literal")
    np.testing.assert_allclose(y.close_rc, [5 / 105 * 100, -10.5 / 94.5 * 100])
    with pytest.raises(MarketError):
        compute_returns(RECS, "other")


def test_record_invariants():
    with pytest.raises(MarketError, match="low/high"):
        OhlcvRecord(date(2015, 3, 2), 100.0, 99.0, 98.0, 100.0, 1.0)
    with pytest.raises(MarketError, match="positive"):
        OhlcvRecord(date(2015, 3, 2), 0.0, 1.0, 0.0, 1.0, 1.0)
    with pytest.raises(MarketError, match="increasing"):
        compute_returns([RECS[1], RECS[0]])


def _series(days):
    return EmotionSeries(tuple(days), np.full((len(days), 5), 0.2))


def _market(days):
    recs = [OhlcvRecord(days[0] - timedelta(days=1), 10, 10, 10, 10, 1)]
    recs += [OhlcvRecord(d, 10, 11, 9, 10 + 0.5 * (i % 3), 5) for i, d in enumerate(days)]
    return compute_returns(recs)


def test_split_on_a_year_of_trading_days():
    days = trading_days(date(2014, 12, 1), date(2015, 12, 7))
    assert len(days) == 249
    x, y = align(_series(days), _market(days))
    (x_tr, y_tr), (x_te, y_te) = split_train_test(x, y, 0.8)
    # ceil(0.8 * 249) = 200
    assert len(x_tr) == 200 and len(x_te) == 49
    assert x_tr.dates[-1] == date(2015, 9, 22) and x_te.dates[0] == date(2015, 9, 23)
    assert y_tr.dates == x_tr.dates and y_te.dates == x_te.dates
    assert max(x_tr.dates) < min(x_te.dates)


def test_split_exact_fraction_not_over_ceiled():
    days = trading_days(date(2015, 3, 2), date(2015, 3, 13))
    x, y = align(_series(days), _market(days))
    (x_tr, _), (x_te, _) = split_train_test(x, y, 0.8)
    assert (len(x_tr), len(x_te)) == (8, 2)


def test_split_reports_misalignment():
    days = trading_days(date(2015, 3, 2), date(2015, 3, 13))
    shifted = trading_days(date(2015, 3, 3), date(2015, 3, 16))
    with pytest.raises(MarketError, match="row 0"):
        split_train_test(_series(days), _market(shifted))
    with pytest.raises(MarketError):
        split_train_test(_series(days), _market(days), 1.0)


def test_align_restricts_to_common_dates():
    days = trading_days(date(2015, 3, 2), date(2015, 3, 13))
    x, y = align(_series(days[2:]), _market(days[:-2]))
    assert x.dates == y.dates == tuple(days[2:-2])


def test_ohlcv_csv_roundtrip(tmp_path):
    p = tmp_path / "m.csv"
    write_ohlcv(RECS, p)
    assert read_ohlcv(p) == RECS
    p.write_text("date,close\n", encoding="utf-8")
    with pytest.raises(MarketError, match="header"):
        read_ohlcv(p)


@st.composite
def ohlcv_paths(draw):
    n = draw(st.integers(2, 30))
    rng = np.random.default_rng(draw(st.integers(0, 2**32 - 1)))
    recs, close = [], 100.0
    for i in range(n):
        o = close * (1 + rng.normal(0, 0.01))
        c = close * (1 + rng.normal(0, 0.02))
        h = max(o, c) * (1 + abs(rng.normal(0, 0.005)))
        lo = min(o, c) * (1 - abs(rng.normal(0, 0.005)))
        recs.append(OhlcvRecord(date(2015, 1, 5) + timedelta(days=i), o, h, lo, c, float(rng.uniform(1, 9))))
        close = c
    return recs


@settings(deadline=None)
@given(ohlcv_paths())
def test_returns_invariants(recs):
    for mode in ("standard", "paper_literal"):
        y = compute_returns(recs, mode)
        assert len(y) == len(recs) - 1
        assert all(a < b for a, b in zip(y.dates, y.dates[1:]))
        closes = np.array([r.close for r in recs])
        np.testing.assert_array_equal(y.close_rc > 0, closes[1:] > closes[:-1])
    y = compute_returns(recs)
    assert np.all(y.high_rc >= np.maximum(y.open_rc, y.close_rc) - 1e-12)
    assert np.all(y.low_rc <= np.minimum(y.open_rc, y.close_rc) + 1e-12)


@settings(deadline=None)
@given(st.integers(2, 60), st.floats(0.05, 0.95))
def test_split_partitions_chronologically(n, frac):
    days = [date(2015, 1, 5) + timedelta(days=i) for i in range(n)]
    x, y = _series(days), _market(days)
    (x_tr, y_tr), (x_te, y_te) = split_train_test(x, y, frac)
    assert x_tr.dates + x_te.dates == x.dates
    assert y_tr.dates + y_te.dates == y.dates
    if x_tr.dates and x_te.dates:
        assert max(x_tr.dates) < min(x_te.dates)


def test_open_equal_to_previous_close_is_zero():
    recs = [OhlcvRecord(date(2015, 3, 2), 100, 100, 100, 100, 1), OhlcvRecord(date(2015, 3, 3), 100, 103, 99, 102, 1)]
    for mode in ("standard", "paper_literal"):
        assert compute_returns(recs, mode).open_rc[0] == 0.0
    assert compute_returns(recs).close_rc[0] == pytest.approx(2.0)
    assert compute_returns(recs, "paper_literal").close_rc[0] == pytest.approx(1.9607843, abs=1e-7)
