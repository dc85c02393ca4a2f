import datetime as dt

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rnnforecast import market
from rnnforecast.market import (OhlcvBar, PriceSeries, ScalerError, SchemaError, SizeError,
                                ValidationError, ParseError, fit_scale, inverse_scale, make_windows,
                                parse_csv, split_anchored)

HEADER = "Date,Open,High,Low,Close,Adj Close,Volume\n"
TABLE_ROWS = (
    '2024-01-02,720.00,725.00,710.00,715.00,715.00,"15,200,000"\n'
    "2024-01-03,715.50,730.00,705.50,725.00,725.00,17500000\n"
)


def series(n, start=dt.date(2020, 1, 1), closes=None):
    closes = np.linspace(100, 200, n) if closes is None else closes
    return PriceSeries(
        OhlcvBar(start + dt.timedelta(days=k), c, c * 1.01, c * 0.99, c, c, 1000 + k) for k, c in enumerate(closes)
    )


class TestParse:
    def test_table_rows_exact(self):
        s = parse_csv((HEADER + TABLE_ROWS).encode())
        a, b = s[0], s[1]
        assert a == OhlcvBar(dt.date(2024, 1, 2), 720.0, 725.0, 710.0, 715.0, 715.0, 15_200_000)
        assert b == OhlcvBar(dt.date(2024, 1, 3), 715.5, 730.0, 705.5, 725.0, 725.0, 17_500_000)

    def test_header_case_and_order(self):
        text = "volume,ADJ CLOSE,close,low,high,open,date\n15200000,715.00,715.00,710.00,725.00,720.00,2024-01-02\n"
        assert parse_csv(text.encode())[0].close == 715.0

    def test_rows_sorted(self):
        rows = TABLE_ROWS.splitlines(keepends=True)
        assert parse_csv((HEADER + rows[1] + rows[0]).encode()).dates == [dt.date(2024, 1, 2), dt.date(2024, 1, 3)]

    def test_header_only(self):
        with pytest.raises(SizeError):
            parse_csv(HEADER.encode())

    def test_empty_file(self):
        with pytest.raises(SchemaError):
            parse_csv(b"")

    def test_missing_column_named(self):
        text = "Date,Open,High,Low,Close,Adj Close\n2024-01-02,720,725,710,715,715\n"
        with pytest.raises(SchemaError, match="Volume"):
            parse_csv(text.encode())

    def test_unparseable_row_line_number(self):
        text = HEADER + TABLE_ROWS + "2024-01-04,abc,1,1,1,1,1\n"
        with pytest.raises(ParseError, match="line 4"):
            parse_csv(text.encode())

    def test_low_above_high_cites_date(self):
        text = HEADER + "2024-01-05,720,725,730,722,722,100\n"
        with pytest.raises(ValidationError, match="2024-01-05"):
            parse_csv(text.encode())

    def test_duplicate_date(self):
        rows = TABLE_ROWS.splitlines(keepends=True)
        with pytest.raises(ValidationError, match="duplicate"):
            parse_csv((HEADER + rows[0] + rows[0]).encode())

    def test_non_positive_close(self):
        with pytest.raises(ValidationError):
            parse_csv((HEADER + "2024-01-05,1,2,0,0,0,100\n").encode())

    def test_scan_collects_all_issues(self):
        text = HEADER + TABLE_ROWS + "2024-01-04,x,1,1,1,1,1\n2024-01-05,720,725,730,722,722,100\n"
        bars, issues = market.scan_csv(text.encode())
        assert len(bars) == 2
        assert sorted({i.line for i in issues}) == [4, 5]

    def test_file_and_stream_sources(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text(HEADER + TABLE_ROWS)
        assert parse_csv(p) == parse_csv(open(p, "rb")) == parse_csv(str(p))

    def test_round_trip(self, tmp_path):
        s = market.synthetic_ohlcv(60, seed=3)
        assert parse_csv(market.to_csv(s).encode()) == s
        market.write_csv(s, tmp_path / "x.csv")
        assert parse_csv(tmp_path / "x.csv") == s

    @given(st.lists(st.floats(0.01, 1e6, allow_nan=False), min_size=1, max_size=20))
    def test_round_trip_property(self, closes):
        s = series(len(closes), closes=closes)
        assert parse_csv(market.to_csv(s).encode()) == s


class TestSeries:
    def test_must_be_increasing(self):
        b = OhlcvBar(dt.date(2024, 1, 2), 1, 1, 1, 1, 1, 1)
        with pytest.raises(ValidationError):
            PriceSeries([b, b])

    def test_non_empty(self):
        with pytest.raises(SizeError):
            PriceSeries([])

    def test_slicing_and_concat(self):
        s = series(10)
        assert s[:4] + s[4:] == s
        assert isinstance(s[2:5], PriceSeries)


class TestSplit:
    def test_hundred_bars(self):
        s = series(100)
        d = split_anchored(s)
        assert (len(d.train), len(d.test)) == (70, 30)
        assert d.train + d.test == s
        assert d.test.dates == s.dates[-30:]

    def test_minimum_boundary(self):
        d = split_anchored(series(31), window=1)
        assert (len(d.train), len(d.test)) == (1, 30)

    def test_window_raises_minimum(self):
        split_anchored(series(40), window=10)
        with pytest.raises(SizeError, match="41"):
            split_anchored(series(40), window=11)

    def test_thirty_bars(self):
        with pytest.raises(SizeError, match="31"):
            split_anchored(series(30))

    def test_scaler_ignores_test_bars(self):
        closes = np.linspace(100, 200, 100)
        base = split_anchored(series(100, closes=closes))
        spiked = closes.copy()
        spiked[-30:] = np.linspace(1, 10_000, 30)
        d = split_anchored(series(100, closes=spiked))
        assert d.scaler == base.scaler
        assert (d.scaler.min, d.scaler.max) == (closes[:70].min(), closes[:70].max())

    def test_features_use_train_scalers(self):
        d = split_anchored(market.synthetic_ohlcv(80))
        f = d.features(d.test, ("open", "close"))
        np.testing.assert_array_equal(f[:, 1], d.scaler.scale(d.test.closes))
        np.testing.assert_array_equal(f[:, 0], d.scaler_for("open").scale(d.test.column("open")))


class TestScaler:
    def test_forced_values(self):
        s, v = fit_scale([10, 20, 30])
        np.testing.assert_array_equal(v, [0, 0.5, 1])
        assert s.scale([40])[0] == 1.5
        assert s.scale([0])[0] == -0.5

    def test_constant_rejected(self):
        with pytest.raises(ScalerError):
            fit_scale([5, 5, 5])
        with pytest.raises(ScalerError):
            market.Scaler(3.0, 3.0)

    @given(st.lists(st.floats(-1e6, 1e6), min_size=2, max_size=50).filter(lambda v: max(v) > min(v)))
    def test_inverse_identity(self, xs):
        s, v = fit_scale(xs)
        np.testing.assert_allclose(inverse_scale(s, v), xs, rtol=0, atol=1e-12 * max(1.0, max(map(abs, xs))))
        assert v.min() == 0.0 and v.max() == 1.0


class TestWindows:
    def test_forced_pairs(self):
        w = make_windows([1, 2, 3, 4], 2)
        assert len(w) == 2
        np.testing.assert_array_equal(w.inputs[:, :, 0], [[1, 2], [2, 3]])
        np.testing.assert_array_equal(w.targets[:, 0], [3, 4])

    def test_boundary(self):
        assert len(make_windows(np.arange(5.0), 4)) == 1
        with pytest.raises(SizeError):
            make_windows(np.arange(4.0), 4)

    def test_counts(self):
        assert len(make_windows(np.arange(70.0), 30)) == 40
        assert len(make_windows(np.arange(70.0), 30, horizon=30)) == 11

    @given(st.integers(15, 60), st.integers(1, 9), st.integers(1, 5))
    def test_alignment(self, n, window, horizon):
        v = np.random.default_rng(n).normal(size=n)
        w = make_windows(v, window, horizon)
        assert len(w) == n - window - horizon + 1
        for i, (x, y) in enumerate(w):
            np.testing.assert_array_equal(x[:, 0], v[i:i + window])
            np.testing.assert_array_equal(y, v[i + window:i + window + horizon])

    def test_multivariate_target_column(self):
        v = np.arange(20.0).reshape(10, 2)
        w = make_windows(v, 3, target_index=0)
        assert w.inputs.shape == (7, 3, 2)
        np.testing.assert_array_equal(w.targets[:, 0], v[3:, 0])


class TestFixture:
    def test_bundled_matches_generator(self):
        assert market.load_fixture() == market.synthetic_ohlcv()

    def test_fixture_is_valid(self):
        s = market.load_fixture()
        assert len(s) == 500
        assert all(not b.violations() for b in s)
        assert all(d.weekday() < 5 for d in s.dates)
