import json

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rnnforecast import bench, market
from rnnforecast.autodiff import ContractError
from rnnforecast.bench import BenchReport, MetricDomainError, accuracy, evaluate, run_bench
from rnnforecast.trainer import TrainConfig
from rnnforecast.zoo import MODEL_NAMES, build, spec_for

SMALL = dict(hidden=4, window=5, horizon=30, heads=2)
QUICK = TrainConfig(epochs=1, batch=16)


@pytest.fixture(scope="module")
def dataset():
    return market.split_anchored(market.synthetic_ohlcv(90, seed=1), window=5)


@pytest.fixture(scope="module")
def report(dataset):
    return run_bench(dataset, bench.default_specs(**SMALL), QUICK, seed=42)


class TestAccuracy:
    def test_hand_oracle(self):
        mpmath.mp.dps = 50
        rmspe = mpmath.sqrt((mpmath.mpf("0.1") ** 2 + mpmath.mpf("0.05") ** 2) / 2)
        oracle = float(100 * (1 - rmspe))
        got = accuracy([100, 200], [110, 190])
        assert got == pytest.approx(oracle, abs=1e-12)
        assert abs(got - 92.0943) <= 1e-4
        assert got == pytest.approx(92.09430585, abs=5e-9)

    @given(st.lists(st.floats(1e-3, 1e6), min_size=1, max_size=40))
    def test_identity_is_exactly_100(self, xs):
        assert accuracy(xs, xs) == 100.0

    def test_clamped_at_zero(self):
        a = np.array([10.0, 20.0, 30.0])
        assert accuracy(a, 2 * a) == 0.0
        assert accuracy(a, 5 * a) == 0.0

    @settings(max_examples=100)
    @given(st.integers(0, 2**32 - 1), st.floats(1e-3, 1e3))
    def test_scale_invariance(self, seed, c):
        rng = np.random.default_rng(seed)
        a = rng.uniform(1, 500, 30)
        p = a * (1 + rng.normal(0, 0.05, 30))
        assert accuracy(c * a, c * p) == pytest.approx(accuracy(a, p), abs=1e-9)

    @given(st.lists(st.tuples(st.floats(0.01, 1e4), st.floats(-1e4, 1e4)), min_size=1, max_size=30))
    def test_bounded(self, pairs):
        a, p = zip(*pairs)
        assert 0.0 <= accuracy(a, p) <= 100.0

    @pytest.mark.parametrize("bad", [[0.0, 1.0], [-5.0, 1.0], [float("nan"), 1.0]])
    def test_domain(self, bad):
        with pytest.raises(MetricDomainError):
            accuracy(bad, [1.0, 1.0])

    def test_contract(self):
        with pytest.raises(ContractError):
            accuracy([1.0, 2.0], [1.0])
        with pytest.raises(ContractError):
            accuracy([], [])


class TestEvaluate:
    @pytest.mark.parametrize("name", MODEL_NAMES)
    def test_zero_network_predicts_train_min(self, dataset, name):
        m = build(spec_for(name, **SMALL))
        m.params = {k: (np.ones_like(v) if k.startswith("ln") and k.endswith(".g") else np.zeros_like(v))
                    for k, v in m.params.items()}
        r = evaluate(m, dataset)
        assert len(r.predictions) == len(r.actuals) == len(r.dates) == 30
        np.testing.assert_array_equal(r.predictions, dataset.train.closes.min())
        np.testing.assert_array_equal(r.actuals, dataset.test.closes)
        assert r.model == name

    def test_converged_constant_model_scores_100(self):
        # train rises then sits at 150; test stays at 150.  The converged
        # model for this regime outputs the constant scaled level.
        closes = np.concatenate([np.linspace(100, 200, 40), np.full(60, 150.0)])
        d = market.split_anchored(_series(closes), window=5)
        m = build(spec_for("GRU", **SMALL))
        m.params = {k: np.zeros_like(v) for k, v in m.params.items()}
        m.params["head.b"][:] = d.scaler.scale([150.0])[0]
        r = evaluate(m, d)
        assert abs(r.accuracy - 100.0) < 1e-9

    def test_no_test_leakage(self, dataset):
        m = build(spec_for("LSTM-Seq2Seq", **SMALL))
        base = evaluate(m, dataset)
        bumped = market.SplitDataset(dataset.train, _series(dataset.test.closes * 3 + 7, dataset.test.dates[0]))
        other = evaluate(m, bumped)
        np.testing.assert_array_equal(base.predictions, other.predictions)
        assert base.accuracy != other.accuracy

    def test_window_longer_than_train(self):
        d = market.split_anchored(market.synthetic_ohlcv(36), window=5)
        m = build(spec_for("LSTM", hidden=2, window=7))
        with pytest.raises(market.SizeError):
            evaluate(m, d)

    def test_multivariate(self, dataset):
        m = build(spec_for("GRU-2Path", features="ohlcv", **SMALL))
        r = evaluate(m, dataset)
        assert np.all(np.isfinite(r.predictions)) and 0 <= r.accuracy <= 100


def _series(closes, start=None):
    import datetime as dt
    start = start or dt.date(2021, 1, 1)
    return market.PriceSeries(
        market.OhlcvBar(start + dt.timedelta(days=k), c, c * 1.01, c * 0.99, c, c, 100)
        for k, c in enumerate(closes))


class TestBench:
    def test_all_models_in_table_order(self, report):
        assert [r.model for r in report.results] == list(MODEL_NAMES)
        assert all(r.error is None for r in report.results)
        assert all(0.0 <= r.accuracy <= 100.0 for r in report.results)

    def test_reference_column(self, report):
        refs = {r.model: r.paper_reference for r in report.results}
        assert refs["LSTM"] == 89.2522
        assert refs["Attention"] == 95.1467
        assert refs["LSTM-Bidirectional-Seq2Seq"] == 95.0921
        assert refs == bench.PAPER_ACCURACY

    def test_json_shape_and_round_trip(self, report):
        doc = json.loads(report.to_json())
        assert set(doc) == {"config", "results"}
        for row in doc["results"]:
            assert set(row) == {"model", "accuracy", "paper_reference", "error"}
        assert BenchReport.from_json(report.to_json()) == report
        assert doc["config"]["seed"] == 42
        assert doc["config"]["train"]["epochs"] == 1

    def test_deterministic(self, dataset, report):
        again = run_bench(dataset, bench.default_specs(**SMALL), QUICK, seed=42)
        assert again.to_json() == report.to_json()

    def test_seed_matters(self, dataset, report):
        specs = [spec_for("LSTM", **SMALL)]
        a = run_bench(dataset, specs, QUICK, seed=42).results[0].accuracy
        b = run_bench(dataset, specs, QUICK, seed=43).results[0].accuracy
        assert a == report.results[0].accuracy
        assert a != b

    def test_derived_seeds_independent_of_roster(self, dataset, report):
        only = run_bench(dataset, [spec_for("GRU-Seq2Seq", **SMALL)], QUICK, seed=42)
        full = {r.model: r.accuracy for r in report.results}
        assert only.results[0].accuracy == full["GRU-Seq2Seq"]

    def test_derive_seed(self):
        assert bench.derive_seed(42, "LSTM") == bench.derive_seed(42, "LSTM")
        assert len({bench.derive_seed(42, n) for n in MODEL_NAMES}) == 11
        assert 0 <= bench.derive_seed(0, "GRU") < 2**32

    def test_parallel_matches_serial(self, dataset):
        specs = [spec_for(n, **SMALL) for n in ("LSTM", "GRU-Bidirectional", "Attention")]
        serial = run_bench(dataset, specs, QUICK, seed=5)
        parallel = run_bench(dataset, specs, QUICK, seed=5, jobs=2)
        assert serial.to_json() == parallel.to_json()

    def test_failure_isolated(self, dataset):
        specs = [spec_for("LSTM", **SMALL), spec_for("GRU", **{**SMALL, "window": 200})]
        rep = run_bench(dataset, specs, QUICK)
        ok, bad = rep.results
        assert ok.error is None and ok.accuracy is not None
        assert bad.accuracy is None and "SizeError" in bad.error
        assert "ERROR" in rep.table()

    def test_table_layout(self, report):
        lines = report.table().splitlines()
        assert lines[0].split()[:3] == ["Model", "Name", "1"]
        assert len(lines) == 2 + 6
        assert lines[2].split()[0] == "LSTM" and "(89.2522)" in lines[2]
        assert lines[-1].split()[0] == "Attention"


class TestPlotData:
    def test_csv(self, tmp_path, report, dataset):
        r = report.forecasts["Attention"]
        bench.emit_plot_data(r, tmp_path / "a.csv", svg=False)
        rows = (tmp_path / "a.csv").read_text().splitlines()
        assert rows[0] == "date,actual,predicted" and len(rows) == 31
        actual = [float(x.split(",")[1]) for x in rows[1:]]
        assert actual == list(dataset.test.closes)
        assert not (tmp_path / "a.svg").exists()

    def test_svg(self, tmp_path, report):
        r = report.forecasts["LSTM"]
        written = bench.emit_plot_data(r, tmp_path / "l.csv")
        svg = (tmp_path / "l.svg").read_text()
        assert written == [tmp_path / "l.csv", tmp_path / "l.svg"]
        assert svg.count("<polyline") == 2
        assert svg.startswith("<svg") and svg.rstrip().endswith("</svg>")
        for pl in svg.split("<polyline")[1:]:
            pts = pl.split('points="')[1].split('"')[0].split()
            assert len(pts) == 30

    def test_deterministic_bytes(self, tmp_path, report):
        r = report.forecasts["GRU"]
        bench.emit_plot_data(r, tmp_path / "a.csv")
        bench.emit_plot_data(r, tmp_path / "b.csv")
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
        assert (tmp_path / "a.svg").read_bytes() == (tmp_path / "b.svg").read_bytes()

    def test_flat_series(self):
        r = bench.ForecastResult("X", ["d"] * 3, np.ones(3), np.ones(3), 100.0)
        assert "nan" not in bench.plot_svg(r)

    def test_unwritable(self, tmp_path, report):
        with pytest.raises(OSError):
            bench.emit_plot_data(report.forecasts["LSTM"], tmp_path / "missing" / "x.csv")
