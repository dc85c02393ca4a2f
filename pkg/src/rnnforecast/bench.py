"""30-day evaluation, the accuracy score, the comparison bench and plot data."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .autodiff import ContractError
from .market import TEST_DAYS, SizeError, SplitDataset, make_windows
from .trainer import TrainConfig, train
from .zoo import FEATURE_SETS, MODEL_NAMES, ForecastModel, ModelSpec, build, predict_recursive, spec_for

# Published accuracies, shown next to computed ones; never used in computation.
PAPER_ACCURACY = {
    "LSTM": 89.2522,
    "LSTM-2Path": 94.1620,
    "LSTM-Seq2Seq": 88.3902,
    "LSTM-Bidirectional": 94.1620,
    "LSTM-Bidirectional-Seq2Seq": 95.0921,
    "GRU": 84.1694,
    "GRU-2Path": 83.7746,
    "GRU-Seq2Seq": 90.8855,
    "GRU-Bidirectional": 87.0331,
    "GRU-Bidirectional-Seq2Seq": 87.3672,
    "Attention": 95.1467,
}


class MetricDomainError(ValueError):
    pass


def accuracy(actuals, predictions) -> float:
    """``max(0, 100 * (1 - RMSPE))`` on unscaled prices."""
    a = np.asarray(actuals, dtype=np.float64).reshape(-1)
    p = np.asarray(predictions, dtype=np.float64).reshape(-1)
    if a.size != p.size:
        raise ContractError(f"{a.size} actuals vs {p.size} predictions")
    if a.size == 0:
        raise ContractError("accuracy of an empty forecast is undefined")
    if np.any(~(a > 0)):
        raise MetricDomainError("actual prices must be positive")
    rel = (a - p) / a
    rmspe = math.sqrt(float(np.mean(rel * rel)))
    return max(0.0, 100.0 * (1.0 - rmspe))


@dataclass
class ForecastResult:
    model: str
    dates: list
    predictions: np.ndarray
    actuals: np.ndarray
    accuracy: float


def evaluate(model: ForecastModel, dataset: SplitDataset, horizon: int = TEST_DAYS) -> ForecastResult:
    """Forecast the test period from the last training window and score it.

    Test bars are only read as comparison targets.
    """
    spec = model.spec
    if len(dataset.train) < spec.window:
        raise SizeError(f"window {spec.window} longer than the {len(dataset.train)}-bar train set")
    feats = dataset.features(dataset.train, FEATURE_SETS[spec.features])
    scaled = predict_recursive(model, feats[-spec.window:], horizon)
    preds = dataset.scaler.inverse(scaled)
    test = dataset.test[:horizon]
    actuals = test.closes
    return ForecastResult(spec.name, [d.isoformat() for d in test.dates], preds, actuals,
                          accuracy(actuals, preds))


# --------------------------------------------------------------------- bench

@dataclass(frozen=True)
class BenchRow:
    model: str
    accuracy: float | None
    paper_reference: float | None
    error: str | None = None


@dataclass
class BenchReport:
    config: dict
    results: list[BenchRow]
    forecasts: dict = field(default_factory=dict, compare=False, repr=False)

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "results": [
                {"model": r.model, "accuracy": r.accuracy,
                 "paper_reference": r.paper_reference, "error": r.error}
                for r in self.results
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "BenchReport":
        doc = json.loads(text)
        rows = [BenchRow(r["model"], r["accuracy"], r["paper_reference"], r["error"])
                for r in doc["results"]]
        return cls(doc["config"], rows)

    def table(self) -> str:
        """Two model/accuracy column pairs, like the published comparison."""
        cells = []
        for r in self.results:
            acc = f"{r.accuracy:.4f}" if r.accuracy is not None else "ERROR"
            ref = f"({r.paper_reference:.4f})" if r.paper_reference is not None else ""
            cells.append((r.model, f"{acc} {ref}".strip()))
        if len(cells) % 2:
            cells.append(("", ""))
        w1 = max(len("Model Name 1"), *(len(c[0]) for c in cells))
        w2 = max(len("Accuracy 1 (paper)"), *(len(c[1]) for c in cells))
        lines = [f"{'Model Name 1':<{w1}}  {'Accuracy 1 (paper)':<{w2}}  "
                 f"{'Model Name 2':<{w1}}  Accuracy 2 (paper)"]
        lines.append("-" * len(lines[0]))
        for (m1, a1), (m2, a2) in zip(cells[::2], cells[1::2]):
            lines.append(f"{m1:<{w1}}  {a1:<{w2}}  {m2:<{w1}}  {a2}".rstrip())
        return "\n".join(lines)


def derive_seed(bench_seed: int, name: str) -> int:
    digest = hashlib.sha256(f"{bench_seed}:{name}".encode()).digest()
    return int.from_bytes(digest[:4], "little")


def default_specs(**overrides) -> list[ModelSpec]:
    return [spec_for(name, **overrides) for name in MODEL_NAMES]


def _job(args) -> tuple[str, float | None, str | None, ForecastResult | None]:
    spec, dataset, config = args
    try:
        model = build(spec)
        feats = dataset.features(dataset.train, FEATURE_SETS[spec.features])
        horizon = spec.horizon if spec.is_seq2seq else 1
        pairs = make_windows(feats, spec.window, horizon, target_index=spec.close_index)
        train(model, pairs, config)
        result = evaluate(model, dataset)
        return spec.name, result.accuracy, None, result
    except Exception as exc:  # isolate per-model failures
        return spec.name, None, f"{type(exc).__name__}: {exc}", None


def run_bench(dataset: SplitDataset, specs: Sequence[ModelSpec] | None = None,
              config: TrainConfig = TrainConfig(), seed: int = 42, jobs: int = 1,
              meta: dict | None = None) -> BenchReport:
    """Train and evaluate each spec; model seeds derive from ``seed`` and the model name."""
    specs = list(default_specs() if specs is None else specs)
    tasks = []
    for spec in specs:
        s = derive_seed(seed, spec.name)
        tasks.append((replace(spec, seed=s), dataset, replace(config, seed=s)))
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_job, tasks))
    else:
        outcomes = [_job(t) for t in tasks]
    order = {n: i for i, n in enumerate(MODEL_NAMES)}
    outcomes.sort(key=lambda o: order.get(o[0], len(order)))
    rows = [BenchRow(name, acc, PAPER_ACCURACY.get(name), err) for name, acc, err, _ in outcomes]
    forecasts = {name: res for name, _, _, res in outcomes if res is not None}
    template = specs[0]
    cfg = {
        "seed": seed,
        "model": {k: getattr(template, k) for k in ("hidden", "layers", "window", "horizon", "heads", "features")},
        "train": {k: v for k, v in config.to_dict().items() if k != "seed"},
        "test_days": TEST_DAYS,
        "train_bars": len(dataset.train),
    }
    if meta:
        cfg.update(meta)
    return BenchReport(cfg, rows, forecasts)


# ----------------------------------------------------------------- plot data

def plot_csv(result: ForecastResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["date", "actual", "predicted"])
    for d, a, p in zip(result.dates, result.actuals, result.predictions):
        w.writerow([d, repr(float(a)), repr(float(p))])
    return buf.getvalue()


def plot_svg(result: ForecastResult, width: int = 640, height: int = 320) -> str:
    a = np.asarray(result.actuals, dtype=np.float64)
    p = np.asarray(result.predictions, dtype=np.float64)
    lo, hi = float(min(a.min(), p.min())), float(max(a.max(), p.max()))
    if hi == lo:
        hi = lo + 1.0
    pad = 30
    n = max(len(a) - 1, 1)

    def points(v):
        xs = pad + np.arange(len(v)) * (width - 2 * pad) / n
        ys = height - pad - (v - lo) / (hi - lo) * (height - 2 * pad)
        return " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(xs, ys))

    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">\n'
        f'<title>{result.model}: predicted vs actual close</title>\n'
        f'<rect width="100%" height="100%" fill="white"/>\n'
        f'<polyline id="actual" fill="none" stroke="#1f77b4" stroke-width="2" points="{points(a)}"/>\n'
        f'<polyline id="predicted" fill="none" stroke="#d62728" stroke-width="2" '
        f'stroke-dasharray="6 3" points="{points(p)}"/>\n'
        f'<text x="{pad}" y="18" font-family="sans-serif" font-size="12">'
        f'{result.model} accuracy {result.accuracy:.4f}%</text>\n'
        '</svg>\n'
    )


def emit_plot_data(result: ForecastResult, path, svg: bool = True) -> list[Path]:
    """Write ``path`` (CSV) and, if asked, a sibling ``.svg`` chart."""
    path = Path(path)
    path.write_text(plot_csv(result), encoding="utf-8")
    written = [path]
    if svg:
        svg_path = path.with_suffix(".svg")
        svg_path.write_text(plot_svg(result), encoding="utf-8")
        written.append(svg_path)
    return written
