"""
Comparing all eleven forecasters
================================

A scaled-down version of the full comparison: every architecture is
trained briefly with its own derived seed, then scored on the held-out
30 days.  Published accuracies are shown in parentheses for reference.
"""

from rnnforecast import bench, market, trainer

data = market.split_anchored(market.load_fixture(), window=30)
specs = bench.default_specs(hidden=16, heads=4, window=30, horizon=30)
report = bench.run_bench(data, specs, trainer.TrainConfig(epochs=2, batch=8), seed=42)
print(report.table())

best = max((r for r in report.results if r.accuracy is not None), key=lambda r: r.accuracy)
print(f"\nbest in this run: {best.model} ({best.accuracy:.2f}%)")
