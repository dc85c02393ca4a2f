"""
Train one model and forecast 30 days
====================================

Loads the bundled synthetic OHLCV file, holds out the last 30 bars, trains
a GRU on scaled closes and scores a 30-day recursive forecast.
"""

from pathlib import Path

from rnnforecast import bench, market, trainer, zoo

series = market.load_fixture()
data = market.split_anchored(series, window=30)
print(f"{len(data.train)} training bars, {len(data.test)} test bars "
      f"({data.test.dates[0]} .. {data.test.dates[-1]})")

# Closes are min-max scaled with statistics from the training bars only.
closes = data.scaler.scale(data.train.closes)
pairs = market.make_windows(closes, window=30)
print(f"{len(pairs)} supervised windows; scaler min={data.scaler.min}, max={data.scaler.max}")

spec = zoo.spec_for("GRU", hidden=32, seed=0)
model = zoo.build(spec)
record = trainer.train(model, pairs, trainer.TrainConfig(epochs=5, batch=16))
print("epoch losses:", [f"{l:.5f}" for l in record.epoch_losses])

result = bench.evaluate(model, data)
print(f"30-day accuracy: {result.accuracy:.2f}%")
for d, a, p in list(zip(result.dates, result.actuals, result.predictions))[:5]:
    print(f"  {d}  actual {a:8.2f}  predicted {p:8.2f}")

out = Path("demo_output")
out.mkdir(exist_ok=True)
trainer.save_checkpoint(model, out / "gru.json")
written = bench.emit_plot_data(result, out / "gru_forecast.csv")
print("wrote", out / "gru.json", *written)
