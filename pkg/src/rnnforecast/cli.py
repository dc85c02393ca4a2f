"""Command-line entry point: ``rnnforecast {ingest,train,bench,gradcheck}``.

Settings resolve as flags > ``--config`` file > defaults.  The config file
is flat ``key = value`` lines using the flag names without dashes.

Exit codes: 0 success, 2 input/validation error, 3 training divergence,
4 internal error (including a failed gradient check).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from . import market
from .bench import default_specs, emit_plot_data, run_bench
from .market import DataError, make_windows, parse_csv, scan_csv, split_anchored
from .trainer import DivergenceError, TrainConfig, save_checkpoint, train
from .verify import gradcheck_all
from .zoo import FEATURE_SETS, MODEL_NAMES, ConfigError, ModelSpec, build, spec_for

EXIT_OK, EXIT_INPUT, EXIT_DIVERGED, EXIT_INTERNAL = 0, 2, 3, 4


@dataclass
class RunConfig:
    data: str = ""
    model: str = "LSTM"
    variant: str = "Plain"
    hidden: int = 128
    layers: int = 1
    window: int = 30
    horizon: int = 30
    heads: int = 4
    features: str = "close"
    epochs: int = 10
    lr: float = 0.01
    optimizer: str = "adam"
    batch: int = 1
    seed: int = 42
    clip: float = 5.0
    out: str = "runs"
    jobs: int = 0
    epsilon: float = 1e-5

    def data_path(self) -> Path:
        return Path(self.data) if self.data else market.fixture_path()

    def model_spec(self) -> ModelSpec:
        kw = dict(hidden=self.hidden, layers=self.layers, window=self.window, horizon=self.horizon,
                  heads=self.heads, features=self.features, seed=self.seed)
        if self.model in MODEL_NAMES and self.model not in ("LSTM", "GRU"):
            return spec_for(self.model, **kw)
        variant = "NotApplicable" if self.model == "Attention" else self.variant
        return ModelSpec(family=self.model, variant=variant, **kw)

    def train_config(self) -> TrainConfig:
        return TrainConfig(epochs=self.epochs, learning_rate=self.lr, optimizer=self.optimizer,
                           batch=self.batch, seed=self.seed, gradient_clip_norm=self.clip)


_TYPES = {f.name: f.type for f in fields(RunConfig)}
_CASTS = {"int": int, "float": float, "str": str}


def read_config_file(path) -> dict:
    out = {}
    for n, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if not sep or key not in _TYPES:
            raise ValueError(f"{path}:{n}: expected 'key = value' with a known key, got {raw!r}")
        out[key] = _CASTS[_TYPES[key]](value.strip())
    return out


def resolve(args: argparse.Namespace) -> RunConfig:
    merged = {}
    if getattr(args, "config", None):
        merged.update(read_config_file(args.config))
    for name in _TYPES:
        v = getattr(args, name, None)
        if v is not None:
            merged[name] = v
    return replace(RunConfig(), **merged)


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value config file")
    common.add_argument("--data", help="OHLCV CSV (default: bundled synthetic fixture)")
    common.add_argument("--model", help="LSTM, GRU, Attention, or a full name like GRU-2Path")
    common.add_argument("--variant", choices=["Plain", "TwoPath", "Seq2Seq", "Bidirectional",
                                              "BidirectionalSeq2Seq"])
    common.add_argument("--hidden", type=int)
    common.add_argument("--window", type=int)
    common.add_argument("--horizon", type=int)
    common.add_argument("--heads", type=int)
    common.add_argument("--features", choices=sorted(FEATURE_SETS))
    common.add_argument("--epochs", type=int)
    common.add_argument("--lr", type=float)
    common.add_argument("--optimizer", choices=["adam", "sgd"])
    common.add_argument("--batch", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--clip", type=float, help="global gradient-norm cap (inf disables)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--jobs", type=int, help="parallel model jobs for bench (0 = all cores)")
    common.add_argument("--epsilon", type=float, help="finite-difference step for gradcheck")

    p = argparse.ArgumentParser(prog="rnnforecast", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("ingest", parents=[common], help="validate an OHLCV CSV")
    sub.add_parser("train", parents=[common], help="train one model, write checkpoint")
    sub.add_parser("bench", parents=[common], help="train and score all 11 models")
    sub.add_parser("gradcheck", parents=[common], help="finite-difference check of every model")
    return p


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def cmd_ingest(cfg: RunConfig) -> int:
    path = cfg.data_path()
    try:
        bars, issues = scan_csv(path)
    except DataError as exc:
        print(f"error: {path}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    for issue in issues:
        print(f"violation: {issue}", file=sys.stderr)
    if bars:
        print(f"{len(bars)} bars, {bars[0].date}..{bars[-1].date}, {len(issues)} violations")
    else:
        print(f"0 bars, {len(issues)} violations")
    return EXIT_OK if bars and not issues else EXIT_INPUT


def _load(cfg: RunConfig):
    series = parse_csv(cfg.data_path())
    return split_anchored(series, cfg.window)


def cmd_train(cfg: RunConfig) -> int:
    spec = cfg.model_spec()
    tc = cfg.train_config()
    dataset = _load(cfg)
    model = build(spec)
    feats = dataset.features(dataset.train, FEATURE_SETS[spec.features])
    pairs = make_windows(feats, spec.window, spec.horizon if spec.is_seq2seq else 1,
                         target_index=spec.close_index)
    try:
        record = train(model, pairs, tc)
    except DivergenceError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(model, out / "checkpoint.json")
    doc = {"model": spec.name, "spec": spec.to_dict(), "train": tc.to_dict(), **record.to_dict()}
    (out / "train_record.json").write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    print(f"{spec.name}: {len(pairs)} pairs, {tc.epochs} epochs, "
          f"final loss {record.epoch_losses[-1]:.6g}, {record.wall_time:.1f}s -> {out}")
    return EXIT_OK


def cmd_bench(cfg: RunConfig) -> int:
    dataset = _load(cfg)
    specs = default_specs(hidden=cfg.hidden, layers=cfg.layers, window=cfg.window,
                          horizon=cfg.horizon, heads=cfg.heads, features=cfg.features)
    jobs = cfg.jobs or os.cpu_count() or 1
    meta = {"data_sha256": _sha256(cfg.data_path())}
    report = run_bench(dataset, specs, cfg.train_config(), seed=cfg.seed, jobs=jobs, meta=meta)
    out = Path(cfg.out)
    (out / "plots").mkdir(parents=True, exist_ok=True)
    (out / "bench_report.json").write_text(report.to_json(), encoding="utf-8")
    for name, result in report.forecasts.items():
        emit_plot_data(result, out / "plots" / f"{name}.csv")
    print(report.table())
    for row in report.results:
        if row.error:
            print(f"{row.model}: {row.error}", file=sys.stderr)
    return EXIT_OK if any(r.error is None for r in report.results) else EXIT_INTERNAL


def cmd_gradcheck(cfg: RunConfig) -> int:
    t0 = time.perf_counter()
    print(f"gradient check: epsilon={cfg.epsilon:g}, tolerance=1e-4, hidden=4, window=3, horizon=2")
    results = gradcheck_all(cfg.epsilon)
    for name, r in results.items():
        print(f"{'PASS' if r.passed else 'FAIL'} {name:<28} max_rel_err={r.worst:.3e}")
    ok = all(r.passed for r in results.values())
    print(f"{sum(r.passed for r in results.values())}/{len(results)} passed "
          f"in {time.perf_counter() - t0:.1f}s")
    return EXIT_OK if ok else EXIT_INTERNAL


COMMANDS = {"ingest": cmd_ingest, "train": cmd_train, "bench": cmd_bench, "gradcheck": cmd_gradcheck}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = resolve(args)
        return COMMANDS[args.command](cfg)
    except (DataError, ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # pragma: no cover
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


def defaults() -> dict:
    return asdict(RunConfig())


if __name__ == "__main__":
    sys.exit(main())
