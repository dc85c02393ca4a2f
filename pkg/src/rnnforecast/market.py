"""OHLCV ingestion, validation, scaling, windowing and the anchored split."""

from __future__ import annotations

import csv
import datetime as dt
import io
from dataclasses import dataclass
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

COLUMNS = ("Date", "Open", "High", "Low", "Close", "Adj Close", "Volume")
TEST_DAYS = 30


class DataError(ValueError):
    pass


class SchemaError(DataError):
    pass


class ParseError(DataError):
    pass


class ValidationError(DataError):
    pass


class SizeError(DataError):
    pass


class ScalerError(DataError):
    pass


@dataclass(frozen=True)
class OhlcvBar:
    date: dt.date
    open: float
    high: float
    low: float
    close: float
    adj_close: float
    volume: int

    def violations(self) -> list[str]:
        out = []
        for name in ("open", "high", "low", "close", "adj_close"):
            if not getattr(self, name) > 0:
                out.append(f"{name} must be positive")
        if self.volume < 0:
            out.append("volume must be non-negative")
        if self.low > self.high:
            out.append(f"low {self.low} > high {self.high}")
        if self.low > min(self.open, self.close):
            out.append(f"low {self.low} above min(open, close)")
        if self.high < max(self.open, self.close):
            out.append(f"high {self.high} below max(open, close)")
        return out


class PriceSeries(Sequence):
    """Immutable, date-ordered sequence of bars."""

    def __init__(self, bars: Iterable[OhlcvBar]):
        bars = tuple(bars)
        if not bars:
            raise SizeError("price series is empty")
        for a, b in zip(bars, bars[1:]):
            if not a.date < b.date:
                raise ValidationError(f"dates not strictly increasing at {b.date}")
        self._bars = bars

    def __len__(self):
        return len(self._bars)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return PriceSeries(self._bars[i])
        return self._bars[i]

    def __eq__(self, other):
        return isinstance(other, PriceSeries) and self._bars == other._bars

    def __repr__(self):
        return f"PriceSeries({len(self)} bars, {self.dates[0]}..{self.dates[-1]})"

    @property
    def bars(self) -> tuple:
        return self._bars

    @property
    def dates(self) -> list[dt.date]:
        return [b.date for b in self._bars]

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(b, name) for b in self._bars], dtype=np.float64)

    @property
    def closes(self) -> np.ndarray:
        return self.column("close")

    def __add__(self, other: "PriceSeries") -> "PriceSeries":
        return PriceSeries(self._bars + other._bars)


# ---------------------------------------------------------------------- csv

@dataclass
class Issue:
    line: int
    date: str | None
    message: str

    def __str__(self):
        where = f"line {self.line}" + (f" ({self.date})" if self.date else "")
        return f"{where}: {self.message}"


def _header_map(header: list[str]) -> dict[str, int]:
    norm = {h.strip().lower(): i for i, h in enumerate(header)}
    missing = [c for c in COLUMNS if c.lower() not in norm]
    if missing:
        raise SchemaError(f"missing column(s): {', '.join(missing)}")
    return {c: norm[c.lower()] for c in COLUMNS}


def _parse_row(row: list[str], cols: dict[str, int], line: int) -> OhlcvBar:
    try:
        date = dt.date.fromisoformat(row[cols["Date"]].strip())
        prices = [float(row[cols[c]]) for c in ("Open", "High", "Low", "Close", "Adj Close")]
        vol_text = row[cols["Volume"]].strip().replace(",", "").replace("_", "")
        volume = int(float(vol_text)) if "." in vol_text or "e" in vol_text.lower() else int(vol_text)
    except (ValueError, IndexError) as exc:
        raise ParseError(f"line {line}: cannot parse row {row!r} ({exc})") from None
    if not all(np.isfinite(prices)):
        raise ParseError(f"line {line}: non-finite price")
    return OhlcvBar(date, *prices, volume)


def scan_csv(source) -> tuple[list[OhlcvBar], list[Issue]]:
    """Parse every row, collecting problems instead of stopping at the first.

    ``source`` is a path, bytes, or a text/binary file object.  Schema
    errors (missing columns, no header) are still raised.
    """
    text = _read_text(source)
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise SchemaError("file is empty; a header row is required") from None
    cols = _header_map(header)
    bars, issues = [], []
    for line, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        try:
            bar = _parse_row(row, cols, line)
        except ParseError as exc:
            issues.append(Issue(line, None, str(exc).split(": ", 1)[1]))
            continue
        problems = bar.violations()
        for p in problems:
            issues.append(Issue(line, bar.date.isoformat(), p))
        if not problems:
            bars.append(bar)
    bars.sort(key=lambda b: b.date)
    seen = set()
    for b in bars:
        if b.date in seen:
            issues.append(Issue(0, b.date.isoformat(), "duplicate date"))
        seen.add(b.date)
    return bars, issues


def parse_csv(source) -> PriceSeries:
    """Parse and validate an OHLCV CSV; raises on the first problem found."""
    bars, issues = scan_csv(source)
    if issues:
        first = issues[0]
        if first.date is None:
            raise ParseError(str(first))
        raise ValidationError(f"{first.date}: {first.message} ({first})")
    if not bars:
        raise SizeError("no data rows after the header")
    return PriceSeries(bars)


def _read_text(source) -> str:
    if isinstance(source, (bytes, bytearray)):
        return bytes(source).decode("utf-8-sig")
    if isinstance(source, (str, Path)):
        return Path(source).read_text(encoding="utf-8-sig")
    data = source.read()
    return data.decode("utf-8-sig") if isinstance(data, bytes) else data


def _fmt(x: float) -> str:
    return repr(float(x))


def to_csv(series: PriceSeries) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for b in series:
        w.writerow([b.date.isoformat(), _fmt(b.open), _fmt(b.high), _fmt(b.low),
                    _fmt(b.close), _fmt(b.adj_close), str(b.volume)])
    return buf.getvalue()


def write_csv(series: PriceSeries, path) -> None:
    Path(path).write_text(to_csv(series), encoding="utf-8")


# ------------------------------------------------------------------ scaling

@dataclass(frozen=True)
class Scaler:
    min: float
    max: float

    def __post_init__(self):
        if not self.max > self.min:
            raise ScalerError(f"degenerate scaler: max {self.max} <= min {self.min}")

    @classmethod
    def fit(cls, values) -> "Scaler":
        v = np.asarray(values, dtype=np.float64)
        if v.size == 0:
            raise ScalerError("cannot fit a scaler on no values")
        lo, hi = float(v.min()), float(v.max())
        if not hi > lo:
            raise ScalerError(f"constant series (all values {lo}); cannot min-max scale")
        return cls(lo, hi)

    def scale(self, values) -> np.ndarray:
        return (np.asarray(values, dtype=np.float64) - self.min) / (self.max - self.min)

    def inverse(self, values) -> np.ndarray:
        return np.asarray(values, dtype=np.float64) * (self.max - self.min) + self.min


def fit_scale(values) -> tuple[Scaler, np.ndarray]:
    s = Scaler.fit(values)
    return s, s.scale(values)


def inverse_scale(scaler: Scaler, values) -> np.ndarray:
    return scaler.inverse(values)


# -------------------------------------------------------------------- split

FEATURE_COLUMNS = ("open", "high", "low", "close", "volume")


@dataclass(frozen=True)
class SplitDataset:
    """Anchored split.  Scalers are fitted on train bars only, on first use."""
    train: PriceSeries
    test: PriceSeries

    @cached_property
    def scaler(self) -> Scaler:
        return self.scaler_for("close")

    def scaler_for(self, column: str) -> Scaler:
        cache = self.__dict__.setdefault("_scalers", {})
        if column not in cache:
            cache[column] = Scaler.fit(self.train.column(column))
        return cache[column]

    def features(self, series: PriceSeries, features: Sequence[str]) -> np.ndarray:
        """Scaled ``[len(series) x len(features)]`` matrix using train-fitted scalers."""
        return np.column_stack([self.scaler_for(f).scale(series.column(f)) for f in features])


def split_anchored(series: PriceSeries, window: int = 1, test_days: int = TEST_DAYS) -> SplitDataset:
    """Train on everything before the last ``test_days`` bars, test on those."""
    need = test_days + window
    if len(series) < need:
        raise SizeError(f"series has {len(series)} bars; need at least {need} "
                        f"({test_days} test + {window} train for a window of {window})")
    return SplitDataset(series[:-test_days], series[-test_days:])


# ------------------------------------------------------------------ windows

@dataclass(frozen=True)
class WindowSet:
    """Supervised pairs: ``inputs`` [N, window, F] and ``targets`` [N, horizon]."""
    inputs: np.ndarray
    targets: np.ndarray

    def __len__(self):
        return self.inputs.shape[0]

    def __getitem__(self, i):
        return self.inputs[i], self.targets[i]

    def __iter__(self):
        return zip(self.inputs, self.targets)

    @property
    def window(self) -> int:
        return self.inputs.shape[1]


def make_windows(values, window: int, horizon: int = 1, target_index: int = -1) -> WindowSet:
    """Stride-1 windows over ``values`` ([T] or [T x F]) with the next
    ``horizon`` values of column ``target_index`` as targets."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim == 1:
        v = v[:, None]
    n = v.shape[0] - window - horizon + 1
    if window < 1 or horizon < 1:
        raise SizeError("window and horizon must be >= 1")
    if n < 1:
        raise SizeError(f"series of length {v.shape[0]} too short for window {window} "
                        f"and horizon {horizon}")
    idx = np.arange(n)[:, None]
    inputs = v[idx + np.arange(window)]
    targets = v[idx + window + np.arange(horizon), target_index]
    return WindowSet(inputs, targets)


# ------------------------------------------------------------------ fixture

FIXTURE_NAME = "synthetic_ohlcv.csv"


def synthetic_ohlcv(n: int = 500, seed: int = 2024, start: dt.date = dt.date(2022, 1, 3)) -> PriceSeries:
    """Deterministic trend + seasonal + noise OHLCV series on weekdays."""
    rng = np.random.default_rng(seed)
    t = np.arange(n, dtype=np.float64)
    base = 200.0 + 0.15 * t + 18.0 * np.sin(2 * np.pi * t / 63.0) + 6.0 * np.sin(2 * np.pi * t / 21.0)
    close = base + np.cumsum(rng.normal(0.0, 1.2, n)) * 0.5
    open_ = np.concatenate([[close[0]], close[:-1]]) + rng.normal(0.0, 1.0, n)
    spread = np.abs(rng.normal(0.0, 2.0, n)) + 0.5
    high = np.maximum(open_, close) + spread * rng.uniform(0.2, 1.0, n)
    low = np.minimum(open_, close) - spread * rng.uniform(0.2, 1.0, n)
    volume = rng.integers(8_000_000, 25_000_000, n)
    bars, day = [], start
    for k in range(n):
        while day.weekday() >= 5:
            day += dt.timedelta(days=1)
        r = lambda x: round(float(x), 2)  # noqa: E731
        bars.append(OhlcvBar(day, r(open_[k]), r(high[k]), r(low[k]), r(close[k]), r(close[k]),
                             int(volume[k])))
        day += dt.timedelta(days=1)
    return PriceSeries(bars)


def fixture_path() -> Path:
    return Path(str(resources.files("rnnforecast") / "data" / FIXTURE_NAME))


def load_fixture() -> PriceSeries:
    return parse_csv(fixture_path())
