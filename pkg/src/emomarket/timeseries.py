"""Daily emotion-proportion series on a trading calendar."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from datetime import date
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .corpus import EMOTIONS, EmotionLabel, Tweet

MAX_LAG = 5


class SeriesError(ValueError):
    pass


@dataclass(frozen=True)
class TradingCalendar:
    trading_days: tuple[date, ...]

    def __post_init__(self):
        days = tuple(self.trading_days)
        object.__setattr__(self, "trading_days", days)
        for a, b in zip(days, days[1:]):
            if not a < b:
                raise SeriesError(f"calendar not strictly increasing at {b.isoformat()}")

    def __contains__(self, d: date) -> bool:
        return d in self._set

    def __len__(self) -> int:
        return len(self.trading_days)

    @property
    def _set(self) -> frozenset[date]:
        # cached lazily; frozen dataclass so bypass __setattr__
        cached = self.__dict__.get("_day_set")
        if cached is None:
            cached = frozenset(self.trading_days)
            object.__setattr__(self, "_day_set", cached)
        return cached

    def position(self, d: date) -> int:
        try:
            return self.trading_days.index(d)
        except ValueError:
            raise SeriesError(f"{d.isoformat()} is not a trading day") from None


@dataclass(frozen=True, eq=False)
class EmotionSeries:
    """Per-date emotion proportions; ``values`` has shape (n_dates, 5) in EMOTIONS order."""

    dates: tuple[date, ...]
    values: np.ndarray

    def __post_init__(self):
        dates = tuple(self.dates)
        values = np.asarray(self.values, dtype=float).reshape(len(dates), len(EMOTIONS))
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "values", values)
        for a, b in zip(dates, dates[1:]):
            if not a < b:
                raise SeriesError(f"series dates not strictly increasing at {b.isoformat()}")
        if len(dates):
            if (values < 0).any():
                raise SeriesError("negative emotion proportion")
            bad = np.abs(values.sum(axis=1) - 1.0) > 1e-9
            if bad.any():
                raise SeriesError(f"proportions do not sum to 1 on {dates[int(np.argmax(bad))].isoformat()}")

    def __len__(self) -> int:
        return len(self.dates)

    def column(self, emotion: EmotionLabel | str) -> np.ndarray:
        return self.values[:, EmotionLabel.parse(emotion).position]

    def index_of(self) -> dict[date, int]:
        return {d: i for i, d in enumerate(self.dates)}

    def subset(self, dates: Iterable[date]) -> EmotionSeries:
        idx = self.index_of()
        rows = [idx[d] for d in dates]
        return EmotionSeries(tuple(self.dates[i] for i in rows), self.values[rows])


@dataclass(frozen=True, eq=False)
class LaggedSeries:
    emotion: EmotionLabel
    lag: int
    dates: tuple[date, ...]
    values: np.ndarray


def aggregate_daily(tweets: Iterable[Tweet]) -> dict[date, np.ndarray]:
    """Count labeled tweets per calendar date; dates without tweets are absent."""
    counts: dict[date, np.ndarray] = {}
    for t in tweets:
        if t.label is None:
            raise SeriesError(f"unlabeled tweet {t.id}")
        d = t.timestamp.date()
        if d not in counts:
            counts[d] = np.zeros(len(EMOTIONS), dtype=np.int64)
        counts[d][t.label.position] += 1
    return dict(sorted(counts.items()))


def to_proportions(counts: Sequence[float]) -> np.ndarray:
    c = np.asarray(counts, dtype=float)
    total = c.sum()
    if total <= 0:
        raise SeriesError("no labeled tweets for day")
    return c / total


def build_series(
    counts: Mapping[date, Sequence[float]],
    calendar: TradingCalendar | None = None,
    fill_forward: bool = False,
) -> EmotionSeries:
    """Proportions per day, restricted to the calendar when one is given.

    A trading day without tweets is an error unless ``fill_forward`` is set, in
    which case it repeats the previous trading day's proportions.
    """
    if calendar is None:
        days = sorted(counts)
        return EmotionSeries(tuple(days), np.array([to_proportions(counts[d]) for d in days]).reshape(-1, 5))

    observed = [d for d in calendar.trading_days if d in counts]
    if not observed:
        return EmotionSeries((), np.empty((0, len(EMOTIONS))))
    first, last = observed[0], observed[-1]
    dates, rows = [], []
    for d in calendar.trading_days:
        if d < first or d > last:
            continue
        if d in counts and np.sum(counts[d]) > 0:
            rows.append(to_proportions(counts[d]))
        elif fill_forward and rows:
            rows.append(rows[-1])
        else:
            raise SeriesError(f"no labeled tweets for trading day {d.isoformat()}")
        dates.append(d)
    return EmotionSeries(tuple(dates), np.array(rows))


def drop_non_trading(series: EmotionSeries, cal: TradingCalendar) -> EmotionSeries:
    keep = [i for i, d in enumerate(series.dates) if d in cal]
    return EmotionSeries(tuple(series.dates[i] for i in keep), series.values[keep])


def lag_shift(series: EmotionSeries, emotion: EmotionLabel | str, lag: int) -> LaggedSeries:
    """Value at ``dates[i]`` is the emotion proportion ``lag`` rows (trading days) earlier."""
    if not 1 <= lag <= MAX_LAG:
        raise SeriesError(f"lag must be in [1, {MAX_LAG}], got {lag}")
    if len(series) <= lag:
        raise SeriesError(f"series of length {len(series)} too short for lag {lag}")
    emotion = EmotionLabel.parse(emotion)
    col = series.column(emotion)
    return LaggedSeries(emotion, lag, series.dates[lag:], col[:-lag].copy())


def minmax_normalize(values: Sequence[float]) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    lo, hi = v.min(), v.max()
    if not hi > lo:
        raise SeriesError("degenerate range")
    out = (v - lo) / (hi - lo)
    # pin the extremes exactly against rounding
    out[v == lo] = 0.0
    out[v == hi] = 1.0
    return out


def normalize_series(series: EmotionSeries) -> np.ndarray:
    """Min-max normalize every emotion column over the whole series (constant columns map to 0)."""
    out = np.zeros_like(series.values)
    for j in range(series.values.shape[1]):
        col = series.values[:, j]
        if col.max() > col.min():
            out[:, j] = minmax_normalize(col)
    return out


# --- file formats -----------------------------------------------------------

SERIES_HEADER = ["date", *(e.value for e in EMOTIONS)]


def write_series(series: EmotionSeries, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SERIES_HEADER)
        for d, row in zip(series.dates, series.values):
            w.writerow([d.isoformat(), *(f"{v:.15f}" for v in row)])


def read_series(path: str | Path) -> EmotionSeries:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != SERIES_HEADER:
            raise SeriesError(f"{path}: expected header {','.join(SERIES_HEADER)}")
        dates, rows = [], []
        for rec in reader:
            if not rec:
                continue
            dates.append(date.fromisoformat(rec[0]))
            rows.append([float(x) for x in rec[1:]])
    return EmotionSeries(tuple(dates), np.array(rows).reshape(-1, len(EMOTIONS)))


def read_calendar(path: str | Path) -> TradingCalendar:
    with open(path, encoding="utf-8") as fh:
        return TradingCalendar(tuple(date.fromisoformat(s.strip()) for s in fh if s.strip()))


def write_calendar(cal: TradingCalendar, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.writelines(d.isoformat() + "\n" for d in cal.trading_days)
