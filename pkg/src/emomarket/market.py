"""OHLCV records, rate-of-change targets and the chronological split."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from datetime import date
from pathlib import Path
from typing import Sequence

import numpy as np

from .timeseries import EmotionSeries

TARGETS = ("close", "open", "high", "low", "volume")


class MarketError(ValueError):
    pass


@dataclass(frozen=True)
class OhlcvRecord:
    date: date
    open: float
    high: float
    low: float
    close: float
    volume: float

    def __post_init__(self):
        if min(self.open, self.high, self.low, self.close) <= 0:
            raise MarketError(f"{self.date.isoformat()}: index values must be positive")
        if self.volume < 0:
            raise MarketError(f"{self.date.isoformat()}: negative volume")
        if self.low > min(self.open, self.close) or self.high < max(self.open, self.close):
            raise MarketError(f"{self.date.isoformat()}: low/high inconsistent with open/close")


@dataclass(frozen=True, eq=False)
class MarketSeries:
    dates: tuple[date, ...]
    close_rc: np.ndarray
    open_rc: np.ndarray
    high_rc: np.ndarray
    low_rc: np.ndarray
    volume: np.ndarray

    def __len__(self) -> int:
        return len(self.dates)

    def target(self, name: str) -> np.ndarray:
        if name not in TARGETS:
            raise MarketError(f"unknown target {name!r}")
        return getattr(self, "volume" if name == "volume" else f"{name}_rc")

    def subset(self, rows: slice | Sequence[int]) -> MarketSeries:
        idx = np.arange(len(self.dates))[rows]
        return MarketSeries(
            tuple(self.dates[i] for i in idx),
            *(getattr(self, f)[idx] for f in ("close_rc", "open_rc", "high_rc", "low_rc", "volume")),
        )

    def select_dates(self, dates: Sequence[date]) -> MarketSeries:
        pos = {d: i for i, d in enumerate(self.dates)}
        return self.subset([pos[d] for d in dates])


def compute_returns(records: Sequence[OhlcvRecord], mode: str = "standard") -> MarketSeries:
    """Percent rate of change of close/open/high/low against the previous close.

    ``mode="paper_literal"`` divides by the current day's close instead (kept
    for comparison runs). Volume is copied through untouched and the first
    record yields no row.
    """
    if mode not in ("standard", "paper_literal"):
        raise MarketError(f"unknown returns mode {mode!r}")
    if len(records) < 2:
        raise MarketError("need at least 2 OHLCV records")
    for a, b in zip(records, records[1:]):
        if not a.date < b.date:
            raise MarketError(f"OHLCV dates not strictly increasing at {b.date.isoformat()}")

    cols = {k: [] for k in ("close", "open", "high", "low")}
    for prev, cur in zip(records, records[1:]):
        denom = prev.close if mode == "standard" else cur.close
        if not denom > 0:
            raise MarketError(f"{cur.date.isoformat()}: non-positive denominator")
        for k in cols:
            cols[k].append((getattr(cur, k) - prev.close) / denom * 100.0)
    return MarketSeries(
        tuple(r.date for r in records[1:]),
        np.array(cols["close"]),
        np.array(cols["open"]),
        np.array(cols["high"]),
        np.array(cols["low"]),
        np.array([r.volume for r in records[1:]], dtype=float),
    )


def align(x: EmotionSeries, y: MarketSeries) -> tuple[EmotionSeries, MarketSeries]:
    """Restrict both series to their common dates."""
    ydates = set(y.dates)
    common = [d for d in x.dates if d in ydates]
    return x.subset(common), y.select_dates(common)


def split_train_test(
    x: EmotionSeries, y: MarketSeries, train_fraction: float = 0.8
) -> tuple[tuple[EmotionSeries, MarketSeries], tuple[EmotionSeries, MarketSeries]]:
    """Chronological split: the first ceil(fraction * n) dates train, the rest test."""
    if not 0 < train_fraction < 1:
        raise MarketError(f"train_fraction must be in (0, 1), got {train_fraction}")
    if len(x.dates) != len(y.dates) or x.dates != y.dates:
        for i, (a, b) in enumerate(zip(x.dates, y.dates)):
            if a != b:
                raise MarketError(f"misaligned dates at row {i}: {a.isoformat()} vs {b.isoformat()}")
        raise MarketError(f"misaligned series lengths: {len(x.dates)} vs {len(y.dates)}")
    n = len(x.dates)
    # round first so that e.g. 0.8 * 10 does not ceil to 9
    cut = math.ceil(round(train_fraction * n, 9))
    train = (x.subset(x.dates[:cut]), y.subset(slice(0, cut)))
    test = (x.subset(x.dates[cut:]), y.subset(slice(cut, n)))
    return train, test


# --- file formats -----------------------------------------------------------

OHLCV_HEADER = ["date", "open", "high", "low", "close", "volume"]


def read_ohlcv(path: str | Path) -> list[OhlcvRecord]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != OHLCV_HEADER:
            raise MarketError(f"{path}: expected header {','.join(OHLCV_HEADER)}")
        out = []
        for rec in reader:
            if not rec:
                continue
            out.append(OhlcvRecord(date.fromisoformat(rec[0]), *(float(v) for v in rec[1:6])))
    return out


def write_ohlcv(records: Sequence[OhlcvRecord], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(OHLCV_HEADER)
        for r in records:
            w.writerow([r.date.isoformat(), f"{r.open:.4f}", f"{r.high:.4f}", f"{r.low:.4f}", f"{r.close:.4f}", f"{r.volume:.2f}"])
