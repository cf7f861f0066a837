"""Correlation analysis and pairwise Granger causality tests."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import EMOTIONS, EmotionLabel
from .market import TARGETS, MarketSeries
from .timeseries import MAX_LAG, EmotionSeries, SeriesError, minmax_normalize

CORRELATION_THRESHOLD = 0.2
TIERS = ((0.001, "***"), (0.01, "**"), (0.05, "*"))


class StatsError(ValueError):
    pass


# --- correlation ------------------------------------------------------------


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise StatsError("pearson needs two 1-D sequences of equal length")
    if len(x) < 2:
        raise StatsError("pearson needs at least 2 points")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = np.dot(dx, dx)
    syy = np.dot(dy, dy)
    if sxx == 0 or syy == 0:
        raise StatsError("zero variance")
    rho = np.dot(dx, dy) / math.sqrt(sxx * syy)
    return float(min(1.0, max(-1.0, rho)))


def sampled_correlation(
    x: Sequence[float],
    y: Sequence[float],
    n_samples: int = 100,
    sample_size: int = 150,
    seed: int | np.random.SeedSequence | None = 0,
) -> tuple[float, float]:
    """Mean and population std of Pearson's rho over random subsets of aligned pairs.

    Each draw picks ``sample_size`` row indices without replacement and uses
    the same rows from both series.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) != len(y):
        raise StatsError("series lengths differ")
    if sample_size > len(x):
        raise StatsError(f"sample_size {sample_size} exceeds series length {len(x)}")
    rng = np.random.default_rng(seed)
    rhos = np.empty(n_samples)
    for s in range(n_samples):
        idx = rng.choice(len(x), size=sample_size, replace=False)
        rhos[s] = pearson(x[idx], y[idx])
    return float(rhos.mean()), float(rhos.std())


def shuffle_baseline(
    x: Sequence[float],
    y: Sequence[float],
    n_shuffles: int = 100,
    seed: int | np.random.SeedSequence | None = 0,
) -> float:
    x = np.asarray(x, dtype=float)
    rng = np.random.default_rng(seed)
    return float(np.mean([pearson(rng.permutation(x), y) for _ in range(n_shuffles)]))


# --- regression -------------------------------------------------------------


def ols_fit(design: np.ndarray, response: Sequence[float]) -> tuple[np.ndarray, float]:
    """Least-squares coefficients and residual sum of squares."""
    X = np.asarray(design, dtype=float)
    y = np.asarray(response, dtype=float)
    if X.ndim != 2 or X.shape[0] != len(y):
        raise StatsError("design/response shape mismatch")
    if X.shape[0] < X.shape[1]:
        raise StatsError("fewer rows than columns")
    coef, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
    if rank < X.shape[1]:
        raise StatsError("singular design matrix")
    resid = y - X @ coef
    return coef, float(resid @ resid)


# --- F distribution ---------------------------------------------------------


def _betacf(a: float, b: float, x: float) -> float:
    # Modified Lentz evaluation of the incomplete-beta continued fraction.
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, 1000):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-15:
            return h
    raise StatsError("incomplete beta continued fraction did not converge")


def betainc_regularized(a: float, b: float, x: float) -> float:
    """I_x(a, b) for a, b > 0 and 0 <= x <= 1."""
    if a <= 0 or b <= 0:
        raise StatsError("beta parameters must be positive")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    log_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def f_sf(f: float, d1: float, d2: float) -> float:
    """Upper tail P(F > f) of the F(d1, d2) distribution."""
    if f <= 0:
        return 1.0
    if math.isinf(f):
        return 0.0
    return betainc_regularized(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * f))


# --- Granger causality -------------------------------------------------------


@dataclass(frozen=True)
class GrangerResult:
    lag: int
    rss_restricted: float
    rss_unrestricted: float
    f_stat: float
    p_value: float
    df_num: int
    df_den: int
    emotion: EmotionLabel | None = None
    target: str | None = None

    def rejects(self, significance: float = 0.05) -> bool:
        return self.p_value < significance


def _lag_matrix(v: np.ndarray, lag: int) -> np.ndarray:
    # column i-1 holds v[t-i] for rows t = lag..T-1
    T = len(v)
    return np.column_stack([v[lag - i : T - i] for i in range(1, lag + 1)])


def granger_test(x: Sequence[float], y: Sequence[float], lag: int) -> GrangerResult:
    """F-test of whether ``lag`` past values of x improve an autoregression of y.

    Both nested models are fitted on the same T - lag rows, so the statistic
    follows F(lag, T - 3*lag - 1) under the null.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) != len(y):
        raise StatsError("granger_test needs aligned series")
    if not 1 <= lag <= MAX_LAG:
        raise StatsError(f"lag must be in [1, {MAX_LAG}], got {lag}")
    T = len(y)
    t_eff = T - lag
    df_den = t_eff - 2 * lag - 1
    if df_den < 1:
        raise StatsError(f"series of length {T} too short for lag {lag}")

    target = y[lag:]
    ones = np.ones((t_eff, 1))
    ylags = _lag_matrix(y, lag)
    xlags = _lag_matrix(x, lag)
    _, rss_r = ols_fit(np.hstack([ones, ylags]), target)
    _, rss_u = ols_fit(np.hstack([ones, ylags, xlags]), target)
    rss_u = min(rss_u, rss_r)
    if rss_u == 0.0:
        f_stat = 0.0 if rss_r == 0.0 else math.inf
    else:
        f_stat = ((rss_r - rss_u) / lag) / (rss_u / df_den)
    return GrangerResult(lag, rss_r, rss_u, f_stat, f_sf(f_stat, lag, df_den), lag, df_den)


def significance_tier(p: float) -> str:
    for cut, stars in TIERS:
        if p < cut:
            return stars
    return ""


# --- analysis grid ----------------------------------------------------------


@dataclass(frozen=True)
class AnalysisRow:
    target: str
    emotion: EmotionLabel
    lag: int
    rho_full: float
    rho_sample_mean: float
    rho_sample_std: float
    rho_shuffle_mean: float
    f_stat: float
    p_value: float
    error: str | None = None

    @property
    def degenerate(self) -> bool:
        return self.error is not None

    @property
    def tier(self) -> str:
        return "degenerate" if self.degenerate else significance_tier(self.p_value)

    @property
    def correlation_flag(self) -> bool:
        return not self.degenerate and abs(self.rho_sample_mean) > CORRELATION_THRESHOLD

    def significant(self, significance: float = 0.05) -> bool:
        return not self.degenerate and self.p_value < significance


def _cell_seed(seed: int, *key: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([seed, *key])


def analysis_grid(
    x: EmotionSeries,
    y: MarketSeries,
    lags: Sequence[int] = range(1, MAX_LAG + 1),
    n_samples: int = 100,
    sample_size: int = 150,
    n_shuffles: int = 100,
    seed: int = 0,
    normalize: bool = True,
) -> list[AnalysisRow]:
    """Correlation and Granger results for every (target, emotion, lag) cell.

    Correlations pair y on date i with the emotion ``lag`` rows earlier, over
    the rows where the largest requested lag exists, so all lags share one
    sample. Cells whose inputs are degenerate are returned with ``error`` set.
    """
    if x.dates != y.dates:
        raise StatsError("analysis needs emotion and market series on identical dates")
    lags = sorted(set(lags))
    max_lag = max(lags)
    rows = []
    for ti, target in enumerate(TARGETS):
        try:
            yv = y.target(target)
            yv = minmax_normalize(yv) if normalize else np.asarray(yv, dtype=float)
            y_err = None
        except SeriesError as exc:
            y_err = f"{target}: {exc}"
        for ei, emotion in enumerate(EMOTIONS):
            try:
                xv = x.column(emotion)
                xv = minmax_normalize(xv) if normalize else xv
                x_err = None
            except SeriesError as exc:
                x_err = f"{emotion.value}: {exc}"
            for lag in lags:
                err = y_err or x_err
                if err is None:
                    try:
                        rows.append(
                            _cell(target, emotion, lag, xv, yv, max_lag, n_samples, sample_size,
                                  n_shuffles, _cell_seed(seed, ti, ei, lag))
                        )
                        continue
                    except (StatsError, SeriesError) as exc:
                        err = str(exc)
                nan = math.nan
                rows.append(AnalysisRow(target, emotion, lag, nan, nan, nan, nan, nan, nan, err))
    return rows


def _cell(target, emotion, lag, xv, yv, max_lag, n_samples, sample_size, n_shuffles, seq):
    n = len(yv)
    if n - max_lag < 3:
        raise StatsError("too few rows for correlation")
    ys = yv[max_lag:]
    xs = xv[max_lag - lag : n - lag]
    rho = pearson(xs, ys)
    sample_seq, shuffle_seq = seq.spawn(2)
    mean, std = sampled_correlation(xs, ys, n_samples, min(sample_size, len(ys)), sample_seq)
    shuffled = shuffle_baseline(xs, ys, n_shuffles, shuffle_seq)
    g = granger_test(xv, yv, lag)
    return AnalysisRow(target, emotion, lag, rho, mean, std, shuffled, g.f_stat, g.p_value)


REPORT_HEADER = [
    "target", "emotion", "lag", "rho_full", "rho_sample_mean", "rho_sample_std",
    "rho_shuffle_mean", "f_stat", "p_value", "significance_tier",
]


def _fmt(v: float) -> str:
    return "nan" if math.isnan(v) else f"{v:.10g}"


def write_analysis(rows: Sequence[AnalysisRow], path: str | Path) -> None:
    order = sorted(rows, key=lambda r: (TARGETS.index(r.target), r.emotion.position, r.lag))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_HEADER)
        for r in order:
            w.writerow([
                r.target, r.emotion.value, r.lag,
                *(_fmt(v) for v in (r.rho_full, r.rho_sample_mean, r.rho_sample_std,
                                    r.rho_shuffle_mean, r.f_stat, r.p_value)),
                r.tier,
            ])


def read_analysis(path: str | Path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def format_analysis(rows: Sequence[AnalysisRow], significance: float = 0.05) -> str:
    """Human-readable summary: flagged correlations and significant Granger cells."""
    out = io.StringIO()
    out.write(f"Correlations with |mean sampled rho| > {CORRELATION_THRESHOLD}:\n")
    for r in rows:
        if r.correlation_flag:
            out.write(f"  {r.target:<6} {r.emotion.value:<8} lag {r.lag}  rho={r.rho_sample_mean:+.3f}"
                      f" (sd {r.rho_sample_std:.3f}, shuffled {r.rho_shuffle_mean:+.3f})\n")
    out.write(f"Granger causality (p < {significance}):\n")
    for r in rows:
        if r.significant(significance):
            out.write(f"  {r.emotion.value:<8} -> {r.target:<6} lag {r.lag}  p={r.p_value:.4g} {r.tier}\n")
    n_bad = sum(r.degenerate for r in rows)
    if n_bad:
        out.write(f"{n_bad} degenerate cells\n")
    return out.getvalue()
