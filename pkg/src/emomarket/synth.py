"""Reproducible synthetic tweets + OHLCV with planted emotion -> market dependencies.

Each planted (emotion, lag, target) makes the target on trading day t a
deterministic, increasing function of the realized proportion of that emotion
on trading day t - lag. The emotion itself switches between three well
separated regimes, so a 3-way discretization of the target recovers the
regime of the lagged emotion.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import date, datetime, timedelta

import numpy as np

from .corpus import DEFAULT_KEYWORDS, EMOTIONS, EmotionLabel, Tweet
from .market import OhlcvRecord
from .timeseries import MAX_LAG, TradingCalendar

VOCAB = {
    EmotionLabel.ANGER: ("愤怒", "气死", "可恶", "混蛋", "恼火", "火大"),
    EmotionLabel.DISGUST: ("恶心", "讨厌", "垃圾", "无耻", "鄙视", "厌恶"),
    EmotionLabel.JOY: ("开心", "高兴", "赚钱", "哈哈", "满意", "幸福"),
    EmotionLabel.SADNESS: ("难过", "伤心", "心痛", "失望", "哭了", "悲伤"),
    EmotionLabel.FEAR: ("害怕", "恐慌", "担心", "吓人", "紧张", "不安"),
}
FILLER = ("今天", "大家", "我们", "觉得", "这个", "还是", "已经", "明天", "看看", "一下")
OFF_TOPIC = ("天气", "电影", "晚饭", "足球", "旅游", "音乐")

# Shanghai exchange closures on weekdays between Dec 2014 and Dec 2015.
HOLIDAYS = frozenset(
    [date(2015, 1, 1), date(2015, 1, 2)]
    + [date(2015, 2, d) for d in (18, 19, 20, 23, 24)]
    + [date(2015, 4, 6), date(2015, 5, 1), date(2015, 6, 22), date(2015, 9, 3), date(2015, 9, 4)]
    + [date(2015, 10, d) for d in (1, 2, 5, 6, 7)]
)

PLANTABLE_TARGETS = ("close", "open", "volume")
REGIMES = (0.05, 0.30, 0.55)


@dataclass(frozen=True)
class Plant:
    emotion: EmotionLabel
    lag: int
    target: str

    @classmethod
    def parse(cls, text: str) -> Plant:
        """``emotion:lag:target``, e.g. ``sadness:2:volume``."""
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError(f"bad plant {text!r}, expected emotion:lag:target")
        p = cls(EmotionLabel.parse(parts[0]), int(parts[1]), parts[2])
        if not 1 <= p.lag <= MAX_LAG:
            raise ValueError(f"plant lag must be in [1, {MAX_LAG}]")
        if p.target not in PLANTABLE_TARGETS:
            raise ValueError(f"plant target must be one of {', '.join(PLANTABLE_TARGETS)}")
        return p

    def format(self) -> str:
        return f"{self.emotion.value}:{self.lag}:{self.target}"


@dataclass
class SynthData:
    tweets: list[Tweet]
    nb_training: list[Tweet]
    calendar: TradingCalendar
    ohlcv: list[OhlcvRecord]
    keywords: tuple[str, ...]
    true_proportions: dict[date, np.ndarray]


def trading_days(start: date, end: date) -> list[date]:
    out, d = [], start
    while d <= end:
        if d.weekday() < 5 and d not in HOLIDAYS:
            out.append(d)
        d += timedelta(days=1)
    return out


def _tweet_text(rng: np.random.Generator, emotion: EmotionLabel, keyword: str | None) -> str:
    words = list(rng.choice(VOCAB[emotion], size=int(rng.integers(2, 4))))
    words += list(rng.choice(FILLER, size=int(rng.integers(1, 3))))
    if keyword is not None:
        words.append(keyword)
    else:
        words.append(str(rng.choice(OFF_TOPIC)))
    rng.shuffle(words)
    return " ".join(words)


def _levels(n_planted: int) -> np.ndarray:
    # shrink the regimes so planted emotions never take more than 90% of a day
    top = max(1, n_planted) * REGIMES[-1]
    return np.asarray(REGIMES) * min(1.0, 0.9 / top)


def _day_mix(rng: np.random.Generator, planted: list[EmotionLabel]) -> np.ndarray:
    levels = _levels(len(planted))
    p = np.zeros(len(EMOTIONS))
    for e in planted:
        p[e.position] = levels[int(rng.integers(len(levels)))]
    free = [e.position for e in EMOTIONS if e not in planted]
    rest = 1.0 - p.sum()
    p[free] = rest * rng.dirichlet(np.full(len(free), 8.0))
    return p


def generate(
    seed: int = 0,
    start: date = date(2014, 12, 1),
    end: date = date(2015, 12, 7),
    plants: tuple[Plant, ...] = (Plant(EmotionLabel.SADNESS, 2, "volume"),),
    tweets_per_day: int = 200,
    off_day_tweets: int = 40,
    off_topic_fraction: float = 0.2,
    nb_training_size: int = 1500,
    calendar_tail_days: int = 31,
) -> SynthData:
    rng = np.random.default_rng(seed)
    keywords = DEFAULT_KEYWORDS
    planted = [e for e in EMOTIONS if any(p.emotion is e for p in plants)]
    if len(planted) > 2:
        raise ValueError("at most two distinct planted emotions")

    prior_day = start - timedelta(days=1)
    while prior_day.weekday() >= 5 or prior_day in HOLIDAYS:
        prior_day -= timedelta(days=1)
    days = trading_days(start, end)
    calendar = TradingCalendar(tuple([prior_day] + trading_days(start, end + timedelta(days=calendar_tail_days))))
    trading = set(days)

    # tweets for every calendar day, fewer on closed days
    tweets: list[Tweet] = []
    true_props: dict[date, np.ndarray] = {}
    d = start
    serial = 0
    while d <= end:
        is_open = d in trading
        n = tweets_per_day if is_open else off_day_tweets
        mix = _day_mix(rng, planted)
        counts = rng.multinomial(n, mix)
        if is_open:
            true_props[d] = counts / counts.sum()
        labels = np.repeat(np.arange(len(EMOTIONS)), counts)
        rng.shuffle(labels)
        for li in labels:
            emotion = EMOTIONS[int(li)]
            kw = str(rng.choice(keywords))
            ts = datetime(d.year, d.month, d.day) + timedelta(seconds=int(rng.integers(86400)))
            tweets.append(Tweet(f"t{serial:08d}", ts, _tweet_text(rng, emotion, kw)))
            serial += 1
            if rng.random() < off_topic_fraction:
                ts = datetime(d.year, d.month, d.day) + timedelta(seconds=int(rng.integers(86400)))
                tweets.append(Tweet(f"t{serial:08d}", ts, _tweet_text(rng, emotion, None)))
                serial += 1
        d += timedelta(days=1)
    tweets.sort(key=lambda t: (t.timestamp, t.id))

    nb_training = []
    for i in range(nb_training_size):
        emotion = EMOTIONS[i % len(EMOTIONS)]
        ts = datetime(start.year, start.month, start.day) - timedelta(days=30, seconds=i)
        nb_training.append(Tweet(f"nb{i:06d}", ts, _tweet_text(rng, emotion, str(rng.choice(keywords))), emotion))

    ohlcv = _market(rng, prior_day, days, true_props, plants, _levels(len(planted)))
    return SynthData(tweets, nb_training, calendar, ohlcv, keywords, true_props)


def _driver(props, days: list[date], i: int, plant: Plant, levels: np.ndarray) -> float | None:
    """Lagged planted proportion rescaled by the regime span, or None before the series starts."""
    if i - plant.lag < 0:
        return None
    v = props[days[i - plant.lag]][plant.emotion.position]
    return (v - levels[0]) / (levels[-1] - levels[0])


def _market(rng, prior_day, days, props, plants, levels) -> list[OhlcvRecord]:
    by_target = {p.target: p for p in plants}
    close = 2600.0
    records = [_record(prior_day, close, close, close * 1.004, close * 0.996, 2.0e10)]
    for i, d in enumerate(days):
        c_rc = rng.normal(0.0, 1.5)
        o_rc = rng.normal(0.0, 0.4)
        vol = float(rng.lognormal(np.log(2.0e10), 0.15))
        for target, p in by_target.items():
            z = _driver(props, days, i, p, levels)
            if z is None:
                continue
            if target == "close":
                c_rc = 4.0 * (z - 0.5) + rng.normal(0.0, 0.05)
            elif target == "open":
                o_rc = 2.0 * (z - 0.5) + rng.normal(0.0, 0.02)
            else:
                vol = 1.0e10 * (1.0 + 3.0 * z) * (1.0 + rng.normal(0.0, 0.01))
        o = close * (1 + o_rc / 100)
        c = close * (1 + c_rc / 100)
        h = max(o, c) * (1 + abs(rng.normal(0.0, 0.005)))
        lo = min(o, c) * (1 - abs(rng.normal(0.0, 0.005)))
        records.append(_record(d, o, c, h, lo, vol))
        close = records[-1].close
    return records


def _record(d: date, o: float, c: float, h: float, lo: float, v: float) -> OhlcvRecord:
    o, c, h, lo = (round(x, 4) for x in (o, c, h, lo))
    return OhlcvRecord(d, o, max(h, o, c), min(lo, o, c), c, round(max(v, 0.0), 2))
