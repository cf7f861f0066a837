"""Tweet ingestion, keyword filtering and multinomial Naive Bayes emotion labeling."""

from __future__ import annotations

import enum
import json
import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import datetime
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np


class EmotionLabel(str, enum.Enum):
    ANGER = "anger"
    DISGUST = "disgust"
    JOY = "joy"
    SADNESS = "sadness"
    FEAR = "fear"

    @property
    def position(self) -> int:
        return EMOTIONS.index(self)

    @classmethod
    def parse(cls, value: str | EmotionLabel) -> EmotionLabel:
        try:
            return cls(value)
        except ValueError:
            raise ValueError(f"unknown emotion label {value!r}") from None


# Fixed vector layout used by every emotion 5-vector in the package.
EMOTIONS: tuple[EmotionLabel, ...] = tuple(EmotionLabel)

DEFAULT_KEYWORDS = ("股票", "股市", "证券", "深证成指", "上证指数", "成份指数")


class CorpusError(ValueError):
    pass


@dataclass(frozen=True)
class Tweet:
    id: str
    timestamp: datetime
    text: str
    label: EmotionLabel | None = None

    def __post_init__(self):
        if not self.id:
            raise CorpusError("tweet id must be non-empty")
        if not self.text.strip():
            raise CorpusError(f"tweet {self.id}: empty text")
        if self.label is not None and not isinstance(self.label, EmotionLabel):
            object.__setattr__(self, "label", EmotionLabel.parse(self.label))

    def with_label(self, label: EmotionLabel) -> Tweet:
        return replace(self, label=label)


@dataclass(frozen=True)
class KeywordFilter:
    keywords: tuple[str, ...] = DEFAULT_KEYWORDS

    def __post_init__(self):
        object.__setattr__(self, "keywords", tuple(self.keywords))
        if not self.keywords:
            raise CorpusError("keyword list is empty")
        if any(k == "" for k in self.keywords):
            raise CorpusError("empty keyword")

    def matches(self, text: str) -> bool:
        return any(k in text for k in self.keywords)


def filter_stock_tweets(tweets: Iterable[Tweet], kw_filter: KeywordFilter = KeywordFilter()) -> list[Tweet]:
    """Keep the tweets whose text contains at least one keyword, in input order."""
    return [t for t in tweets if kw_filter.matches(t.text)]


# --- tokenization -----------------------------------------------------------

Tokenizer = Callable[[str], list[str]]


def _is_cjk(ch: str) -> bool:
    cp = ord(ch)
    return (
        0x4E00 <= cp <= 0x9FFF
        or 0x3400 <= cp <= 0x4DBF
        or 0x20000 <= cp <= 0x2A6DF
        or 0xF900 <= cp <= 0xFAFF
    )


def tokenize(text: str) -> list[str]:
    """Default tokenizer.

    Runs of CJK ideographs become overlapping character bigrams (a lone
    ideograph is kept as a unigram); everything else is split on whitespace.
    """
    tokens: list[str] = []
    i, n = 0, len(text)
    while i < n:
        j = i
        if _is_cjk(text[i]):
            while j < n and _is_cjk(text[j]):
                j += 1
            run = text[i:j]
            if len(run) == 1:
                tokens.append(run)
            else:
                tokens.extend(run[p : p + 2] for p in range(len(run) - 1))
        else:
            while j < n and not _is_cjk(text[j]):
                j += 1
            tokens.extend(text[i:j].split())
        i = j
    return tokens


# --- Naive Bayes ------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class NBModel:
    """Multinomial Naive Bayes over token counts.

    ``log_likelihood[c, v]`` is the smoothed log P(token v | class c). Tokens
    outside the vocabulary score ``oov_log_likelihood`` for every class, so
    unseen content never moves the decision.
    """

    classes: tuple[EmotionLabel, ...]
    log_prior: np.ndarray
    log_likelihood: np.ndarray
    vocabulary: dict[str, int]
    smoothing: float
    tokenizer: Tokenizer = field(default=tokenize, repr=False)

    @property
    def class_log_prior(self) -> dict[EmotionLabel, float]:
        return {c: float(p) for c, p in zip(self.classes, self.log_prior)}

    @property
    def oov_log_likelihood(self) -> float:
        return -math.log(len(self.vocabulary) + 1)

    def token_log_likelihood(self, label: EmotionLabel, token: str) -> float:
        idx = self.vocabulary.get(token)
        if idx is None:
            return self.oov_log_likelihood
        return float(self.log_likelihood[self.classes.index(label), idx])

    def joint_log_scores(self, text: str) -> np.ndarray:
        """Unnormalized log P(class) + sum of token log-likelihoods, per class."""
        scores = self.log_prior.copy()
        for token, count in Counter(self.tokenizer(text)).items():
            idx = self.vocabulary.get(token)
            if idx is None:
                scores += count * self.oov_log_likelihood
            else:
                scores += count * self.log_likelihood[:, idx]
        return scores

    def posterior(self, text: str) -> dict[EmotionLabel, float]:
        s = self.joint_log_scores(text)
        p = np.exp(s - s.max())
        p /= p.sum()
        return {c: float(v) for c, v in zip(self.classes, p)}

    def to_dict(self) -> dict:
        vocab = sorted(self.vocabulary, key=self.vocabulary.__getitem__)
        return {
            "type": "multinomial_nb",
            "tokenizer": "cjk_bigram",
            "smoothing": self.smoothing,
            "classes": [c.value for c in self.classes],
            "log_prior": self.log_prior.tolist(),
            "vocabulary": vocab,
            "log_likelihood": self.log_likelihood.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict, tokenizer: Tokenizer = tokenize) -> NBModel:
        return cls(
            classes=tuple(EmotionLabel.parse(c) for c in d["classes"]),
            log_prior=np.asarray(d["log_prior"], dtype=float),
            log_likelihood=np.asarray(d["log_likelihood"], dtype=float),
            vocabulary={tok: i for i, tok in enumerate(d["vocabulary"])},
            smoothing=float(d["smoothing"]),
            tokenizer=tokenizer,
        )


def train_nb(corpus: Sequence[Tweet], smoothing: float = 1.0, tokenizer: Tokenizer = tokenize) -> NBModel:
    if not corpus:
        raise CorpusError("empty training corpus")
    if not smoothing > 0:
        raise CorpusError("smoothing must be > 0")
    for t in corpus:
        if t.label is None:
            raise CorpusError(f"unlabeled tweet in training corpus: {t.id}")

    present = {t.label for t in corpus}
    classes = tuple(e for e in EMOTIONS if e in present)
    row = {c: i for i, c in enumerate(classes)}

    vocabulary: dict[str, int] = {}
    docs = []
    for t in corpus:
        counts = Counter(tokenizer(t.text))
        for tok in counts:
            vocabulary.setdefault(tok, len(vocabulary))
        docs.append((row[t.label], counts))

    counts = np.zeros((len(classes), len(vocabulary)))
    n_docs = np.zeros(len(classes))
    for r, c in docs:
        n_docs[r] += 1
        for tok, k in c.items():
            counts[r, vocabulary[tok]] += k

    log_prior = np.log(n_docs) - math.log(n_docs.sum())
    smoothed = counts + smoothing
    log_likelihood = np.log(smoothed) - np.log(smoothed.sum(axis=1, keepdims=True))
    return NBModel(classes, log_prior, log_likelihood, vocabulary, float(smoothing), tokenizer)


def classify(model: NBModel, tweet: Tweet | str) -> EmotionLabel:
    text = tweet.text if isinstance(tweet, Tweet) else tweet
    # np.argmax returns the first maximum, and classes are in label order.
    return model.classes[int(np.argmax(model.joint_log_scores(text)))]


def label_tweets(model: NBModel, tweets: Sequence[Tweet], workers: int = 1) -> list[Tweet]:
    """Attach a predicted label to every tweet; output is independent of ``workers``."""
    if workers <= 1:
        return [t.with_label(classify(model, t)) for t in tweets]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        labels = list(pool.map(lambda t: classify(model, t), tweets))
    return [t.with_label(lab) for t, lab in zip(tweets, labels)]


# --- file formats -----------------------------------------------------------

TIMESTAMP_FORMAT = "%Y-%m-%dT%H:%M:%S"


def tweet_from_json(obj: dict) -> Tweet:
    try:
        label = obj.get("label")
        return Tweet(
            id=str(obj["id"]),
            timestamp=datetime.strptime(obj["timestamp"], TIMESTAMP_FORMAT),
            text=obj["text"],
            label=EmotionLabel.parse(label) if label is not None else None,
        )
    except KeyError as exc:
        raise CorpusError(f"tweet record missing field {exc.args[0]!r}") from None


def tweet_to_json(t: Tweet) -> dict:
    obj = {"id": t.id, "timestamp": t.timestamp.strftime(TIMESTAMP_FORMAT), "text": t.text}
    if t.label is not None:
        obj["label"] = t.label.value
    return obj


def read_tweets(path: str | Path) -> list[Tweet]:
    tweets = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                tweets.append(tweet_from_json(json.loads(line)))
            except (json.JSONDecodeError, ValueError) as exc:
                raise CorpusError(f"{path}:{lineno}: {exc}") from None
    return tweets


def write_tweets(tweets: Iterable[Tweet], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for t in tweets:
            fh.write(json.dumps(tweet_to_json(t), ensure_ascii=False) + "\n")


def read_keywords(path: str | Path) -> KeywordFilter:
    with open(path, encoding="utf-8") as fh:
        words = [line.strip() for line in fh if line.strip()]
    return KeywordFilter(tuple(words))
