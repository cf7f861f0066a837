"""Emotion time series from microblog text and discretized stock-market prediction."""

from .corpus import EMOTIONS, EmotionLabel, Tweet
from .market import TARGETS
from .timeseries import MAX_LAG

__version__ = "0.1.0"

__all__ = ["EMOTIONS", "EmotionLabel", "Tweet", "TARGETS", "MAX_LAG", "__version__"]
