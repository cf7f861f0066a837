"""Turn real-valued market targets into category labels."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

METHODS = ("sign", "equal_frequency", "kmeans")


class DiscretizationError(ValueError):
    pass


def _labels_for(k: int) -> tuple[int, ...]:
    if k == 3:
        return (-1, 0, 1)
    if k == 2:
        return (0, 1)
    if k == 1:
        return (0,)
    return tuple(range(k))


@dataclass(frozen=True)
class DiscretizationScheme:
    """A fitted mapping from values to ordered category labels.

    ``labels[j]`` is assigned to values in ``[boundaries[j-1], boundaries[j])``;
    a value sitting exactly on a boundary takes the higher label.
    """

    method: str
    boundaries: tuple[float, ...] = ()
    centers: tuple[float, ...] | None = None
    labels: tuple[int, ...] = (0, 1)
    # per-iteration within-cluster sum of squares, kmeans only
    history: tuple[float, ...] = field(default=(), compare=False, repr=False)

    def __post_init__(self):
        if self.method not in METHODS:
            raise DiscretizationError(f"unknown method {self.method!r}")
        b = self.boundaries
        if any(not lo < hi for lo, hi in zip(b, b[1:])):
            raise DiscretizationError("boundaries must be strictly increasing")
        if self.method != "sign" and len(self.labels) != len(b) + 1:
            raise DiscretizationError("need one more label than boundaries")

    @property
    def n_classes(self) -> int:
        return len(self.labels)

    def apply(self, values: Sequence[float] | float) -> np.ndarray:
        v = np.asarray(values, dtype=float)
        if self.method == "sign":
            return (v > 0).astype(int)
        idx = np.searchsorted(np.asarray(self.boundaries), v, side="right")
        return np.asarray(self.labels)[idx]

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "boundaries": list(self.boundaries),
            "centers": None if self.centers is None else list(self.centers),
            "labels": list(self.labels),
        }

    @classmethod
    def from_dict(cls, d: dict) -> DiscretizationScheme:
        centers = d.get("centers")
        return cls(
            d["method"],
            tuple(d.get("boundaries", ())),
            None if centers is None else tuple(centers),
            tuple(d["labels"]),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def apply_scheme(scheme: DiscretizationScheme, value: float) -> int:
    return int(scheme.apply(value))


def binarize_sign(values: Sequence[float]) -> tuple[np.ndarray, DiscretizationScheme]:
    scheme = DiscretizationScheme("sign", (), None, (0, 1))
    return scheme.apply(values), scheme


def _bin_sizes(n: int, k: int) -> list[int]:
    """Sizes from the highest-value bin down; the remainder goes to the top bins."""
    base, rem = divmod(n, k)
    return [base + (1 if j < rem else 0) for j in range(k)]


def equal_frequency(values: Sequence[float], k: int = 3) -> tuple[np.ndarray, DiscretizationScheme]:
    """Rank-based binning into k near-equal bins, highest values labeled highest.

    Ties across a cut are split by position in a stable descending sort
    (larger value first, then earlier original index).
    """
    v = np.asarray(values, dtype=float)
    n = len(v)
    if k < 1 or n < k:
        raise DiscretizationError(f"need at least k={k} values, got {n}")
    if np.all(v == v[0]):
        raise DiscretizationError("degenerate distribution")
    order = np.lexsort((np.arange(n), -v))
    label_set = _labels_for(k)
    labels = np.empty(n, dtype=int)
    bins = []
    start = 0
    for j, size in enumerate(_bin_sizes(n, k)):
        members = order[start : start + size]
        labels[members] = label_set[k - 1 - j]
        bins.append(v[members])
        start += size

    # cut points between adjacent bins, ascending
    bounds = []
    for upper, lower in zip(bins, bins[1:]):
        bounds.append((upper.min() + lower.max()) / 2.0)
    bounds = bounds[::-1]
    for j in range(1, len(bounds)):
        if bounds[j] <= bounds[j - 1]:
            bounds[j] = float(np.nextafter(bounds[j - 1], np.inf))
    return labels, DiscretizationScheme("equal_frequency", tuple(float(b) for b in bounds), None, label_set)


def within_cluster_ss(values: np.ndarray, centers: np.ndarray, assign: np.ndarray) -> float:
    return float(np.sum((values - centers[assign]) ** 2))


def _midpoints(centers: np.ndarray) -> np.ndarray:
    return (centers[:-1] + centers[1:]) / 2.0


def lloyd_1d(
    values: np.ndarray, init: Sequence[float], max_iter: int = 300, tol: float = 1e-9
) -> tuple[np.ndarray, np.ndarray, list[float]]:
    """One run of Lloyd's algorithm from the given centers.

    Returns sorted final centers, the cluster index of each value and the
    within-cluster sum of squares after every update plus the final
    reassignment. Because the centers stay sorted, nearest-center assignment
    is thresholding at the midpoints, and a point equidistant from two
    centers joins the higher one (the same rule ``apply`` uses).
    """
    v = np.asarray(values, dtype=float)
    centers = np.sort(np.asarray(init, dtype=float))
    k = len(centers)
    history = []
    assign = np.searchsorted(_midpoints(centers), v, side="right")
    for _ in range(max_iter):
        new = centers.copy()
        for j in range(k):
            members = v[assign == j]
            if members.size:
                new[j] = members.mean()
        new.sort()
        history.append(within_cluster_ss(v, new, assign))
        moved = np.max(np.abs(new - centers))
        centers = new
        assign = np.searchsorted(_midpoints(centers), v, side="right")
        if moved < tol:
            break
    history.append(within_cluster_ss(v, centers, assign))
    return centers, assign, history


def initial_centers(values: Sequence[float], k: int = 3, n_init: int = 20) -> list[np.ndarray]:
    """Candidate seeds: the (2j+1)/(2k) quantiles first, then k-means++ draws.

    The k-means++ draws use a fixed generator, so the candidate list depends
    only on the data.
    """
    v = np.asarray(values, dtype=float)
    distinct = np.unique(v)
    qs = (2 * np.arange(k) + 1) / (2 * k)
    first = np.quantile(v, qs)
    if len(np.unique(first)) < k:
        first = np.quantile(distinct, qs)
    seeds = [first]
    rng = np.random.default_rng(0)
    while len(seeds) < n_init:
        chosen = [distinct[rng.integers(len(distinct))]]
        for _ in range(k - 1):
            d = np.min(np.abs(distinct[:, None] - np.asarray(chosen)[None, :]), axis=1)
            w = (d / d.max()) ** 2
            if not w.sum() > 0:
                # squared gaps underflowed; any value not yet chosen will do
                w = (d > 0).astype(float)
            chosen.append(distinct[rng.choice(len(distinct), p=w / w.sum())])
        seeds.append(np.asarray(chosen))
    return seeds


def kmeans_1d(
    values: Sequence[float],
    k: int = 3,
    max_iter: int = 300,
    tol: float = 1e-9,
    n_init: int = 20,
) -> tuple[np.ndarray, DiscretizationScheme]:
    """1-D k-means: Lloyd runs from ``initial_centers``, keeping the lowest within-cluster SS.

    The quantile-seeded run wins ties. Clusters map to labels by ascending center.
    """
    v = np.asarray(values, dtype=float)
    if k < 1 or len(v) < k:
        raise DiscretizationError(f"need at least k={k} values, got {len(v)}")
    if len(np.unique(v)) < k:
        raise DiscretizationError(f"fewer than k={k} distinct values")

    best = None
    for init in initial_centers(v, k, max(1, n_init)):
        run = lloyd_1d(v, init, max_iter, tol)
        if best is None or run[2][-1] < best[2][-1]:
            best = run
    centers, assign, history = best

    label_set = _labels_for(k)
    scheme = DiscretizationScheme(
        "kmeans",
        tuple(float(b) for b in _midpoints(centers)),
        tuple(float(c) for c in centers),
        label_set,
        tuple(history),
    )
    return np.asarray(label_set)[assign], scheme


def fit_scheme(method: str, values: Sequence[float], k: int = 3) -> tuple[np.ndarray, DiscretizationScheme]:
    if method == "sign":
        return binarize_sign(values)
    if method == "equal_frequency":
        return equal_frequency(values, k)
    if method == "kmeans":
        return kmeans_1d(values, k)
    raise DiscretizationError(f"unknown method {method!r}")
