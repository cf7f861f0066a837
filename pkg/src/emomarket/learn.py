"""Lagged-emotion features and the LR / SVM classifiers."""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field, replace
from datetime import date
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from .corpus import EMOTIONS, EmotionLabel
from .discretize import DiscretizationScheme
from .market import TARGETS
from .timeseries import MAX_LAG, EmotionSeries, TradingCalendar


class LearnError(ValueError):
    pass


class ConvergenceError(LearnError):
    pass


# --- feature specs ----------------------------------------------------------


@dataclass(frozen=True)
class FeatureSpec:
    pairs: tuple[tuple[EmotionLabel, int], ...]

    def __post_init__(self):
        pairs = tuple((EmotionLabel.parse(e), int(lag)) for e, lag in self.pairs)
        object.__setattr__(self, "pairs", pairs)
        if not pairs:
            raise LearnError("feature spec is empty")
        if len(set(pairs)) != len(pairs):
            raise LearnError("duplicate (emotion, lag) pair in feature spec")
        for e, lag in pairs:
            if not 1 <= lag <= MAX_LAG:
                raise LearnError(f"lag {lag} for {e.value} outside [1, {MAX_LAG}]")

    def __len__(self) -> int:
        return len(self.pairs)

    @property
    def max_lag(self) -> int:
        return max(lag for _, lag in self.pairs)

    def format(self) -> str:
        return ",".join(f"{e.value}:{lag}" for e, lag in self.pairs)

    @classmethod
    def parse(cls, text: str) -> FeatureSpec:
        pairs = []
        for item in text.split(","):
            e, _, lag = item.strip().partition(":")
            if not lag:
                raise LearnError(f"bad feature {item!r}, expected emotion:lag")
            pairs.append((e, int(lag)))
        return cls(tuple(pairs))


def full_spec(max_lag: int = MAX_LAG) -> FeatureSpec:
    """Every emotion at every lag 1..max_lag, emotion-major."""
    return FeatureSpec(tuple((e, lag) for e in EMOTIONS for lag in range(1, max_lag + 1)))


def _spec(*groups: tuple[str, Sequence[int]]) -> FeatureSpec:
    return FeatureSpec(tuple((e, lag) for e, lags in groups for lag in lags))


SVMES_SPECS: dict[str, FeatureSpec] = {
    "close": _spec(("disgust", (1, 2))),
    "open": _spec(("fear", range(1, 6)), ("joy", range(1, 6)), ("disgust", (3, 4))),
    "high": _spec(("joy", range(1, 5)), ("sadness", range(1, 4)), ("disgust", (5,))),
    "low": _spec(("sadness", (1,)), ("joy", range(1, 4)), ("disgust", (5,))),
    "volume": _spec(("sadness", range(1, 6)), ("fear", range(1, 6))),
}


def svmes_feature_spec(target: str) -> FeatureSpec:
    """The hand-selected emotion features of the SVM-ES model for one target."""
    try:
        return SVMES_SPECS[target]
    except KeyError:
        raise LearnError(f"unknown target {target!r}") from None


def build_features(
    X: EmotionSeries,
    spec: FeatureSpec,
    target_dates: Sequence[date],
    calendar: TradingCalendar | None = None,
    values: np.ndarray | None = None,
) -> np.ndarray:
    """Feature matrix with one row per target date and one column per spec pair.

    Column j holds the proportion of ``spec.pairs[j]`` emotion ``lag`` trading
    days before the target date. Trading days are counted on ``calendar`` if
    given, otherwise on the series' own dates. ``values`` may replace
    ``X.values`` (e.g. a normalized copy with the same shape).
    """
    axis = calendar.trading_days if calendar is not None else X.dates
    axis_pos = {d: i for i, d in enumerate(axis)}
    row_of = X.index_of()
    vals = X.values if values is None else values
    out = np.empty((len(target_dates), len(spec)))
    for r, d in enumerate(target_dates):
        p = axis_pos.get(d)
        if p is None:
            raise LearnError(f"target date {d.isoformat()} is not a trading day")
        for c, (emotion, lag) in enumerate(spec.pairs):
            if p - lag < 0:
                raise LearnError(f"missing lagged date: {lag} trading days before {d.isoformat()}")
            src = axis[p - lag]
            i = row_of.get(src)
            if i is None:
                raise LearnError(f"missing lagged date {src.isoformat()}")
            out[r, c] = vals[i, emotion.position]
    return out


@dataclass(frozen=True, eq=False)
class Dataset:
    dates: tuple[date, ...]
    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.features, dtype=float)
        lab = np.asarray(self.labels, dtype=int)
        object.__setattr__(self, "features", f)
        object.__setattr__(self, "labels", lab)
        object.__setattr__(self, "dates", tuple(self.dates))
        if f.ndim != 2 or f.shape[0] != len(lab) or len(self.dates) != len(lab):
            raise LearnError("dataset rows, labels and dates disagree")
        if not np.isfinite(f).all():
            raise LearnError("non-finite feature value")

    def __len__(self) -> int:
        return len(self.labels)

    def take(self, rows: Sequence[int]) -> Dataset:
        rows = np.asarray(rows, dtype=int)
        return Dataset(tuple(self.dates[i] for i in rows), self.features[rows], self.labels[rows])


@dataclass(frozen=True, eq=False)
class FeatureScaler:
    """Per-column min-max scaling; constant columns pass through shifted to 0."""

    mins: np.ndarray
    maxs: np.ndarray

    @classmethod
    def fit(cls, features: np.ndarray) -> FeatureScaler:
        return cls(features.min(axis=0), features.max(axis=0))

    @classmethod
    def identity(cls, n_features: int) -> FeatureScaler:
        return cls(np.zeros(n_features), np.ones(n_features))

    def transform(self, features: np.ndarray) -> np.ndarray:
        span = self.maxs - self.mins
        span = np.where(span > 0, span, 1.0)
        return (np.asarray(features, dtype=float) - self.mins) / span


# --- hyperparameters --------------------------------------------------------


@dataclass(frozen=True)
class Hyperparams:
    C: float = 1.0
    gamma: float | None = None  # None -> 1 / n_features
    kernel: str = "rbf"
    lr_learning_rate: float = 0.5
    lr_epochs: int = 2000
    lr_l2: float = 1e-4
    smo_tolerance: float = 1e-3
    smo_max_iter: int = 200_000

    def __post_init__(self):
        if not self.C > 0:
            raise LearnError("C must be > 0")
        if self.gamma is not None and not self.gamma > 0:
            raise LearnError("gamma must be > 0")
        if self.kernel not in ("rbf", "linear"):
            raise LearnError(f"unknown kernel {self.kernel!r}")
        if not (self.lr_learning_rate > 0 and self.lr_epochs >= 1 and self.lr_l2 >= 0):
            raise LearnError("invalid logistic regression settings")
        if not self.smo_tolerance > 0:
            raise LearnError("smo_tolerance must be > 0")

    def with_overrides(self, **kw) -> Hyperparams:
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


def _check_classes(labels: np.ndarray) -> np.ndarray:
    classes = np.unique(labels)
    if len(classes) < 2:
        raise LearnError("training data has a single class")
    return classes


# --- logistic regression ----------------------------------------------------


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def lr_loss_and_grad(
    weights: np.ndarray, bias: np.ndarray, X: np.ndarray, onehot: np.ndarray, l2: float
) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean cross-entropy plus (l2/2)*||W||^2, and its gradients w.r.t. W and b."""
    n = X.shape[0]
    logits = X @ weights.T + bias
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_p = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    loss = -np.sum(onehot * log_p) / n + 0.5 * l2 * np.sum(weights * weights)
    diff = (np.exp(log_p) - onehot) / n
    return float(loss), diff.T @ X + l2 * weights, diff.sum(axis=0)


@dataclass(frozen=True, eq=False)
class LRModel:
    weights: np.ndarray  # (n_classes, n_features)
    bias: np.ndarray
    classes: tuple[int, ...]

    @property
    def n_features(self) -> int:
        return self.weights.shape[1]

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return softmax(np.atleast_2d(X) @ self.weights.T + self.bias)

    def predict_many(self, X: np.ndarray) -> np.ndarray:
        X = _check_dim(X, self.n_features)
        scores = X @ self.weights.T + self.bias
        return np.asarray(self.classes)[np.argmax(scores, axis=1)]

    def to_dict(self) -> dict:
        return {"weights": self.weights.tolist(), "bias": self.bias.tolist(), "classes": list(self.classes)}

    @classmethod
    def from_dict(cls, d: dict) -> LRModel:
        return cls(np.asarray(d["weights"], dtype=float), np.asarray(d["bias"], dtype=float), tuple(d["classes"]))


def train_logistic(ds: Dataset, hp: Hyperparams = Hyperparams()) -> LRModel:
    """Multinomial softmax regression fitted by full-batch gradient descent from zero."""
    classes = _check_classes(ds.labels)
    X = ds.features
    onehot = (ds.labels[:, None] == classes[None, :]).astype(float)
    W = np.zeros((len(classes), X.shape[1]))
    b = np.zeros(len(classes))
    for _ in range(hp.lr_epochs):
        _, gW, gb = lr_loss_and_grad(W, b, X, onehot, hp.lr_l2)
        W -= hp.lr_learning_rate * gW
        b -= hp.lr_learning_rate * gb
    if not (np.isfinite(W).all() and np.isfinite(b).all()):
        raise LearnError("logistic regression diverged; lower lr_learning_rate")
    return LRModel(W, b, tuple(int(c) for c in classes))


# --- SVM --------------------------------------------------------------------


def kernel_matrix(A: np.ndarray, B: np.ndarray, kind: str, gamma: float) -> np.ndarray:
    if kind == "linear":
        return A @ B.T
    sq = (A * A).sum(axis=1)[:, None] + (B * B).sum(axis=1)[None, :] - 2.0 * A @ B.T
    return np.exp(-gamma * np.maximum(sq, 0.0))


@dataclass
class SMOResult:
    alpha: np.ndarray
    bias: float
    iterations: int
    gap: float
    objective: list[float] = field(repr=False)


def smo_solve(
    K: np.ndarray, y: np.ndarray, C: float, tol: float = 1e-3, max_iter: int = 200_000
) -> SMOResult:
    """Soft-margin SVM dual by SMO with maximal-violating-pair, second-order selection.

    Maximizes sum(a) - 1/2 a'Qa with Q = yy'*K, 0 <= a <= C, y'a = 0, until the
    largest KKT violation gap falls below ``tol``. ``objective`` records the
    dual value after every update.
    """
    n = len(y)
    y = y.astype(float)
    Q = (y[:, None] * y[None, :]) * K
    QD = np.diag(Q).copy()
    alpha = np.zeros(n)
    G = -np.ones(n)  # gradient of the minimized form 1/2 a'Qa - sum(a)
    tau = 1e-12
    objective = [0.0]
    gap = np.inf
    it = 0
    while True:
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
        minus_yg = -y * G
        if not up.any() or not low.any():
            gap = 0.0
            break
        i = int(np.argmax(np.where(up, minus_yg, -np.inf)))
        g_max = minus_yg[i]
        g_min = np.min(np.where(low, minus_yg, np.inf))
        gap = g_max - g_min
        if gap < tol:
            break
        if it >= max_iter:
            raise ConvergenceError(
                f"SMO did not converge in {max_iter} iterations (KKT gap {gap:.3g}, tol {tol:g}, n={n})"
            )
        b_t = g_max - minus_yg
        cand = low & (b_t > 0)
        a_t = QD[i] + QD - 2.0 * y[i] * y * Q[i]
        a_t = np.where(a_t > 0, a_t, tau)
        j = int(np.argmin(np.where(cand, -(b_t * b_t) / a_t, np.inf)))

        ai_old, aj_old = alpha[i], alpha[j]
        if y[i] != y[j]:
            quad = QD[i] + QD[j] + 2.0 * Q[i, j]
            quad = quad if quad > 0 else tau
            delta = (-G[i] - G[j]) / quad
            diff = ai_old - aj_old
            ai, aj = ai_old + delta, aj_old + delta
            if diff > 0:
                if aj < 0:
                    aj, ai = 0.0, diff
            elif ai < 0:
                ai, aj = 0.0, -diff
            if diff > 0:
                if ai > C:
                    ai, aj = C, C - diff
            elif aj > C:
                aj, ai = C, C + diff
        else:
            quad = QD[i] + QD[j] - 2.0 * Q[i, j]
            quad = quad if quad > 0 else tau
            delta = (G[i] - G[j]) / quad
            total = ai_old + aj_old
            ai, aj = ai_old - delta, aj_old + delta
            if total > C:
                if ai > C:
                    ai, aj = C, total - C
                if aj > C:
                    aj, ai = C, total - C
            else:
                if aj < 0:
                    aj, ai = 0.0, total
                if ai < 0:
                    ai, aj = 0.0, total
        alpha[i], alpha[j] = ai, aj
        G += Q[:, i] * (ai - ai_old) + Q[:, j] * (aj - aj_old)
        objective.append(float(-0.5 * alpha @ (G - 1.0)))
        it += 1

    # bias from free vectors, else the midpoint of the feasible interval
    yg = y * G
    free = (alpha > 0) & (alpha < C)
    if free.any():
        rho = float(yg[free].mean())
    else:
        at_ub = alpha >= C
        ub_set = (at_ub & (y < 0)) | (~at_ub & (y > 0))
        lb_set = (at_ub & (y > 0)) | (~at_ub & (y < 0))
        ub = yg[ub_set].min() if ub_set.any() else np.inf
        lb = yg[lb_set].max() if lb_set.any() else -np.inf
        rho = float((ub + lb) / 2.0) if np.isfinite(ub + lb) else float(ub if np.isfinite(ub) else lb)
    return SMOResult(alpha, -rho, it, float(gap), objective)


@dataclass(frozen=True, eq=False)
class BinarySVM:
    """One binary machine: f(x) = sum(coef * K(sv, x)) + bias, positive side = ``positive``."""

    support_vectors: np.ndarray
    dual_coef: np.ndarray  # alpha_i * y_i for the support vectors
    bias: float
    negative: int
    positive: int

    def decision(self, K_sv_x: np.ndarray) -> np.ndarray:
        return self.dual_coef @ K_sv_x + self.bias


@dataclass(frozen=True, eq=False)
class SVMModel:
    machines: tuple[BinarySVM, ...]
    classes: tuple[int, ...]
    kernel: str
    gamma: float
    C: float
    n_features: int

    def decision_values(self, X: np.ndarray) -> np.ndarray:
        """Decision value of every pairwise machine, shape (n_rows, n_machines)."""
        X = np.atleast_2d(X)
        out = np.empty((X.shape[0], len(self.machines)))
        for m, mach in enumerate(self.machines):
            out[:, m] = mach.decision(kernel_matrix(mach.support_vectors, X, self.kernel, self.gamma))
        return out

    def predict_many(self, X: np.ndarray) -> np.ndarray:
        """One-vs-one vote; ties go to the larger summed decision value, then the lower label."""
        X = _check_dim(X, self.n_features)
        dv = self.decision_values(X)
        pos = {c: k for k, c in enumerate(self.classes)}
        votes = np.zeros((X.shape[0], len(self.classes)))
        score = np.zeros_like(votes)
        for m, mach in enumerate(self.machines):
            f = dv[:, m]
            p, q = pos[mach.positive], pos[mach.negative]
            votes[:, p] += f > 0
            votes[:, q] += f <= 0
            score[:, p] += f
            score[:, q] -= f
        out = np.empty(X.shape[0], dtype=int)
        for r in range(X.shape[0]):
            best = max(range(len(self.classes)), key=lambda c: (votes[r, c], score[r, c], -c))
            out[r] = self.classes[best]
        return out

    def to_dict(self) -> dict:
        return {
            "classes": list(self.classes),
            "kernel": self.kernel,
            "gamma": self.gamma,
            "C": self.C,
            "n_features": self.n_features,
            "machines": [
                {
                    "negative": m.negative,
                    "positive": m.positive,
                    "bias": m.bias,
                    "dual_coef": m.dual_coef.tolist(),
                    "support_vectors": m.support_vectors.tolist(),
                }
                for m in self.machines
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> SVMModel:
        n = int(d["n_features"])
        machines = tuple(
            BinarySVM(
                np.asarray(m["support_vectors"], dtype=float).reshape(-1, n),
                np.asarray(m["dual_coef"], dtype=float),
                float(m["bias"]),
                int(m["negative"]),
                int(m["positive"]),
            )
            for m in d["machines"]
        )
        return cls(machines, tuple(d["classes"]), d["kernel"], float(d["gamma"]), float(d["C"]), n)


def train_binary_svm(
    X: np.ndarray, y: np.ndarray, hp: Hyperparams, gamma: float
) -> tuple[BinarySVM, SMOResult]:
    """Fit one machine on labels y in {-1, +1}; returns the machine and the raw solver output."""
    K = kernel_matrix(X, X, hp.kernel, gamma)
    res = smo_solve(K, y, hp.C, hp.smo_tolerance, hp.smo_max_iter)
    sv = res.alpha > 0
    machine = BinarySVM(X[sv].copy(), (res.alpha * y)[sv], res.bias, -1, 1)
    return machine, res


def train_svm(ds: Dataset, hp: Hyperparams = Hyperparams()) -> SVMModel:
    """RBF (or linear) soft-margin SVM, one-vs-one over the classes present."""
    classes = _check_classes(ds.labels)
    X = ds.features
    gamma = hp.gamma if hp.gamma is not None else 1.0 / X.shape[1]
    machines = []
    for a, b in itertools.combinations(classes, 2):
        rows = (ds.labels == a) | (ds.labels == b)
        y = np.where(ds.labels[rows] == b, 1.0, -1.0)
        mach, _ = train_binary_svm(X[rows], y, hp, gamma)
        machines.append(replace(mach, negative=int(a), positive=int(b)))
    return SVMModel(tuple(machines), tuple(int(c) for c in classes), hp.kernel, gamma, hp.C, X.shape[1])


def kkt_violation(
    X: np.ndarray, y: np.ndarray, alpha: np.ndarray, bias: float, C: float, kind: str, gamma: float
) -> float:
    """Largest violation of the soft-margin KKT conditions, from scratch kernel sums."""
    K = kernel_matrix(X, X, kind, gamma)
    margin = y * ((alpha * y) @ K + bias)
    zero = alpha <= 0
    at_c = alpha >= C
    free = ~zero & ~at_c
    v = np.zeros_like(margin)
    v[zero] = np.maximum(0.0, 1.0 - margin[zero])
    v[at_c] = np.maximum(0.0, margin[at_c] - 1.0)
    v[free] = np.abs(margin[free] - 1.0)
    return float(v.max()) if len(v) else 0.0


# --- prediction -------------------------------------------------------------

Estimator = Union[LRModel, SVMModel]


def _check_dim(X: np.ndarray, n_features: int) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != n_features:
        raise LearnError(f"expected {n_features} features, got {X.shape[1]}")
    return X


def predict(model: Estimator, features: Sequence[float]) -> int:
    f = np.asarray(features, dtype=float)
    if f.ndim != 1:
        raise LearnError("predict takes a single feature vector")
    return int(model.predict_many(f[None, :])[0])


def train_model(kind: str, ds: Dataset, hp: Hyperparams = Hyperparams()) -> Estimator:
    if kind == "lr":
        return train_logistic(ds, hp)
    if kind == "svm":
        return train_svm(ds, hp)
    raise LearnError(f"unknown model kind {kind!r}")


@dataclass(frozen=True, eq=False)
class TrainedModel:
    """A fitted estimator with everything needed to score fresh emotion data."""

    kind: str
    target: str
    spec: FeatureSpec
    scaler: FeatureScaler
    estimator: Estimator
    scheme: DiscretizationScheme | None = None
    normalization: str = "train_minmax"

    def predict_rows(self, raw_features: np.ndarray) -> np.ndarray:
        return self.estimator.predict_many(self.scaler.transform(raw_features))

    def to_dict(self) -> dict:
        return {
            "model_type": self.kind,
            "target": self.target,
            "feature_spec": [[e.value, lag] for e, lag in self.spec.pairs],
            "normalization": {
                "mode": self.normalization,
                "min": self.scaler.mins.tolist(),
                "max": self.scaler.maxs.tolist(),
            },
            "discretization": None if self.scheme is None else self.scheme.to_dict(),
            "params": self.estimator.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> TrainedModel:
        kind = d["model_type"]
        est_cls = {"lr": LRModel, "svm": SVMModel, "svm_es": SVMModel}.get(kind)
        if est_cls is None:
            raise LearnError(f"unknown model type {kind!r}")
        norm = d["normalization"]
        return cls(
            kind,
            d["target"],
            FeatureSpec(tuple((e, lag) for e, lag in d["feature_spec"])),
            FeatureScaler(np.asarray(norm["min"], dtype=float), np.asarray(norm["max"], dtype=float)),
            est_cls.from_dict(d["params"]),
            None if d.get("discretization") is None else DiscretizationScheme.from_dict(d["discretization"]),
            norm.get("mode", "train_minmax"),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> TrainedModel:
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def emotion_scaler(X: EmotionSeries, spec: FeatureSpec) -> FeatureScaler:
    """Column scaler from whole-series per-emotion min/max (the non-leak-free variant)."""
    lo = X.values.min(axis=0)
    hi = X.values.max(axis=0)
    cols = [e.position for e, _ in spec.pairs]
    return FeatureScaler(lo[cols], hi[cols])


__all__ = [
    "TARGETS",
    "FeatureSpec",
    "Dataset",
    "FeatureScaler",
    "Hyperparams",
    "LRModel",
    "SVMModel",
    "BinarySVM",
    "TrainedModel",
    "build_features",
    "full_spec",
    "svmes_feature_spec",
    "train_logistic",
    "train_svm",
    "train_model",
    "predict",
    "smo_solve",
    "kkt_violation",
    "lr_loss_and_grad",
]
