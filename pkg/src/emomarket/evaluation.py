"""Cross-validation, chronological holdout and the full experiment matrix."""

from __future__ import annotations

import csv
import io
import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .discretize import DiscretizationScheme, fit_scheme
from .learn import (
    Dataset,
    FeatureScaler,
    FeatureSpec,
    Hyperparams,
    TrainedModel,
    build_features,
    emotion_scaler,
    full_spec,
    svmes_feature_spec,
    train_model,
)
from .market import TARGETS, MarketSeries, align, split_train_test
from .timeseries import MAX_LAG, EmotionSeries

MODEL_KINDS = ("lr", "svm", "svm_es")
THREE_CLASS_METHODS = ("equal_frequency", "kmeans")
BINARY_TARGETS = ("close", "open")


class EvaluationError(ValueError):
    pass


def accuracy(predicted: Sequence[int], actual: Sequence[int]) -> float:
    p = np.asarray(predicted)
    a = np.asarray(actual)
    if p.shape != a.shape:
        raise EvaluationError(f"length mismatch: {len(p)} predictions vs {len(a)} labels")
    if len(a) == 0:
        raise EvaluationError("accuracy of an empty label vector")
    return float(np.mean(p == a))


def confusion_matrix(predicted: Sequence[int], actual: Sequence[int], labels: Sequence[int]) -> np.ndarray:
    """Rows are actual labels, columns predicted, both in ``labels`` order."""
    pos = {lab: i for i, lab in enumerate(labels)}
    m = np.zeros((len(labels), len(labels)), dtype=int)
    for p, a in zip(predicted, actual):
        m[pos[int(a)], pos[int(p)]] += 1
    return m


# --- cross-validation -------------------------------------------------------


class Predictor:
    """Anything with ``predict_many(features) -> labels``."""

    def predict_many(self, X: np.ndarray) -> np.ndarray:  # pragma: no cover - protocol
        raise NotImplementedError


Trainer = Callable[[Dataset], Predictor]


class _Constant:
    def __init__(self, label: int):
        self.label = label

    def predict_many(self, X):
        return np.full(len(X), self.label, dtype=int)


class _Scaled:
    def __init__(self, scaler: FeatureScaler, est):
        self.scaler = scaler
        self.est = est

    def predict_many(self, X):
        return self.est.predict_many(self.scaler.transform(X))


def make_trainer(kind: str, hp: Hyperparams = Hyperparams(), scale: bool = True) -> Trainer:
    """Trainer that fits min-max scaling on its own training rows, then the model."""

    def trainer(ds: Dataset) -> Predictor:
        scaler = FeatureScaler.fit(ds.features) if scale else FeatureScaler.identity(ds.features.shape[1])
        fitted = Dataset(ds.dates, scaler.transform(ds.features), ds.labels)
        return _Scaled(scaler, train_model(kind, fitted, hp))

    return trainer


def kfold_indices(n: int, k: int = 5, seed: int | np.random.SeedSequence = 0, shuffle: bool = True) -> list[np.ndarray]:
    """k folds with sizes differing by at most one, larger folds first.

    ``shuffle=False`` gives contiguous blocks in row order (time-series mode).
    """
    if k < 2:
        raise EvaluationError("k must be >= 2")
    if n < k:
        raise EvaluationError(f"{n} rows cannot fill {k} folds")
    order = np.random.default_rng(seed).permutation(n) if shuffle else np.arange(n)
    return [np.sort(f) for f in np.array_split(order, k)]


@dataclass
class CVResult:
    mean_accuracy: float
    fold_accuracies: list[float]
    fold_sizes: list[int]
    degenerate_folds: list[int] = field(default_factory=list)


def kfold_cv(
    ds: Dataset,
    trainer: Trainer,
    k: int = 5,
    seed: int | np.random.SeedSequence = 0,
    shuffle: bool = True,
) -> CVResult:
    """k-fold cross-validated accuracy.

    A fold whose training complement holds a single class cannot fit a model;
    it is scored with that class as a constant prediction and listed in
    ``degenerate_folds`` so the mean is never silently inflated.
    """
    if len(np.unique(ds.labels)) < 2:
        raise EvaluationError("cross-validation needs at least 2 classes")
    folds = kfold_indices(len(ds), k, seed, shuffle)
    accs, degenerate = [], []
    all_rows = np.arange(len(ds))
    for fi, test_rows in enumerate(folds):
        train_rows = np.setdiff1d(all_rows, test_rows)
        train = ds.take(train_rows)
        test = ds.take(test_rows)
        classes = np.unique(train.labels)
        if len(classes) < 2:
            model: Predictor = _Constant(int(classes[0]))
            degenerate.append(fi)
        else:
            model = trainer(train)
        accs.append(accuracy(model.predict_many(test.features), test.labels))
    return CVResult(float(np.mean(accs)), accs, [len(f) for f in folds], degenerate)


def grid_search(
    ds: Dataset,
    kind: str,
    base: Hyperparams,
    grid: Mapping[str, Sequence],
    k: int = 5,
    seed: int | np.random.SeedSequence = 0,
    scale: bool = True,
) -> tuple[Hyperparams, float]:
    """Best hyperparameters by CV mean accuracy; earlier grid points win ties."""
    best, best_acc = base, -1.0
    keys = sorted(grid)
    for combo in itertools.product(*(grid[key] for key in keys)):
        hp = base.with_overrides(**dict(zip(keys, combo)))
        acc = kfold_cv(ds, make_trainer(kind, hp, scale), k, seed).mean_accuracy
        if acc > best_acc:
            best, best_acc = hp, acc
    return best, best_acc


# --- datasets from series ---------------------------------------------------


def feature_spec_for(model_kind: str, target: str, custom: FeatureSpec | None = None) -> FeatureSpec:
    if model_kind == "svm_es":
        return svmes_feature_spec(target)
    return custom if custom is not None else full_spec()


def estimator_kind(model_kind: str) -> str:
    return "lr" if model_kind == "lr" else "svm"


def usable_dates(X: EmotionSeries, dates: Sequence, max_lag: int = MAX_LAG) -> list:
    """Dates that have ``max_lag`` earlier rows in X, so every lag feature exists."""
    pos = X.index_of()
    return [d for d in dates if d in pos and pos[d] >= max_lag]


@dataclass
class EvalEntry:
    target: str
    model_kind: str
    method: str
    n_classes: int
    labels: tuple[int, ...]
    holdout_accuracy: float
    confusion: np.ndarray
    n_train: int
    n_test: int
    cv: CVResult | None = None
    scheme: DiscretizationScheme | None = None
    model: TrainedModel | None = field(default=None, repr=False)

    @property
    def key(self) -> tuple:
        return (self.target, self.model_kind, self.method)


def training_dataset(
    X: EmotionSeries, y: MarketSeries, target: str, spec: FeatureSpec, method: str
) -> tuple[Dataset, DiscretizationScheme]:
    """Unscaled lag features and discretized labels for every usable row of ``y``.

    ``X`` supplies lagged emotions and may extend before ``y``; ``y`` rows
    without a full set of lags are dropped.
    """
    dates = usable_dates(X, y.dates)
    if not dates:
        raise EvaluationError("no training rows with complete lagged features")
    labels, scheme = fit_scheme(method, y.select_dates(dates).target(target))
    return Dataset(tuple(dates), build_features(X, spec, dates), labels), scheme


def fit_model(
    X: EmotionSeries,
    y: MarketSeries,
    target: str,
    spec: FeatureSpec,
    model_kind: str,
    method: str,
    hp: Hyperparams = Hyperparams(),
    global_normalization: bool = False,
) -> tuple[TrainedModel, Dataset]:
    """Fit discretization, scaling and the classifier on one training period."""
    raw, scheme = training_dataset(X, y, target, spec, method)
    scaler = emotion_scaler(X, spec) if global_normalization else FeatureScaler.fit(raw.features)
    ds = Dataset(raw.dates, scaler.transform(raw.features), raw.labels)
    est = train_model(estimator_kind(model_kind), ds, hp)
    norm = "global_minmax" if global_normalization else "train_minmax"
    return TrainedModel(model_kind, target, spec, scaler, est, scheme, norm), raw


def holdout_eval(
    train: tuple[EmotionSeries, MarketSeries],
    test: tuple[EmotionSeries, MarketSeries],
    target: str,
    spec: FeatureSpec,
    model_kind: str,
    discretizer: str,
    hp: Hyperparams = Hyperparams(),
    global_normalization: bool = False,
    lag_source: EmotionSeries | None = None,
) -> EvalEntry:
    """Train on the earlier period, score the later one.

    The scheme, scaler and model see training rows only; test labels come from
    applying the training scheme to test targets. Test features may look back
    into training-period emotions (they are in the past at prediction time).
    ``lag_source`` overrides the emotion series used for lag lookups; it
    defaults to train and test emotions concatenated.
    """
    x_tr, y_tr = train
    x_te, y_te = test
    if x_tr.dates and x_te.dates and not max(x_tr.dates) < min(x_te.dates):
        raise EvaluationError("holdout requires every train date before every test date")
    X = lag_source
    if X is None:
        X = EmotionSeries(x_tr.dates + x_te.dates, np.vstack([x_tr.values, x_te.values]))
    if global_normalization:
        X_fit = X
    else:
        # the training fit only ever sees emotions up to the end of the train period
        X_fit = X.subset([d for d in X.dates if not x_te.dates or d < x_te.dates[0]])
    model, train_ds = fit_model(X_fit, y_tr, target, spec, model_kind, discretizer, hp, global_normalization)

    test_dates = usable_dates(X, y_te.dates)
    if not test_dates:
        raise EvaluationError("no test rows with complete lagged features")
    actual = model.scheme.apply(y_te.select_dates(test_dates).target(target))
    raw = build_features(X, spec, test_dates)
    pred = model.predict_rows(raw)
    labels = model.scheme.labels
    return EvalEntry(
        target, model_kind, discretizer, len(labels), labels,
        accuracy(pred, actual), confusion_matrix(pred, actual, labels),
        len(train_ds), len(test_dates), None, model.scheme, model,
    )


# --- experiment matrix --------------------------------------------------------


@dataclass
class ExperimentConfig:
    series_path: str | Path | None = None
    ohlcv_path: str | Path | None = None
    seed: int = 0
    train_fraction: float = 0.8
    k_folds: int = 5
    cv_mode: str = "shuffled"  # or "blocked"
    targets: tuple[str, ...] = TARGETS
    models: tuple[str, ...] = MODEL_KINDS
    methods: tuple[str, ...] = ("equal_frequency", "kmeans", "sign")
    hp: Hyperparams = field(default_factory=Hyperparams)
    custom_spec: FeatureSpec | None = None
    paper_literal_returns: bool = False
    global_normalization: bool = False
    grid: Mapping[str, Sequence] | None = None

    def __post_init__(self):
        if not 0 < self.train_fraction < 1:
            raise EvaluationError("train_fraction must be in (0, 1)")
        if self.cv_mode not in ("shuffled", "blocked"):
            raise EvaluationError(f"unknown cv_mode {self.cv_mode!r}")
        for m in self.models:
            if m not in MODEL_KINDS:
                raise EvaluationError(f"unknown model {m!r}")
        for m in self.methods:
            if m not in (*THREE_CLASS_METHODS, "sign"):
                raise EvaluationError(f"unknown discretization {m!r}")


def experiment_cells(config: ExperimentConfig) -> list[tuple[str, str, str]]:
    """(target, method, model) cells in report order: 3-class block, then 2-class block."""
    cells = []
    for method in THREE_CLASS_METHODS:
        if method in config.methods:
            cells += [(t, method, m) for t in config.targets for m in config.models]
    if "sign" in config.methods:
        cells += [(t, "sign", m) for t in config.targets if t in BINARY_TARGETS for m in config.models]
    return cells


@dataclass
class EvalReport:
    entries: list[EvalEntry]
    n_train_days: int
    n_test_days: int

    def get(self, target: str, model_kind: str, method: str) -> EvalEntry:
        for e in self.entries:
            if e.key == (target, model_kind, method):
                return e
        raise KeyError((target, model_kind, method))


class _Stage:
    def __init__(self, name: str):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and isinstance(exc, ValueError) and not isinstance(exc, EvaluationError):
            raise EvaluationError(f"{self.name}: {exc}") from exc
        return False


def _cell_seed(seed: int, target: str, method: str) -> np.random.SeedSequence:
    # same folds for every model on a (target, method) pair
    methods = (*THREE_CLASS_METHODS, "sign")
    return np.random.SeedSequence([seed, TARGETS.index(target), methods.index(method)])


def evaluate_matrix(X: EmotionSeries, Y: MarketSeries, config: ExperimentConfig) -> EvalReport:
    with _Stage("align"):
        x_al, y_al = align(X, Y)
        train, test = split_train_test(x_al, y_al, config.train_fraction)
    # lag source: every emotion day up to the last aligned date
    lag_source = X.subset([d for d in X.dates if d <= x_al.dates[-1]])
    x_train_lags = lag_source.subset([d for d in lag_source.dates if d <= train[0].dates[-1]])

    entries = []
    for target, method, model_kind in experiment_cells(config):
        stage = f"{target}/{method}/{model_kind}"
        with _Stage(stage):
            spec = feature_spec_for(model_kind, target, config.custom_spec)
            fit_x = lag_source if config.global_normalization else x_train_lags
            raw_ds, _ = training_dataset(fit_x, train[1], target, spec, method)
            scale = not config.global_normalization
            cv_ds = raw_ds
            if config.global_normalization:
                cv_ds = Dataset(raw_ds.dates, emotion_scaler(lag_source, spec).transform(raw_ds.features),
                                raw_ds.labels)
            seed = _cell_seed(config.seed, target, method)
            hp = config.hp
            if config.grid:
                hp, _ = grid_search(cv_ds, estimator_kind(model_kind), hp, config.grid,
                                    config.k_folds, seed, scale)
            cv = kfold_cv(cv_ds, make_trainer(estimator_kind(model_kind), hp, scale),
                          config.k_folds, seed, config.cv_mode == "shuffled")
            entry = holdout_eval(train, test, target, spec, model_kind, method, hp,
                                 config.global_normalization, lag_source)
            entry.cv = cv
            entries.append(entry)
    return EvalReport(entries, len(train[0]), len(test[0]))


def run_experiment(config: ExperimentConfig) -> EvalReport:
    from .market import compute_returns, read_ohlcv
    from .timeseries import read_series

    if config.series_path is None or config.ohlcv_path is None:
        raise EvaluationError("config needs series_path and ohlcv_path")
    with _Stage("load"):
        X = read_series(config.series_path)
        mode = "paper_literal" if config.paper_literal_returns else "standard"
        Y = compute_returns(read_ohlcv(config.ohlcv_path), mode)
    return evaluate_matrix(X, Y, config)


# --- report output ------------------------------------------------------------

REPORT_HEADER = [
    "target", "n_classes", "discretization", "model", "cv_mean_accuracy", "fold_accuracies",
    "degenerate_folds", "holdout_accuracy", "n_train", "n_test",
]


def _pct(v: float) -> str:
    return f"{v:.6f}"


def write_report_csv(report: EvalReport, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_HEADER)
        for e in report.entries:
            cv = e.cv
            w.writerow([
                e.target, e.n_classes, e.method, e.model_kind,
                _pct(cv.mean_accuracy) if cv else "",
                ";".join(_pct(a) for a in cv.fold_accuracies) if cv else "",
                ";".join(str(i) for i in cv.degenerate_folds) if cv else "",
                _pct(e.holdout_accuracy), e.n_train, e.n_test,
            ])


def confusion_json(report: EvalReport) -> dict:
    return {
        f"{e.target}/{e.method}/{e.model_kind}": {
            "labels": list(e.labels),
            "matrix": e.confusion.tolist(),
        }
        for e in report.entries
    }


def write_confusion_json(report: EvalReport, path: str | Path) -> None:
    Path(path).write_text(json.dumps(confusion_json(report), indent=1, sort_keys=True) + "\n", encoding="utf-8")


def format_report(report: EvalReport) -> str:
    """Text tables: CV accuracy per target with one column per (method, model), then holdout."""
    out = io.StringIO()
    out.write(f"train days: {report.n_train_days}  test days: {report.n_test_days}\n")
    for title, methods, n_classes in (("3 categories", THREE_CLASS_METHODS, 3), ("2 categories", ("sign",), 2)):
        rows = [e for e in report.entries if e.method in methods]
        if not rows:
            continue
        cols = []
        for e in rows:
            if (e.method, e.model_kind) not in cols:
                cols.append((e.method, e.model_kind))
        targets = []
        for e in rows:
            if e.target not in targets:
                targets.append(e.target)
        for label, attr in (("cross-validated", "cv"), ("holdout", "holdout")):
            out.write(f"\n{label} accuracy, {title}\n")
            header = f"{'target':<8}" + "".join(f"{m[:5] + '/' + k:>16}" for m, k in cols)
            out.write(header + "\n")
            for t in targets:
                line = f"{t.upper():<8}"
                for m, k in cols:
                    e = next((x for x in rows if x.key == (t, k, m)), None)
                    if e is None:
                        line += f"{'':>16}"
                        continue
                    v = e.cv.mean_accuracy if attr == "cv" else e.holdout_accuracy
                    line += f"{100 * v:>15.1f}%"
                out.write(line + "\n")
    return out.getvalue()
