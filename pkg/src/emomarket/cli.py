"""Command-line pipeline: ingest -> label -> series -> analyze -> train/evaluate -> predict.

Stages talk through files. Every subcommand accepts ``--config FILE`` (flat
``key = value`` lines using the long option names); explicit flags win over
the file. On failure a single line

    error: stage=<command> type=<ExceptionName> message="..."

goes to stderr, the exit status is nonzero and any outputs the command had
started writing are removed.
"""

from __future__ import annotations

import argparse
import json
import shutil
import sys
from datetime import date
from pathlib import Path

from . import corpus, evaluation, market, stats, synth, timeseries
from .learn import FeatureSpec, Hyperparams, TrainedModel, build_features, full_spec, svmes_feature_spec
from .timeseries import MAX_LAG, TradingCalendar

EXIT_ERROR = 2


class CliError(ValueError):
    pass


class Outputs:
    """Paths a command creates; removed again if the command fails."""

    def __init__(self):
        self._paths: list[Path] = []

    def file(self, path: str | Path) -> Path:
        p = Path(path)
        if not p.exists():
            self._paths.append(p)
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    def directory(self, path: str | Path) -> Path:
        p = Path(path)
        if not p.exists():
            self._paths.append(p)
        p.mkdir(parents=True, exist_ok=True)
        return p

    def remove(self) -> None:
        for p in reversed(self._paths):
            if p.is_dir():
                shutil.rmtree(p, ignore_errors=True)
            elif p.exists():
                p.unlink()


# --- argument parsing ---------------------------------------------------------


def _csv_list(text: str) -> tuple[str, ...]:
    return tuple(s.strip() for s in text.split(",") if s.strip())


def _lags(text: str) -> tuple[int, ...]:
    """``1-5`` or ``1,3,5``."""
    out = []
    for part in _csv_list(text):
        lo, sep, hi = part.partition("-")
        out.extend(range(int(lo), int(hi) + 1) if sep else [int(lo)])
    if not out or any(not 1 <= v <= MAX_LAG for v in out):
        raise argparse.ArgumentTypeError(f"lags must lie in [1, {MAX_LAG}]")
    return tuple(sorted(set(out)))


def _fraction(text: str) -> float:
    v = float(text)
    if not 0 < v < 1:
        raise argparse.ArgumentTypeError("train fraction must be in (0, 1)")
    return v


def _bool(text: str | bool) -> bool:
    if isinstance(text, bool):
        return text
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise CliError(f"not a boolean: {text!r}")


def read_config(path: str | Path) -> dict[str, str]:
    cfg = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise CliError(f"{path}:{lineno}: expected key = value")
        cfg[key.strip().replace("-", "_")] = value.strip()
    return cfg


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(message)


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value file; flags override it")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output file (or directory for evaluate/synth)")
    p.add_argument("--paper-mode", action="store_true",
                   help="returns divided by the current close and whole-series feature normalization")


def _market_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--series", help="emotion series CSV")
    p.add_argument("--ohlcv", help="daily OHLCV CSV")
    p.add_argument("--train-fraction", type=_fraction, default=0.8)
    p.add_argument("--literal-returns", action="store_true", help="divide returns by the current close")


def _hp_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--C", dest="C", type=float, default=1.0)
    p.add_argument("--gamma", type=float, help="RBF width; default 1/n_features")
    p.add_argument("--kernel", choices=("rbf", "linear"), default="rbf")
    p.add_argument("--lr-learning-rate", type=float, default=0.5)
    p.add_argument("--lr-epochs", type=int, default=2000)
    p.add_argument("--lr-l2", type=float, default=1e-4)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="emomarket", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="keep tweets that mention a stock keyword")
    _common(p)
    p.add_argument("--tweets", help="raw tweets JSONL")
    p.add_argument("--keywords", help="keyword file, one per line (default: built-in list)")

    p = sub.add_parser("label", help="train naive Bayes on labeled tweets and label a corpus")
    _common(p)
    p.add_argument("--train", help="labeled training tweets JSONL")
    p.add_argument("--tweets", help="tweets to label, JSONL")
    p.add_argument("--nb-model", help="also write the fitted classifier here (JSON)")
    p.add_argument("--smoothing", type=float, default=1.0)
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("series", help="daily emotion proportions on trading days")
    _common(p)
    p.add_argument("--tweets", help="labeled tweets JSONL")
    p.add_argument("--calendar", help="trading days, one ISO date per line")
    p.add_argument("--fill-forward", action="store_true",
                   help="repeat the previous day's proportions on trading days without tweets")

    p = sub.add_parser("analyze", help="correlation and Granger causality grid on the training period")
    _common(p)
    _market_opts(p)
    p.add_argument("--lags", type=_lags, default=tuple(range(1, MAX_LAG + 1)))
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--sample-size", type=int, default=150)
    p.add_argument("--shuffles", type=int, default=100)
    p.add_argument("--significance", type=float, default=0.05)

    p = sub.add_parser("train", help="fit one classifier on the training period")
    _common(p)
    _market_opts(p)
    _hp_opts(p)
    p.add_argument("--target", choices=market.TARGETS, default="close")
    p.add_argument("--model", choices=evaluation.MODEL_KINDS, default="svm_es")
    p.add_argument("--method", choices=(*evaluation.THREE_CLASS_METHODS, "sign"), default="kmeans")
    p.add_argument("--features", default="auto",
                   help="auto, all, svmes, or an explicit list like joy:1,fear:2")

    p = sub.add_parser("predict", help="label the next trading day from the latest emotions")
    _common(p)
    p.add_argument("--model", type=_csv_list, help="model JSON file(s), comma separated")
    p.add_argument("--series", help="emotion series CSV")
    p.add_argument("--calendar", help="trading days file; lags count its days")
    p.add_argument("--date", type=date.fromisoformat, help="day to predict (default: next trading day)")

    p = sub.add_parser("evaluate", help="cross-validation and holdout over the experiment matrix")
    _common(p)
    _market_opts(p)
    _hp_opts(p)
    p.add_argument("--targets", type=_csv_list, default=market.TARGETS)
    p.add_argument("--models", type=_csv_list, default=evaluation.MODEL_KINDS)
    p.add_argument("--methods", type=_csv_list, default=(*evaluation.THREE_CLASS_METHODS, "sign"))
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--cv-mode", choices=("shuffled", "blocked"), default="shuffled")
    p.add_argument("--feature-spec", help="custom features for lr/svm, e.g. joy:1,fear:2")
    p.add_argument("--global-normalization", action="store_true",
                   help="scale features by whole-series min/max")

    p = sub.add_parser("synth", help="write a synthetic corpus and OHLCV set with planted dependencies")
    _common(p)
    p.add_argument("--plant", type=_csv_list, default=("sadness:2:volume",),
                   help="emotion:lag:target, comma separated")
    p.add_argument("--tweets-per-day", type=int, default=200)
    p.add_argument("--nb-training-size", type=int, default=1500)
    return parser


def parse_args(argv: list[str] | None = None) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config is None:
        return args
    cfg = read_config(args.config)
    sub = parser._subparsers._group_actions[0].choices[args.command]
    known = {a.dest: a for a in sub._actions}
    for key in cfg:
        if key not in known or key in ("help", "config"):
            raise CliError(f"unknown config key {key!r} for {args.command}")
    # config values become defaults, then the real command line is parsed again
    defaults = {}
    for key, value in cfg.items():
        action = known[key]
        if isinstance(action, argparse._StoreTrueAction):
            defaults[key] = _bool(value)
        else:
            defaults[key] = value
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def _need(args: argparse.Namespace, *names: str) -> None:
    for n in names:
        if getattr(args, n) is None:
            raise CliError(f"missing required option --{n.replace('_', '-')}")


def _hyperparams(args) -> Hyperparams:
    return Hyperparams(C=args.C, gamma=args.gamma, kernel=args.kernel, lr_learning_rate=args.lr_learning_rate,
                       lr_epochs=args.lr_epochs, lr_l2=args.lr_l2)


def _literal(args) -> bool:
    return args.paper_mode or args.literal_returns


def _load_market(args):
    _need(args, "series", "ohlcv")
    X = timeseries.read_series(args.series)
    Y = market.compute_returns(market.read_ohlcv(args.ohlcv), "paper_literal" if _literal(args) else "standard")
    return X, Y


# --- commands -----------------------------------------------------------------


def cmd_ingest(args, outs: Outputs) -> int:
    _need(args, "tweets", "out")
    kw = corpus.read_keywords(args.keywords) if args.keywords else corpus.KeywordFilter()
    raw = corpus.read_tweets(args.tweets)
    kept = corpus.filter_stock_tweets(raw, kw)
    corpus.write_tweets(kept, outs.file(args.out))
    print(f"kept {len(kept)} of {len(raw)} tweets")
    return 0


def cmd_label(args, outs: Outputs) -> int:
    _need(args, "train", "tweets", "out")
    model = corpus.train_nb(corpus.read_tweets(args.train), args.smoothing)
    labeled = corpus.label_tweets(model, corpus.read_tweets(args.tweets), args.workers)
    if args.nb_model:
        outs.file(args.nb_model).write_text(json.dumps(model.to_dict(), ensure_ascii=False) + "\n",
                                            encoding="utf-8")
    corpus.write_tweets(labeled, outs.file(args.out))
    counts = {e: 0 for e in corpus.EMOTIONS}
    for t in labeled:
        counts[t.label] += 1
    print("labeled " + " ".join(f"{e.value}={n}" for e, n in counts.items()))
    return 0


def cmd_series(args, outs: Outputs) -> int:
    _need(args, "tweets", "calendar", "out")
    cal = timeseries.read_calendar(args.calendar)
    counts = timeseries.aggregate_daily(corpus.read_tweets(args.tweets))
    series = timeseries.build_series(counts, cal, args.fill_forward)
    if not series.dates:
        raise CliError("no tweets fall on any trading day")
    timeseries.write_series(series, outs.file(args.out))
    print(f"{len(series.dates)} trading days {series.dates[0].isoformat()} .. {series.dates[-1].isoformat()}")
    return 0


def cmd_analyze(args, outs: Outputs) -> int:
    _need(args, "out")
    X, Y = _load_market(args)
    x_al, y_al = market.align(X, Y)
    (x_tr, y_tr), _ = market.split_train_test(x_al, y_al, args.train_fraction)
    rows = stats.analysis_grid(x_tr, y_tr, args.lags, args.samples, args.sample_size, args.shuffles, args.seed)
    stats.write_analysis(rows, outs.file(args.out))
    print(f"training period: {len(x_tr.dates)} days")
    print(stats.format_analysis(rows, args.significance), end="")
    return 0


def _feature_spec(args) -> FeatureSpec:
    choice = args.features
    if args.model == "svm_es":
        if choice not in ("auto", "svmes"):
            raise CliError("svm_es always uses its per-target feature table")
        return svmes_feature_spec(args.target)
    if choice in ("auto", "all"):
        return full_spec()
    if choice == "svmes":
        return svmes_feature_spec(args.target)
    return FeatureSpec.parse(choice)


def cmd_train(args, outs: Outputs) -> int:
    _need(args, "out")
    X, Y = _load_market(args)
    if args.method == "sign" and args.target not in evaluation.BINARY_TARGETS:
        raise CliError(f"sign discretization applies to {', '.join(evaluation.BINARY_TARGETS)} only")
    x_al, y_al = market.align(X, Y)
    train, test = market.split_train_test(x_al, y_al, args.train_fraction)
    cutoff = test[0].dates[0] if test[0].dates else None
    X_fit = X if args.paper_mode else X.subset([d for d in X.dates if cutoff is None or d < cutoff])
    model, ds = evaluation.fit_model(X_fit, train[1], args.target, _feature_spec(args), args.model,
                                     args.method, _hyperparams(args), args.paper_mode)
    model.save(outs.file(args.out))
    print(f"trained {args.model} on {args.target} ({args.method}): {len(ds)} rows, {len(model.spec)} features")
    return 0


def _next_trading_day(cal: TradingCalendar, after: date) -> date:
    for d in cal.trading_days:
        if d > after:
            return d
    raise CliError(f"calendar has no trading day after {after.isoformat()}")


def cmd_predict(args, outs: Outputs) -> int:
    _need(args, "model", "series")
    X = timeseries.read_series(args.series)
    if not X.dates:
        raise CliError("emotion series is empty")
    if args.calendar:
        cal = timeseries.read_calendar(args.calendar)
        day = args.date or _next_trading_day(cal, X.dates[-1])
        if day not in cal:
            raise CliError(f"{day.isoformat()} is not a trading day")
    else:
        # without a calendar the series rows are the trading days
        if args.date is None:
            raise CliError("need --calendar or --date")
        day = args.date
        past = [d for d in X.dates if d < day]
        cal = TradingCalendar(tuple(past) + (day,))
    results = []
    for path in args.model:
        model = TrainedModel.load(path)
        raw = build_features(X, model.spec, [day], calendar=cal)
        label = int(model.predict_rows(raw)[0])
        results.append({"date": day.isoformat(), "target": model.target, "model": model.kind, "label": label})
        print(f"date={day.isoformat()} target={model.target} model={model.kind} label={label}")
    if args.out:
        outs.file(args.out).write_text(json.dumps(results, indent=1) + "\n", encoding="utf-8")
    return 0


def cmd_evaluate(args, outs: Outputs) -> int:
    _need(args, "out")
    X, Y = _load_market(args)
    config = evaluation.ExperimentConfig(
        seed=args.seed, train_fraction=args.train_fraction, k_folds=args.folds, cv_mode=args.cv_mode,
        targets=tuple(args.targets), models=tuple(args.models), methods=tuple(args.methods),
        hp=_hyperparams(args),
        custom_spec=FeatureSpec.parse(args.feature_spec) if args.feature_spec else None,
        paper_literal_returns=_literal(args),
        global_normalization=args.paper_mode or args.global_normalization,
    )
    for t in config.targets:
        if t not in market.TARGETS:
            raise CliError(f"unknown target {t!r}")
    report = evaluation.evaluate_matrix(X, Y, config)
    out = outs.directory(args.out)
    evaluation.write_report_csv(report, outs.file(out / "report.csv"))
    evaluation.write_confusion_json(report, outs.file(out / "confusion.json"))
    text = evaluation.format_report(report)
    outs.file(out / "report.txt").write_text(text, encoding="utf-8")
    print(text, end="")
    return 0


def cmd_synth(args, outs: Outputs) -> int:
    _need(args, "out")
    plants = tuple(synth.Plant.parse(p) for p in args.plant)
    data = synth.generate(seed=args.seed, plants=plants, tweets_per_day=args.tweets_per_day,
                          nb_training_size=args.nb_training_size)
    out = outs.directory(args.out)
    corpus.write_tweets(data.tweets, outs.file(out / "tweets.jsonl"))
    corpus.write_tweets(data.nb_training, outs.file(out / "nb_train.jsonl"))
    timeseries.write_calendar(data.calendar, outs.file(out / "calendar.txt"))
    market.write_ohlcv(data.ohlcv, outs.file(out / "ohlcv.csv"))
    outs.file(out / "keywords.txt").write_text("".join(k + "\n" for k in data.keywords), encoding="utf-8")
    meta = {"seed": args.seed, "plants": [p.format() for p in plants]}
    outs.file(out / "plants.json").write_text(json.dumps(meta, indent=1) + "\n", encoding="utf-8")
    print(f"{len(data.tweets)} tweets, {len(data.nb_training)} training tweets, "
          f"{len(data.ohlcv)} market days; planted {', '.join(meta['plants'])}")
    return 0


COMMANDS = {
    "ingest": cmd_ingest,
    "label": cmd_label,
    "series": cmd_series,
    "analyze": cmd_analyze,
    "train": cmd_train,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "synth": cmd_synth,
}


def _error_line(stage: str, exc: BaseException) -> str:
    msg = str(exc).replace("\\", "\\\\").replace('"', '\\"').replace("\n", " ")
    return f'error: stage={stage} type={type(exc).__name__} message="{msg}"'


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    stage = next((a for a in argv if a in COMMANDS), "args")
    try:
        args = parse_args(argv)
    except CliError as exc:
        print(_error_line(stage, exc), file=sys.stderr)
        return EXIT_ERROR
    except SystemExit as exc:
        # --help and friends
        return int(exc.code or 0)
    outs = Outputs()
    try:
        return COMMANDS[args.command](args, outs)
    except (ValueError, OSError, KeyError, json.JSONDecodeError) as exc:
        outs.remove()
        print(_error_line(args.command, exc), file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
