"""``manzone`` command line: batch steps from tracking CSV to coverage reports.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import contextlib
import csv
import logging
import os
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from .evaluation import AriUndefined, FeatureTable, feature_influence, fit_table, label_model, select_g
from .features import WINDOWS, extract_corpus_features, read_feature_csv, write_feature_csv
from .gmm import FitConfig, GmmFitError, GmmModel, load_model, save_model
from .reports import (
    GROUP_KEYS,
    aggregate_report,
    coverage_timeline,
    fit_window_models,
    format_timeline,
    histograms_by_window,
    load_window_models,
    predict_vectors,
    read_predictions,
    save_window_models,
    sliding_timeline,
    write_aggregate,
    write_histograms,
    write_predictions,
    write_timelines,
)
from .synthetic import SimConfig, generate_corpus, write_corpus
from .tracking import IngestConfig, RowError, SchemaError, load_config, load_corpus, select_cornerbacks

log = logging.getLogger("manzone")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
DEFAULT_SEED = 2017
SEED_ENV = "MANZONE_SEED"
THREADS_ENV = "MANZONE_THREADS"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse exits with 2; usage errors here are 1
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# --- helpers ------------------------------------------------------------------------


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get(SEED_ENV)
    if env is None:
        return DEFAULT_SEED
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"{SEED_ENV} must be an integer, got {env!r}") from None


def _fit_config(args, n_components: int) -> FitConfig:
    try:
        return FitConfig(n_components=n_components, n_restarts=args.restarts, rng_seed=_seed(args))
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _ingest_config(args) -> IngestConfig:
    return load_config(args.config) if args.config else IngestConfig()


@contextlib.contextmanager
def _sink(path: str | None):
    """Text sink for ``path``; stdout when no path is given."""
    if path is None or path == "-":
        yield sys.stdout
        return
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        yield fh


def _out_dir(args) -> Path:
    if not args.output:
        raise UsageError("--output directory is required")
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _read_features(path: str):
    vectors, names = read_feature_csv(path)
    if not vectors:
        raise ValueError(f"{path}: no feature rows")
    return vectors, names


def _num(v: float) -> str:
    return repr(float(v))


# --- commands -----------------------------------------------------------------------


def cmd_simulate(args) -> int:
    try:
        cfg = SimConfig(
            n_plays=args.n_plays,
            man_fraction=args.man_fraction,
            hybrid_rate=args.hybrid_rate,
            disguise_rate=args.disguise_rate,
            noise_std=args.noise_std,
            weeks=args.weeks,
            rng_seed=_seed(args),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    paths = write_corpus(generate_corpus(cfg), _out_dir(args))
    for name, p in paths.items():
        print(f"{name}: {p}")
    return EXIT_OK


def cmd_extract(args) -> int:
    corpus, report = load_corpus(args.input, _ingest_config(args))
    if not corpus.plays:
        sys.stderr.write(report.to_text())
        raise ValueError("no plays parsed")
    vectors = extract_corpus_features(corpus, _ingest_config(args).cornerback_positions)
    with _sink(args.output) as fh:
        write_feature_csv(vectors, fh)
    quality = args.report or (f"{args.output}.quality.txt" if args.output and args.output != "-" else None)
    if quality:
        with _sink(quality) as fh:
            fh.write(report.to_text())
    print(f"{len(corpus.plays)} plays, {len(vectors)} feature rows", file=sys.stderr)
    return EXIT_OK


def _parse_override(text: str | None) -> dict[int, str] | None:
    if not text:
        return None
    out = {}
    for part in text.split(","):
        g, sep, lab = part.partition("=")
        if not sep or not g.strip().isdigit():
            raise UsageError(f"bad --labels entry {part!r}; expected e.g. 0=MAN,1=ZONE")
        out[int(g)] = lab.strip()
    return out


def cmd_fit(args) -> int:
    vectors, names = _read_features(args.input)
    config = _fit_config(args, args.g)
    if args.per_window:
        if args.g != 2:
            raise UsageError("--per-window models are two-component")
        models = fit_window_models(vectors, config)
        save_window_models(models, _out_dir(args))
        for w, m in models.items():
            print(f"{w}: {m.metadata['semantic_labels']} ({m.metadata['semantic_status']})")
        return EXIT_OK
    table = FeatureTable.from_vectors(vectors, names)
    if args.window:
        table = table.columns([n for n in names if n.startswith(f"{args.window}__")])
        table = table.rows(~np.isnan(table.values).all(axis=1))
    model = fit_table(table, config)
    if args.window:
        model = model.with_metadata(window=args.window)
    if args.g == 2 or args.labels:
        model = label_model(model, override=_parse_override(args.labels))
    if not args.output:
        raise UsageError("--output model path is required")
    save_model(model, args.output)
    sem = model.metadata.get("semantic_labels")
    print(f"G={model.n_components} log-likelihood={model.log_likelihood:.6f} labels={sem}")
    return EXIT_OK


def _load_models(path: str) -> dict[str, GmmModel] | GmmModel:
    p = Path(path)
    if p.is_dir():
        return load_window_models(p)
    return load_model(p)


def cmd_predict(args) -> int:
    vectors, names = _read_features(args.input)
    models = _load_models(args.model)
    if isinstance(models, GmmModel):
        missing = [n for n in models.feature_names if n not in names]
        if missing:
            raise ValueError(f"feature file lacks model columns, e.g. {missing[0]!r}")
        preds = predict_vectors(models, vectors, names, window=models.metadata.get("window", ""))
    else:
        windows = [args.window] if args.window else list(WINDOWS)
        preds = [p for w in windows for p in predict_vectors(models[w], vectors, names, window=w)]
    with _sink(args.output) as fh:
        write_predictions(preds, fh)
    return EXIT_OK


def cmd_select_g(args) -> int:
    if args.g_min < 1 or args.g_max < args.g_min:
        raise UsageError("need 1 <= --g-min <= --g-max")
    vectors, names = _read_features(args.input)
    table = FeatureTable.from_vectors(vectors, names)
    report = select_g(table, range(args.g_min, args.g_max + 1), _fit_config(args, args.g_min))
    out = _out_dir(args)
    weeks = report.weeks
    with open(out / "cv_ari.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["G", "mean_ari", *(f"week_{k}" for k in weeks), "skipped_weeks"])
        for row in report.rows:
            w.writerow([row.n_components, _num(row.mean_ari),
                        *(_num(row.week_ari[k]) if k in row.week_ari else "" for k in weeks),
                        ";".join(str(k) for k in sorted(row.skipped))])
    with open(out / "cv_ari_series.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y"])
        for row in report.rows:
            w.writerow([row.n_components, _num(row.mean_ari)])
    for row in report.rows:
        print(f"G={row.n_components}: mean ARI {row.mean_ari:.4f}")
    print(f"G* = {report.best_g}")
    return EXIT_OK


def cmd_influence(args) -> int:
    vectors, names = _read_features(args.input)
    table = FeatureTable.from_vectors(vectors, names)
    report = feature_influence(table, args.g, _fit_config(args, args.g), mode=args.ablation_mode)
    out = _out_dir(args)
    with open(out / "influence.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rank", "feature", "influence", "mean_ari_without", "baseline", "columns"])
        for i, e in enumerate(report.entries, 1):
            w.writerow([i, e.feature, _num(e.influence), _num(e.mean_ari_without), _num(report.baseline), ";".join(e.columns)])
    shown = report.entries if args.top <= 0 else report.top(args.top)
    with open(out / "influence_series.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y"])
        for e in shown:
            w.writerow([e.feature, _num(e.influence)])
    print(f"baseline mean ARI {report.baseline:.4f}")
    for i, e in enumerate(shown, 1):
        print(f"{i:>3}. {e.feature:<32} {e.influence:+.4f}")
    return EXIT_OK


def cmd_timeline(args) -> int:
    models = load_window_models(args.model)
    config = _ingest_config(args)
    corpus, _ = load_corpus(args.input, config)
    if not corpus.plays:
        raise ValueError("no plays parsed")
    timelines = []
    for p in corpus:
        if args.play and args.play not in (p.play_id, f"{p.game_id}/{p.play_id}"):
            continue
        for cb in select_cornerbacks(p, config.cornerback_positions):
            if args.player and cb != args.player:
                continue
            make = sliding_timeline if args.sliding else coverage_timeline
            timelines.append(make(p, cb, models))
    if not timelines:
        raise ValueError("no cornerback matches the play/player selection")
    with _sink(args.output) as fh:
        write_timelines(timelines, fh)
    if args.output and args.output != "-":
        for tl in timelines[: args.show]:
            print(format_timeline(tl))
    return EXIT_OK


def cmd_report(args) -> int:
    rows = read_predictions(args.input)
    report = aggregate_report(rows, args.group_by, args.min_count)
    with _sink(args.output) as fh:
        write_aggregate(report, fh, top=args.top if args.top > 0 else None)
    return EXIT_OK


def cmd_membership_hist(args) -> int:
    rows = read_predictions(args.input)
    with _sink(args.output) as fh:
        write_histograms(histograms_by_window(rows), fh)
    return EXIT_OK


# --- parser -------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="manzone", description="Man/zone coverage annotation from tracking data.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, inputs="+", output_help="output file (stdout if omitted)"):
        p.add_argument("--input", nargs=inputs, required=True)
        p.add_argument("--output", help=output_help)
        p.add_argument("--seed", type=int, help=f"random seed (env {SEED_ENV}, default {DEFAULT_SEED})")

    p = sub.add_parser("simulate", help="write a synthetic tracking corpus with ground truth")
    p.add_argument("--output", required=True, help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--n-plays", type=int, default=SimConfig.n_plays)
    p.add_argument("--weeks", type=int, default=SimConfig.weeks)
    p.add_argument("--man-fraction", type=float, default=SimConfig.man_fraction)
    p.add_argument("--hybrid-rate", type=float, default=SimConfig.hybrid_rate)
    p.add_argument("--disguise-rate", type=float, default=SimConfig.disguise_rate)
    p.add_argument("--noise-std", type=float, default=SimConfig.noise_std)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("extract", help="tracking CSV -> feature CSV")
    common(p)
    p.add_argument("--config", help="ingest config (INI)")
    p.add_argument("--report", help="data-quality report path (default <output>.quality.txt)")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("fit", help="fit a mixture model to a feature CSV")
    common(p, inputs=None, output_help="model file, or directory with --per-window")
    p.add_argument("--g", type=int, default=2)
    p.add_argument("--restarts", type=int, default=FitConfig.n_restarts)
    p.add_argument("--window", choices=WINDOWS, help="use only this window's features")
    p.add_argument("--per-window", action="store_true", help="fit one model per window")
    p.add_argument("--labels", help="manual cluster names, e.g. 0=ZONE,1=MAN")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="score feature rows with a model or a window-model directory")
    common(p, inputs=None)
    p.add_argument("--model", required=True)
    p.add_argument("--window", choices=WINDOWS)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("select-g", help="LOWO-CV ARI over a range of cluster counts")
    common(p, inputs=None, output_help="output directory")
    p.add_argument("--g-min", type=int, default=2)
    p.add_argument("--g-max", type=int, default=9)
    p.add_argument("--restarts", type=int, default=3)
    p.set_defaults(func=cmd_select_g)

    p = sub.add_parser("influence", help="rank features by drop in LOWO-CV ARI when removed")
    common(p, inputs=None, output_help="output directory")
    p.add_argument("--g", type=int, default=2)
    p.add_argument("--restarts", type=int, default=3)
    p.add_argument("--ablation-mode", choices=("column", "family"), default="column")
    p.add_argument("--top", type=int, default=9, help="rows in the plot series (0 = all)")
    p.set_defaults(func=cmd_influence)

    p = sub.add_parser("timeline", help="per-window man/zone probabilities for cornerbacks")
    common(p)
    p.add_argument("--config", help="ingest config (INI)")
    p.add_argument("--model", required=True, help="window-model directory")
    p.add_argument("--play", help="play id or game_id/play_id")
    p.add_argument("--player", help="cornerback player id")
    p.add_argument("--sliding", action="store_true", help="frame-by-frame growing windows")
    p.add_argument("--show", type=int, default=3, help="timelines echoed as tables")
    p.set_defaults(func=cmd_timeline)

    p = sub.add_parser("report", help="man/zone shares by team, player, quarter or down")
    common(p, inputs=None)
    p.add_argument("--group-by", choices=GROUP_KEYS, required=True)
    p.add_argument("--min-count", type=int, default=50)
    p.add_argument("--top", type=int, default=0, help="keep only the first N sufficient groups")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("membership-hist", help="20-bin histograms of zone membership probability")
    common(p, inputs=None)
    p.set_defaults(func=cmd_membership_hist)
    return parser


def _thread_limit():
    env = os.environ.get(THREADS_ENV)
    if not env:
        return contextlib.nullcontext()
    try:
        n = int(env)
    except ValueError:
        raise UsageError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        with _thread_limit():
            return args.func(args)
    except UsageError as exc:
        print(f"manzone: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (GmmFitError, AriUndefined, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"manzone: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (SchemaError, RowError, ValueError, OSError, KeyError) as exc:
        print(f"manzone: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
