"""Per-window coverage timelines, prediction tables and aggregate summaries."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence, TextIO

import numpy as np

from .evaluation import MAN, ZONE, FeatureTable, SemanticLabels, fit_table, label_model, model_semantics
from .features import (
    WINDOWS,
    FeatureVector,
    TimeWindow,
    build_windows,
    compute_features,
    nearest_neighbor_trace,
    window_columns,
)
from .gmm import FitConfig, GmmModel, load_model, save_model
from .tracking import Play

GROUP_KEYS = ("team", "player", "quarter", "down")
_GROUP_COLUMN = {"team": "club", "player": "player_id", "quarter": "quarter", "down": "down"}
HIST_BINS = 20


# --- window models ----------------------------------------------------------------


def fit_window_models(vectors: Sequence[FeatureVector], config: FitConfig | None = None) -> dict[str, GmmModel]:
    """One labeled 11-feature model per window; rows missing the whole window are left out."""
    config = config or FitConfig()
    models = {}
    for w in WINDOWS:
        table = window_table(vectors, w)
        keep = ~np.isnan(table.values).all(axis=1)
        model = fit_table(table.rows(keep), config)
        models[w] = label_model(model.with_metadata(window=w))
    return models


def window_model_path(directory: str | Path, window: str) -> Path:
    return Path(directory) / f"{window}.json"


def save_window_models(models: Mapping[str, GmmModel], directory: str | Path) -> None:
    Path(directory).mkdir(parents=True, exist_ok=True)
    for w, m in models.items():
        save_model(m, window_model_path(directory, w))


def load_window_models(directory: str | Path, windows: Sequence[str] = WINDOWS) -> dict[str, GmmModel]:
    missing = [w for w in windows if not window_model_path(directory, w).exists()]
    if missing:
        raise FileNotFoundError(f"missing window model(s): {', '.join(missing)}")
    return {w: load_model(window_model_path(directory, w)) for w in windows}


def man_zone_columns(model: GmmModel) -> tuple[int, int]:
    sem = model_semantics(model)
    if sem is None or sem.component_for(MAN) is None or sem.component_for(ZONE) is None:
        raise ValueError("model has no MAN/ZONE labels")
    return sem.component_for(MAN), sem.component_for(ZONE)


# --- timelines --------------------------------------------------------------------


@dataclass(frozen=True)
class TimelineEntry:
    window: str
    p_man: float
    p_zone: float
    missing: bool
    frame: int | None = None  # set in sliding mode


@dataclass(frozen=True)
class CoverageTimeline:
    game_id: str
    play_id: str
    player_id: str
    entries: tuple[TimelineEntry, ...]

    def entry(self, window: str) -> TimelineEntry:
        for e in self.entries:
            if e.window == window:
                return e
        raise KeyError(window)


def _window_proba(model: GmmModel, values: np.ndarray, missing: np.ndarray) -> tuple[float, float, bool]:
    if missing.all():
        return float("nan"), float("nan"), True
    man, zone = man_zone_columns(model)
    p = model.predict_proba(model.impute(values))
    return float(p[man]), float(p[zone]), False


def coverage_timeline(play: Play, cb: str, models: Mapping[str, GmmModel]) -> CoverageTimeline:
    trace = nearest_neighbor_trace(play, cb)
    entries = []
    for w in build_windows(play):
        values, missing = compute_features(play, cb, w, trace)
        p_man, p_zone, miss = _window_proba(models[w.name], values, missing)
        entries.append(TimelineEntry(w.name, p_man, p_zone, miss))
    return CoverageTimeline(play.game_id, play.play_id, cb, tuple(entries))


def sliding_timeline(play: Play, cb: str, models: Mapping[str, GmmModel]) -> CoverageTimeline:
    """Frame-by-frame probabilities from features over a growing window.

    Up to the snap the PRE_SNAP model scores [first, t]; until the throw the
    SNAP_TO_THROW model scores [snap, t]; afterwards THROW_TO_END scores [throw, t].
    Frames where the growing window holds fewer than two frames are missing.
    """
    trace = nearest_neighbor_trace(play, cb)
    frames = play.frame_index
    first = int(frames[0])
    entries = []
    for t in frames.tolist():
        if t <= play.snap_frame:
            name, lo = "PRE_SNAP", first
        elif t <= play.throw_frame:
            name, lo = "SNAP_TO_THROW", play.snap_frame
        else:
            name, lo = "THROW_TO_END", play.throw_frame
        n = int(np.count_nonzero((frames >= lo) & (frames <= t)))
        window = TimeWindow(name, lo, t, n)
        values, missing = compute_features(play, cb, window, trace)
        p_man, p_zone, miss = _window_proba(models[name], values, missing)
        entries.append(TimelineEntry(name, p_man, p_zone, miss, frame=t))
    return CoverageTimeline(play.game_id, play.play_id, cb, tuple(entries))


def _fmt(v: float) -> str:
    return "" if np.isnan(v) else f"{v:.6f}"


def write_timelines(timelines: Iterable[CoverageTimeline], sink: TextIO) -> None:
    w = csv.writer(sink, lineterminator="\n")
    w.writerow(["game_id", "play_id", "player_id", "window", "frame", "p_man", "p_zone", "missing"])
    for tl in timelines:
        for e in tl.entries:
            w.writerow(
                [tl.game_id, tl.play_id, tl.player_id, e.window, "" if e.frame is None else e.frame,
                 _fmt(e.p_man), _fmt(e.p_zone), int(e.missing)]
            )


def format_timeline(tl: CoverageTimeline) -> str:
    lines = [f"{tl.game_id}/{tl.play_id} player {tl.player_id}", f"  {'window':<15}{'frame':>6}{'P(MAN)':>9}{'P(ZONE)':>9}"]
    for e in tl.entries:
        frame = "" if e.frame is None else str(e.frame)
        if e.missing:
            lines.append(f"  {e.window:<15}{frame:>6}{'missing':>18}")
        else:
            lines.append(f"  {e.window:<15}{frame:>6}{e.p_man:>9.3f}{e.p_zone:>9.3f}")
    return "\n".join(lines)


# --- predictions --------------------------------------------------------------------

PREDICTION_COLUMNS = ("game_id", "play_id", "player_id", "week", "p_man", "p_zone", "assigned_label")


@dataclass(frozen=True)
class Prediction:
    game_id: str
    play_id: str
    player_id: str
    week: int
    p_man: float
    p_zone: float
    assigned_label: str
    window: str = ""
    meta: Mapping[str, str] | None = None


def _label_names(model: GmmModel) -> tuple[SemanticLabels | None, list[str]]:
    sem = model_semantics(model)
    if sem is not None:
        return sem, [sem.mapping.get(g, f"CLUSTER_{g}") for g in range(model.n_components)]
    return None, [f"CLUSTER_{g}" for g in range(model.n_components)]


def predict_vectors(model: GmmModel, vectors: Sequence[FeatureVector], names: Sequence[str], window: str = "") -> list[Prediction]:
    """Score vectors with ``model``; ``names`` are the vectors' column names."""
    table = FeatureTable.from_vectors(vectors, names).columns(model.feature_names)
    proba = model.predict_proba(model.impute(table.values)) if len(table) else np.empty((0, model.n_components))
    sem, labels = _label_names(model)
    man = sem.component_for(MAN) if sem else None
    zone = sem.component_for(ZONE) if sem else None
    out = []
    for v, p in zip(vectors, proba):
        if window:
            _, miss = v.window_values(window)
            if miss.all():
                continue
        g = int(np.argmax(p))
        out.append(
            Prediction(
                v.game_id, v.play_id, v.player_id, v.week,
                float(p[man]) if man is not None else float("nan"),
                float(p[zone]) if zone is not None else float("nan"),
                labels[g], window, dict(v.meta),
            )
        )
    return out


def write_predictions(predictions: Sequence[Prediction], sink: TextIO) -> None:
    meta_keys = sorted({k for p in predictions for k in (p.meta or {})})
    has_window = any(p.window for p in predictions)
    w = csv.writer(sink, lineterminator="\n")
    w.writerow([*PREDICTION_COLUMNS, *(["window"] if has_window else []), *meta_keys])
    for p in predictions:
        w.writerow(
            [p.game_id, p.play_id, p.player_id, p.week, _fmt(p.p_man), _fmt(p.p_zone), p.assigned_label,
             *([p.window] if has_window else []), *((p.meta or {}).get(k, "") for k in meta_keys)]
        )


def read_predictions(path: str | Path) -> list[dict[str, str]]:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    return rows


# --- aggregates ---------------------------------------------------------------------


@dataclass(frozen=True)
class GroupStat:
    group: str
    count: int
    n_man: int
    n_zone: int
    insufficient: bool

    @property
    def man_share(self) -> float:
        return self.n_man / self.count if self.count else float("nan")

    @property
    def zone_share(self) -> float:
        return self.n_zone / self.count if self.count else float("nan")


@dataclass(frozen=True)
class AggregateReport:
    group_by: str
    min_count: int
    groups: tuple[GroupStat, ...]

    @property
    def total(self) -> int:
        return sum(g.count for g in self.groups)


def _group_sort_key(value: str):
    try:
        return (0, float(value), "")
    except ValueError:
        return (1, 0.0, value)


def aggregate_report(rows: Sequence[Mapping[str, str]], group_by: str, min_count: int = 50) -> AggregateReport:
    """Man/zone shares per group from prediction rows (hard labels).

    Team and player groups are ranked by man share, highest first; quarter and
    down groups keep their natural order. Groups under ``min_count`` are flagged.
    """
    if group_by not in GROUP_KEYS:
        raise ValueError(f"unknown grouping {group_by!r}; choose from {', '.join(GROUP_KEYS)}")
    column = _GROUP_COLUMN[group_by]
    rows = [r for r in rows if r.get("assigned_label") in (MAN, ZONE)]
    if rows and column not in rows[0]:
        raise ValueError(f"predictions lack the {column!r} column needed for grouping by {group_by}")
    counts: dict[str, list[int]] = {}
    for r in rows:
        c = counts.setdefault(r[column], [0, 0])
        c[0 if r["assigned_label"] == MAN else 1] += 1
    stats = [GroupStat(g, m + z, m, z, m + z < min_count) for g, (m, z) in counts.items()]
    if group_by in ("team", "player"):
        stats.sort(key=lambda s: (-s.man_share, _group_sort_key(s.group)))
    else:
        stats.sort(key=lambda s: _group_sort_key(s.group))
    return AggregateReport(group_by, min_count, tuple(stats))


def write_aggregate(report: AggregateReport, sink: TextIO, top: int | None = None) -> None:
    w = csv.writer(sink, lineterminator="\n")
    w.writerow([report.group_by, "count", "n_man", "n_zone", "man_share", "zone_share", "flag"])
    groups = report.groups
    if top is not None:
        groups = tuple(g for g in groups if not g.insufficient)[:top]
    for g in groups:
        w.writerow([g.group, g.count, g.n_man, g.n_zone, f"{g.man_share:.6f}", f"{g.zone_share:.6f}",
                    "insufficient sample" if g.insufficient else ""])


# --- membership histograms ------------------------------------------------------------


def membership_histogram(p_zone: Iterable[float], bins: int = HIST_BINS) -> tuple[np.ndarray, np.ndarray]:
    """Counts of zone-cluster probabilities over equal bins on [0, 1] (1.0 falls in the last bin)."""
    values = np.asarray([v for v in p_zone if not np.isnan(v)], dtype=float)
    counts, edges = np.histogram(values, bins=bins, range=(0.0, 1.0))
    return counts, edges


def histograms_by_window(rows: Sequence[Mapping[str, str]], bins: int = HIST_BINS) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    groups: dict[str, list[float]] = {}
    for r in rows:
        if r.get("p_zone", "") == "":
            continue
        groups.setdefault(r.get("window") or "ALL", []).append(float(r["p_zone"]))
    order = [w for w in (*WINDOWS, "ALL") if w in groups]
    return {w: membership_histogram(groups[w], bins) for w in order}


def write_histograms(hists: Mapping[str, tuple[np.ndarray, np.ndarray]], sink: TextIO) -> None:
    w = csv.writer(sink, lineterminator="\n")
    w.writerow(["window", "bin_lo", "bin_hi", "x", "y"])
    for name, (counts, edges) in hists.items():
        for i, c in enumerate(counts):
            lo, hi = edges[i], edges[i + 1]
            w.writerow([name, f"{lo:.2f}", f"{hi:.2f}", f"{(lo + hi) / 2:.3f}", int(c)])


def window_table(vectors: Sequence[FeatureVector], window: str) -> FeatureTable:
    """11-column table of one window's features."""
    return FeatureTable.from_vectors(vectors).columns(window_columns(window))

