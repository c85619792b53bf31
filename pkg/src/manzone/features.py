"""Per-cornerback movement features over five play phases."""
from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field
from typing import Iterable, TextIO

import numpy as np

from .tracking import DEFENSE, OFFENSE, Play, PlayCorpus, id_key, select_cornerbacks

WINDOWS = ("PRE_SNAP", "SNAP_TO_MID", "MID_TO_THROW", "SNAP_TO_THROW", "THROW_TO_END")
FEATURES = (
    "VAR_X",
    "VAR_Y",
    "SPEED_VAR",
    "OFF_VAR",
    "DEF_VAR",
    "OFF_MEAN",
    "DEF_MEAN",
    "OFF_DIR_VAR",
    "OFF_DIR_MEAN",
    "RAT_MEAN",
    "RAT_VAR",
)
N_FEATURES = len(FEATURES)
COLUMNS = tuple(f"{w}__{f}" for w in WINDOWS for f in FEATURES)
ANGULAR = frozenset({"OFF_DIR_VAR", "OFF_DIR_MEAN"})

RATIO_FLOOR = 1e-6  # yards


def column_name(window: str, feature: str) -> str:
    return f"{window}__{feature}"


def window_columns(window: str) -> list[str]:
    return [column_name(window, f) for f in FEATURES]


@dataclass(frozen=True)
class TimeWindow:
    name: str
    start_frame: int
    end_frame: int
    n_frames: int

    @property
    def missing(self) -> bool:
        return self.n_frames < 2

    def mask(self, frame_index: np.ndarray) -> np.ndarray:
        return (frame_index >= self.start_frame) & (frame_index <= self.end_frame)


def build_windows(play: Play) -> list[TimeWindow]:
    frames = play.frame_index
    first, last = int(frames[0]), int(frames[-1])
    snap, throw = play.snap_frame, play.throw_frame
    mid = (snap + throw) // 2
    bounds = {
        "PRE_SNAP": (first, snap),
        "SNAP_TO_MID": (snap, mid),
        "MID_TO_THROW": (mid, throw),
        "SNAP_TO_THROW": (snap, throw),
        "THROW_TO_END": (throw, last),
    }
    out = []
    for name in WINDOWS:
        lo, hi = bounds[name]
        n = int(np.count_nonzero((frames >= lo) & (frames <= hi)))
        out.append(TimeWindow(name, lo, hi, n))
    return out


@dataclass(frozen=True)
class NearestNeighborTrace:
    """Per-frame nearest opponent / teammate of one cornerback."""

    frame_index: np.ndarray
    nearest_offense: np.ndarray  # player ids
    nearest_defense: np.ndarray | None  # None when the cornerback has no teammate
    dist_to_offense: np.ndarray
    dist_to_defense: np.ndarray | None
    offense_to_defense: np.ndarray | None
    # direction of motion of the nearest offensive player at each frame
    offense_direction: np.ndarray


def _stack(tracks):
    xy = np.stack([np.column_stack([t.x, t.y]) for t in tracks])  # (P, T, 2)
    return xy, np.stack([t.direction for t in tracks])


def _nearest(ref_xy: np.ndarray, others_xy: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Index of and distance to the closest of ``others`` at each frame.

    ``others`` must already be ordered by player id so argmin's first-hit rule
    breaks ties toward the smaller id.
    """
    d = np.hypot(others_xy[..., 0] - ref_xy[:, 0], others_xy[..., 1] - ref_xy[:, 1])  # (P, T)
    idx = np.argmin(d, axis=0)
    return idx, d[idx, np.arange(d.shape[1])]


def nearest_neighbor_trace(play: Play, cb: str) -> NearestNeighborTrace:
    me = play.track(cb)
    if me.team_side != DEFENSE:
        raise ValueError(f"player {cb} is not a defensive track")
    offense = sorted(play.side(OFFENSE), key=lambda t: id_key(t.player_id))
    mates = sorted((t for t in play.side(DEFENSE) if t.player_id != cb), key=lambda t: id_key(t.player_id))
    cb_xy = np.column_stack([me.x, me.y])
    frames = np.arange(len(me))

    off_xy, off_dir = _stack(offense)
    j, d_off = _nearest(cb_xy, off_xy)
    off_ids = np.array([t.player_id for t in offense], dtype=object)

    if mates:
        def_xy, _ = _stack(mates)
        k, d_def = _nearest(cb_xy, def_xy)
        def_ids = np.array([t.player_id for t in mates], dtype=object)[k]
        jx, kx = off_xy[j, frames], def_xy[k, frames]
        d_jk = np.hypot(jx[:, 0] - kx[:, 0], jx[:, 1] - kx[:, 1])
    else:
        def_ids = d_def = d_jk = None

    return NearestNeighborTrace(
        frame_index=me.frame_index,
        nearest_offense=off_ids[j],
        nearest_defense=def_ids,
        dist_to_offense=d_off,
        dist_to_defense=d_def,
        offense_to_defense=d_jk,
        offense_direction=off_dir[j, frames],
    )


def wrap_degrees(delta: np.ndarray) -> np.ndarray:
    """Map angle differences into (-180, 180]."""
    out = np.mod(delta, 360.0)
    return np.where(out > 180.0, out - 360.0, out)


def _pvar(v: np.ndarray) -> float:
    return float(np.mean((v - v.mean()) ** 2))


def compute_features(
    play: Play,
    cb: str,
    window: TimeWindow,
    trace: NearestNeighborTrace | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """The 11 movement features of ``cb`` over ``window``.

    Returns ``(values, missing)``; missing entries are NaN in ``values``.
    """
    values = np.full(N_FEATURES, np.nan)
    missing = np.ones(N_FEATURES, dtype=bool)
    if window.missing:
        return values, missing
    trace = trace or nearest_neighbor_trace(play, cb)
    me = play.track(cb)
    sel = window.mask(me.frame_index)

    d_off = trace.dist_to_offense[sel]
    dir_diff = wrap_degrees(trace.offense_direction[sel] - me.direction[sel])
    out = {
        "VAR_X": _pvar(me.x[sel]),
        "VAR_Y": _pvar(me.y[sel]),
        "SPEED_VAR": _pvar(me.speed[sel]),
        "OFF_VAR": _pvar(d_off),
        "OFF_MEAN": float(d_off.mean()),
        "OFF_DIR_VAR": _pvar(dir_diff),
        "OFF_DIR_MEAN": float(dir_diff.mean()),
    }
    if trace.dist_to_defense is not None:
        d_def = trace.dist_to_defense[sel]
        ratio = d_off / np.maximum(trace.offense_to_defense[sel], RATIO_FLOOR)
        out.update(
            DEF_VAR=_pvar(d_def),
            DEF_MEAN=float(d_def.mean()),
            RAT_MEAN=float(ratio.mean()),
            RAT_VAR=_pvar(ratio),
        )
    for i, name in enumerate(FEATURES):
        if name in out:
            values[i] = out[name]
            missing[i] = False
    return values, missing


@dataclass
class FeatureVector:
    game_id: str
    play_id: str
    player_id: str
    week: int
    values: np.ndarray
    missing_mask: np.ndarray
    meta: dict[str, str] = field(default_factory=dict)

    @property
    def key(self) -> tuple[str, str, str]:
        return (self.game_id, self.play_id, self.player_id)

    def window_values(self, window: str) -> tuple[np.ndarray, np.ndarray]:
        i = WINDOWS.index(window) * N_FEATURES
        return self.values[i : i + N_FEATURES], self.missing_mask[i : i + N_FEATURES]


def sort_key(key: tuple[str, ...]):
    return tuple(id_key(k) for k in key)


def play_features(play: Play, cb: str) -> FeatureVector:
    trace = nearest_neighbor_trace(play, cb)
    vals, miss = [], []
    for w in build_windows(play):
        v, m = compute_features(play, cb, w, trace)
        vals.append(v)
        miss.append(m)
    meta = dict(play.meta)
    club = play.track(cb).club
    if club:
        meta["club"] = club
    return FeatureVector(play.game_id, play.play_id, cb, play.week, np.concatenate(vals), np.concatenate(miss), meta)


def extract_corpus_features(
    corpus: PlayCorpus | Iterable[Play],
    cornerback_positions: Iterable[str] = ("CB",),
) -> list[FeatureVector]:
    positions = tuple(cornerback_positions)
    vectors = [play_features(p, cb) for p in corpus for cb in select_cornerbacks(p, positions)]
    vectors.sort(key=lambda v: sort_key(v.key))
    return vectors


# --- feature matrix CSV -----------------------------------------------------

ID_COLUMNS = ("game_id", "play_id", "player_id", "week")
META_COLUMNS = ("club", "quarter", "down")


def missing_column(name: str) -> str:
    return f"{name}__MISSING"


def write_feature_csv(vectors: Iterable[FeatureVector], sink: TextIO, columns: tuple[str, ...] = COLUMNS) -> None:
    vectors = list(vectors)
    meta = [m for m in META_COLUMNS if any(m in v.meta for v in vectors)]
    writer = csv.writer(sink, lineterminator="\n")
    writer.writerow([*ID_COLUMNS, *columns, *(missing_column(c) for c in columns), *meta])
    for v in vectors:
        vals = ["" if m else repr(float(x)) for x, m in zip(v.values, v.missing_mask)]
        flags = ["1" if m else "0" for m in v.missing_mask]
        writer.writerow([v.game_id, v.play_id, v.player_id, v.week, *vals, *flags, *(v.meta.get(m, "") for m in meta)])


def read_feature_csv(source: TextIO | str | os.PathLike) -> tuple[list[FeatureVector], list[str]]:
    """Read a feature CSV; returns the vectors and the feature column names."""
    if isinstance(source, (str, os.PathLike)):
        with open(source, encoding="utf-8", newline="") as fh:
            return read_feature_csv(fh)
    reader = csv.DictReader(source)
    header = reader.fieldnames or []
    for c in ID_COLUMNS:
        if c not in header:
            raise ValueError(f"feature file lacks column {c!r}")
    names = [c for c in header if c not in ID_COLUMNS and c not in META_COLUMNS and not c.endswith("__MISSING")]
    meta = [c for c in META_COLUMNS if c in header]
    vectors = []
    for row in reader:
        vals = np.array([float(row[c]) if row[c] != "" else np.nan for c in names])
        miss = np.array([row.get(missing_column(c), "0") == "1" for c in names]) | np.isnan(vals)
        vectors.append(
            FeatureVector(
                row["game_id"],
                row["play_id"],
                row["player_id"],
                int(row["week"]),
                vals,
                miss,
                {m: row[m] for m in meta if row[m] != ""},
            )
        )
    return vectors, names
