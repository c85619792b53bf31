"""Tracking-data ingest: CSV rows -> validated plays grouped by game and week."""
from __future__ import annotations

import configparser
import csv
import io
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, TextIO

import numpy as np

log = logging.getLogger(__name__)

FIELD_X = (0.0, 120.0)
FIELD_Y = (0.0, 58.0)

SNAP_EVENT = "ball_snap"
THROW_EVENT = "pass_forward"

OFFENSE = "offense"
DEFENSE = "defense"

# Logical field -> column name; defaults follow the 2019 Big Data Bowl tracking files.
DEFAULT_COLUMNS = {
    "game": "gameId",
    "play": "playId",
    "player": "nflId",
    "frame": "frame.id",
    "x": "x",
    "y": "y",
    "speed": "s",
    "direction": "dir",
    "event": "event",
    "team": "team",
    "position": "position",
}
REQUIRED_FIELDS = tuple(DEFAULT_COLUMNS)
# Optional pass-through metadata carried to predictions and reports.
OPTIONAL_COLUMNS = {"club": "club", "quarter": "quarter", "down": "down"}
OPTIONAL_FIELDS = tuple(OPTIONAL_COLUMNS)


class SchemaError(ValueError):
    """A mapped column is absent from the CSV header."""


class RowError(ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


def id_key(value: str):
    """Sort key for opaque ids: numeric ids compare as numbers, others lexically."""
    s = str(value)
    try:
        return (0, int(s), "")
    except ValueError:
        return (1, 0, s)


@dataclass
class ColumnMapping:
    columns: dict[str, str] = field(default_factory=lambda: {**DEFAULT_COLUMNS, **OPTIONAL_COLUMNS})
    offense_values: tuple[str, ...] = ("offense",)
    defense_values: tuple[str, ...] = ("defense",)

    def __getitem__(self, key: str) -> str:
        return self.columns[key]

    def get(self, key: str) -> str | None:
        return self.columns.get(key)


@dataclass
class IngestConfig:
    mapping: ColumnMapping = field(default_factory=ColumnMapping)
    cornerback_positions: frozenset[str] = frozenset({"CB"})
    game_weeks: dict[str, int] = field(default_factory=dict)

    def week_of(self, game_id: str) -> int | None:
        if not self.game_weeks:
            return 1
        return self.game_weeks.get(str(game_id))


def load_config(path: str | Path) -> IngestConfig:
    """Read an INI-style config with [columns], [sides], [cornerbacks] and [weeks] sections."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # keep column-name case
    with open(path, encoding="utf-8") as fh:
        parser.read_file(fh)
    columns = {**DEFAULT_COLUMNS, **OPTIONAL_COLUMNS}
    if parser.has_section("columns"):
        columns.update(parser["columns"])
    mapping = ColumnMapping(columns=columns)
    if parser.has_section("sides"):
        sides = parser["sides"]
        if "offense" in sides:
            mapping.offense_values = _split_list(sides["offense"])
        if "defense" in sides:
            mapping.defense_values = _split_list(sides["defense"])
    positions = frozenset({"CB"})
    if parser.has_section("cornerbacks"):
        positions = frozenset(_split_list(parser["cornerbacks"].get("positions", "CB")))
    weeks: dict[str, int] = {}
    if parser.has_section("weeks"):
        weeks = {game: int(week) for game, week in parser["weeks"].items()}
    return IngestConfig(mapping=mapping, cornerback_positions=positions, game_weeks=weeks)


def write_config(config: IngestConfig, path: str | Path) -> None:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    parser["columns"] = dict(config.mapping.columns)
    parser["sides"] = {
        "offense": ",".join(config.mapping.offense_values),
        "defense": ",".join(config.mapping.defense_values),
    }
    parser["cornerbacks"] = {"positions": ",".join(sorted(config.cornerback_positions))}
    parser["weeks"] = {g: str(w) for g, w in sorted(config.game_weeks.items(), key=lambda kv: id_key(kv[0]))}
    with open(path, "w", encoding="utf-8") as fh:
        parser.write(fh)


def _split_list(text: str) -> tuple[str, ...]:
    return tuple(v.strip() for v in text.split(",") if v.strip())


@dataclass(frozen=True)
class TrackedFrame:
    frame_index: int
    x: float
    y: float
    speed: float
    direction: float
    event: str | None = None


@dataclass(eq=False)
class PlayerTrack:
    """One player's frames within a play, stored column-wise."""

    player_id: str
    team_side: str
    position_code: str
    frame_index: np.ndarray
    x: np.ndarray
    y: np.ndarray
    speed: np.ndarray
    direction: np.ndarray
    events: tuple[str, ...] = ()
    club: str = ""

    def __post_init__(self):
        n = len(self.frame_index)
        if not self.events:
            self.events = ("",) * n
        for name in ("x", "y", "speed", "direction"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"track {self.player_id}: {name} length mismatch")

    def __len__(self) -> int:
        return len(self.frame_index)

    def frames(self) -> Iterator[TrackedFrame]:
        for i in range(len(self)):
            yield TrackedFrame(
                int(self.frame_index[i]),
                float(self.x[i]),
                float(self.y[i]),
                float(self.speed[i]),
                float(self.direction[i]),
                self.events[i] or None,
            )

    def take(self, keep: np.ndarray) -> "PlayerTrack":
        idx = np.flatnonzero(keep)
        return PlayerTrack(
            self.player_id,
            self.team_side,
            self.position_code,
            self.frame_index[idx],
            self.x[idx],
            self.y[idx],
            self.speed[idx],
            self.direction[idx],
            tuple(self.events[i] for i in idx),
            self.club,
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, PlayerTrack):
            return NotImplemented
        return (
            self.player_id == other.player_id
            and self.team_side == other.team_side
            and self.position_code == other.position_code
            and self.club == other.club
            and self.events == other.events
            and all(
                np.array_equal(getattr(self, n), getattr(other, n))
                for n in ("frame_index", "x", "y", "speed", "direction")
            )
        )


@dataclass(eq=False)
class Play:
    game_id: str
    play_id: str
    week: int
    tracks: list[PlayerTrack]
    snap_frame: int | None
    throw_frame: int | None
    meta: dict[str, str] = field(default_factory=dict)

    @property
    def key(self) -> tuple[str, str]:
        return (self.game_id, self.play_id)

    @property
    def frame_index(self) -> np.ndarray:
        return self.tracks[0].frame_index

    @property
    def n_frames(self) -> int:
        return len(self.tracks[0]) if self.tracks else 0

    def track(self, player_id: str) -> PlayerTrack:
        for t in self.tracks:
            if t.player_id == player_id:
                return t
        raise KeyError(player_id)

    def side(self, team_side: str) -> list[PlayerTrack]:
        return [t for t in self.tracks if t.team_side == team_side]

    def __eq__(self, other) -> bool:
        if not isinstance(other, Play):
            return NotImplemented
        return (
            (self.game_id, self.play_id, self.week, self.snap_frame, self.throw_frame)
            == (other.game_id, other.play_id, other.week, other.snap_frame, other.throw_frame)
            and self.meta == other.meta
            and self.tracks == other.tracks
        )


@dataclass(frozen=True)
class PlayCorpus:
    plays: tuple[Play, ...]
    week_index: dict[int, tuple[tuple[str, str], ...]]

    @classmethod
    def from_plays(cls, plays: Iterable[Play]) -> "PlayCorpus":
        plays = tuple(sorted(plays, key=lambda p: (id_key(p.game_id), id_key(p.play_id))))
        weeks: dict[int, list[tuple[str, str]]] = {}
        for p in plays:
            weeks.setdefault(p.week, []).append(p.key)
        return cls(plays, {w: tuple(keys) for w, keys in sorted(weeks.items())})

    @property
    def weeks(self) -> list[int]:
        return list(self.week_index)

    def __len__(self) -> int:
        return len(self.plays)

    def __iter__(self):
        return iter(self.plays)


@dataclass(frozen=True)
class Reject:
    game_id: str
    play_id: str
    reason: str


@dataclass
class QualityReport:
    rows_read: int = 0
    rows_skipped: int = 0
    plays_accepted: int = 0
    clamped_frames: dict[tuple[str, str], int] = field(default_factory=dict)
    trimmed_frames: dict[tuple[str, str], int] = field(default_factory=dict)
    rejects: list[Reject] = field(default_factory=list)

    def merge(self, other: "QualityReport") -> None:
        self.rows_read += other.rows_read
        self.rows_skipped += other.rows_skipped
        self.plays_accepted += other.plays_accepted
        self.clamped_frames.update(other.clamped_frames)
        self.trimmed_frames.update(other.trimmed_frames)
        self.rejects.extend(other.rejects)

    def to_text(self) -> str:
        lines = [
            f"rows read: {self.rows_read}",
            f"rows skipped (non-player team value): {self.rows_skipped}",
            f"plays accepted: {self.plays_accepted}",
            f"plays rejected: {len(self.rejects)}",
            f"frames clamped to field bounds: {sum(self.clamped_frames.values())}"
            f" (in {len(self.clamped_frames)} plays)",
            f"frames trimmed for track alignment: {sum(self.trimmed_frames.values())}",
        ]
        if self.clamped_frames:
            lines.append("")
            lines.append("clamped frames by play:")
            for (g, p), n in sorted(self.clamped_frames.items(), key=lambda kv: (id_key(kv[0][0]), id_key(kv[0][1]))):
                lines.append(f"  {g}/{p}: {n}")
        if self.rejects:
            lines.append("")
            lines.append("rejects:")
            for r in self.rejects:
                lines.append(f"  {r.game_id}/{r.play_id}: {r.reason}")
        return "\n".join(lines) + "\n"


@dataclass
class ParseResult:
    plays: list[Play]
    rejects: list[Reject]
    report: QualityReport


def _float(text: str, line: int, name: str) -> float:
    try:
        value = float(text)
    except (TypeError, ValueError):
        raise RowError(line, f"non-numeric {name} value {text!r}") from None
    if not np.isfinite(value):
        raise RowError(line, f"non-finite {name} value {text!r}")
    return value


def parse_tracking_csv(source: TextIO | bytes | str | Path, config: IngestConfig | None = None) -> ParseResult:
    """Parse tracking rows into plays.

    ``source`` may be a path, raw bytes, or an open text stream. Rows whose team
    value is neither an offense nor a defense value (e.g. the football) are skipped.
    """
    config = config or IngestConfig()
    mapping = config.mapping
    if isinstance(source, (str, Path)):
        with open(source, encoding="utf-8", newline="") as fh:
            return parse_tracking_csv(fh, config)
    if isinstance(source, bytes):
        source = io.StringIO(source.decode("utf-8"), newline="")

    reader = csv.DictReader(source)
    header = reader.fieldnames
    if header is None:  # empty input: nothing to parse, not a schema problem
        return ParseResult([], [], QualityReport())
    missing = [f"{k} -> {mapping[k]!r}" for k in REQUIRED_FIELDS if mapping.get(k) not in header]
    if missing:
        raise SchemaError("missing mapped column(s): " + ", ".join(missing))
    optional = {k: mapping.get(k) for k in OPTIONAL_FIELDS if mapping.get(k) in header}

    col = {k: mapping[k] for k in REQUIRED_FIELDS}
    side_of = {v: OFFENSE for v in mapping.offense_values}
    side_of.update({v: DEFENSE for v in mapping.defense_values})

    report = QualityReport()
    # (game, play) -> player -> list of row tuples
    raw: dict[tuple[str, str], dict[str, list]] = {}
    info: dict[tuple[str, str], dict[str, tuple[str, str, str]]] = {}
    play_meta: dict[tuple[str, str], dict[str, str]] = {}
    for row in reader:
        line = reader.line_num
        report.rows_read += 1
        side = side_of.get(row[col["team"]].strip())
        if side is None:
            report.rows_skipped += 1
            continue
        key = (row[col["game"]].strip(), row[col["play"]].strip())
        pid = row[col["player"]].strip()
        try:
            frame = int(float(row[col["frame"]]))
        except (TypeError, ValueError):
            raise RowError(line, f"non-numeric frame value {row[col['frame']]!r}") from None
        x = _float(row[col["x"]], line, "x")
        y = _float(row[col["y"]], line, "y")
        s = _float(row[col["speed"]], line, "speed")
        d = _float(row[col["direction"]], line, "direction") % 360.0
        if s < 0:
            raise RowError(line, f"negative speed {s}")
        event = (row[col["event"]] or "").strip()
        if event.upper() in ("NA", "NAN", "NONE"):
            event = ""
        raw.setdefault(key, {}).setdefault(pid, []).append((frame, x, y, s, d, event))
        club = row[optional["club"]].strip() if "club" in optional else ""
        info.setdefault(key, {}).setdefault(pid, (side, row[col["position"]].strip(), club))
        if key not in play_meta:
            play_meta[key] = {k: row[c].strip() for k, c in optional.items() if k != "club"}

    plays: list[Play] = []
    for key in sorted(raw, key=lambda k: (id_key(k[0]), id_key(k[1]))):
        play, reason = _assemble_play(key, raw[key], info[key], play_meta[key], config, report)
        if play is None:
            report.rejects.append(Reject(key[0], key[1], reason))
        else:
            plays.append(play)
    report.plays_accepted = len(plays)
    return ParseResult(plays, list(report.rejects), report)


def _assemble_play(key, rows_by_player, info_by_player, meta, config, report):
    game_id, play_id = key
    week = config.week_of(game_id)
    if week is None:
        return None, f"game {game_id} not in week table"

    tracks: list[PlayerTrack] = []
    n_clamped = 0
    for pid in sorted(rows_by_player, key=id_key):
        rows = sorted(rows_by_player[pid], key=lambda r: r[0])
        frames = np.array([r[0] for r in rows], dtype=np.int64)
        if np.any(np.diff(frames) == 0):
            return None, f"duplicate frame for player {pid}"
        x = np.array([r[1] for r in rows])
        y = np.array([r[2] for r in rows])
        cx = np.clip(x, *FIELD_X)
        cy = np.clip(y, *FIELD_Y)
        n_clamped += int(np.count_nonzero((cx != x) | (cy != y)))
        side, position, club = info_by_player[pid]
        tracks.append(
            PlayerTrack(
                pid,
                side,
                position,
                frames,
                cx,
                cy,
                np.array([r[3] for r in rows]),
                np.array([r[4] for r in rows]),
                tuple(r[5] for r in rows),
                club,
            )
        )
    if n_clamped:
        report.clamped_frames[key] = n_clamped

    if not any(t.team_side == OFFENSE for t in tracks) or not any(t.team_side == DEFENSE for t in tracks):
        return None, "needs at least one offensive and one defensive track"

    common = tracks[0].frame_index
    for t in tracks[1:]:
        common = np.intersect1d(common, t.frame_index)
    if len(common) < 2:
        return None, "fewer than 2 common frames across tracks"
    trimmed = 0
    aligned = []
    for t in tracks:
        keep = np.isin(t.frame_index, common)
        trimmed += len(t) - int(keep.sum())
        aligned.append(t if keep.all() else t.take(keep))
    if trimmed:
        report.trimmed_frames[key] = trimmed

    snap, throw = _event_frames(aligned)
    if snap is None:
        return None, "missing ball_snap"
    if throw is None:
        return None, "missing pass_forward"
    if snap >= throw:
        return None, "pass_forward not after ball_snap"
    return Play(game_id, play_id, week, aligned, snap, throw, dict(meta)), ""


def _event_frames(tracks: list[PlayerTrack]) -> tuple[int | None, int | None]:
    first: dict[str, int] = {}
    for t in tracks:
        for f, ev in zip(t.frame_index, t.events):
            if ev and (ev not in first or f < first[ev]):
                first[ev] = int(f)
    return first.get(SNAP_EVENT), first.get(THROW_EVENT)


def write_tracking_csv(plays: Iterable[Play], sink: TextIO, config: IngestConfig | None = None) -> None:
    """Serialize plays back to the tracking CSV layout read by :func:`parse_tracking_csv`."""
    config = config or IngestConfig()
    mapping = config.mapping
    side_value = {OFFENSE: mapping.offense_values[0], DEFENSE: mapping.defense_values[0]}
    plays = list(plays)
    meta_keys = [k for k in OPTIONAL_FIELDS if k != "club" and any(k in p.meta for p in plays)]
    has_club = any(t.club for p in plays for t in p.tracks)
    fields = [mapping[k] for k in REQUIRED_FIELDS]
    if has_club:
        fields.append(mapping.get("club") or "club")
    fields.extend(mapping.get(k) or k for k in meta_keys)
    writer = csv.writer(sink, lineterminator="\n")
    writer.writerow(fields)
    for p in plays:
        for t in p.tracks:
            for i in range(len(t)):
                row = [
                    p.game_id,
                    p.play_id,
                    t.player_id,
                    int(t.frame_index[i]),
                    repr(float(t.x[i])),
                    repr(float(t.y[i])),
                    repr(float(t.speed[i])),
                    repr(float(t.direction[i])),
                    t.events[i],
                    side_value[t.team_side],
                    t.position_code,
                ]
                if has_club:
                    row.append(t.club)
                row.extend(p.meta.get(k, "") for k in meta_keys)
                writer.writerow(row)


def filter_pass_plays(plays: Iterable[Play]) -> list[Play]:
    return [p for p in plays if p.snap_frame is not None and p.throw_frame is not None]


def select_cornerbacks(play: Play, positions: Iterable[str] = ("CB",)) -> list[str]:
    positions = frozenset(positions)
    return [t.player_id for t in play.tracks if t.team_side == DEFENSE and t.position_code in positions]


def load_corpus(paths: Iterable[str | Path], config: IngestConfig | None = None) -> tuple[PlayCorpus, QualityReport]:
    config = config or IngestConfig()
    report = QualityReport()
    plays: list[Play] = []
    for path in paths:
        result = parse_tracking_csv(path, config)
        report.merge(result.report)
        plays.extend(filter_pass_plays(result.plays))
    return PlayCorpus.from_plays(plays), report
