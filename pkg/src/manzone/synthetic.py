"""Synthetic pass plays with known man / zone cornerback assignments.

Receivers run one of four route templates from the line of scrimmage. A man
cornerback copies his receiver's path ``man_lag`` frames late from a fixed
alignment offset; a zone cornerback drops toward a landmark and only drifts
toward receivers that enter his area. Offense attacks toward +x.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .evaluation import MAN, ZONE, Partition
from .features import COLUMNS, WINDOWS, FeatureVector, sort_key
from .tracking import (
    DEFENSE,
    OFFENSE,
    SNAP_EVENT,
    THROW_EVENT,
    IngestConfig,
    Play,
    PlayerTrack,
    id_key,
    write_config,
    write_tracking_csv,
)

FIELD_WIDTH = 160.0 / 3.0  # 53.3 yards, inside the 58-yard ingest bound
MIDFIELD_Y = FIELD_WIDTH / 2.0
CLUBS = (
    "ARI ATL BAL BUF CAR CHI CIN CLE DAL DEN DET GB HOU IND JAX KC "
    "LAC LAR MIA MIN NE NO NYG NYJ OAK PHI PIT SEA SF TB TEN WAS"
).split()
ROUTES = ("straight", "out", "in", "curl")

# roster slots within a club
_CB_SLOTS = (1, 2, 3, 4)
_SAFETY_SLOTS = (11, 12)
_LB_SLOTS = (21, 22)
_QB, _RB = 31, 32
_WR_SLOTS = (41, 42, 43, 44, 45)


@dataclass(frozen=True)
class SimConfig:
    n_plays: int = 600
    man_fraction: float = 0.6
    n_receivers: int = 3
    frame_rate: float = 10.0
    presnap_frames: tuple[int, int] = (10, 20)
    throw_delay_frames: tuple[int, int] = (25, 45)  # 2.5-4.5 s after the snap
    post_throw_frames: tuple[int, int] = (8, 15)
    noise_std: float = 0.3
    noise_corr: float = 0.9  # frame-to-frame correlation of positional noise
    man_lag: int = 3
    zone_radius: float = 6.0
    hybrid_rate: float = 0.15  # share of zone corners that converge on a lone receiver
    disguise_rate: float = 0.0  # share of zone corners that line up in press before dropping
    weeks: int = 6
    plays_per_game: int = 25
    rng_seed: int = 2017

    def __post_init__(self):
        if self.n_plays < 1 or self.weeks < 1 or self.plays_per_game < 1:
            raise ValueError("counts must be positive")
        if not 2 <= self.n_receivers <= len(_WR_SLOTS):
            raise ValueError(f"n_receivers must be in 2..{len(_WR_SLOTS)}")
        for name in ("man_fraction", "hybrid_rate", "disguise_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.noise_std < 0 or self.man_lag < 0 or self.zone_radius <= 0:
            raise ValueError("noise_std and man_lag must be >= 0, zone_radius > 0")


@dataclass
class LabeledPlay:
    play: Play
    truth: dict[str, str]  # cornerback id -> MAN / ZONE
    behavior: dict[str, str] = field(default_factory=dict)  # man / zone / hybrid / disguised


def _player_id(club: int, slot: int) -> str:
    return str(10000 + 100 * club + slot)


def _ar1_noise(rng, n: int, std: float, corr: float) -> np.ndarray:
    """Stationary AR(1) noise in 2-D with marginal standard deviation ``std``."""
    if std == 0:
        return np.zeros((n, 2))
    eps = rng.normal(0.0, std * np.sqrt(1 - corr**2), size=(n, 2))
    out = np.empty((n, 2))
    out[0] = rng.normal(0.0, std, size=2)
    for t in range(1, n):
        out[t] = corr * out[t - 1] + eps[t]
    return out


def _route(rng, start: np.ndarray, n: int, snap: int, kind: str) -> np.ndarray:
    """Receiver path: stationary before the snap, then a stem and a break."""
    toward_middle = np.sign(MIDFIELD_Y - start[1]) or 1.0
    speed = rng.uniform(0.65, 0.85)  # yards per frame
    stem = rng.uniform(5.0, 24.0)
    if kind == "straight":
        legs = [(np.array([1.0, rng.uniform(-0.08, 0.08)]), np.inf)]
    elif kind == "out":
        ang = np.deg2rad(rng.uniform(20, 90))
        legs = [(np.array([1.0, 0.0]), stem), (np.array([np.cos(ang), -toward_middle * np.sin(ang)]), np.inf)]
    elif kind == "in":
        ang = np.deg2rad(rng.uniform(20, 90))
        legs = [(np.array([1.0, 0.0]), stem), (np.array([np.cos(ang), toward_middle * np.sin(ang)]), np.inf)]
    else:  # curl: run the stem, come back a little, then slide inside into the open window
        back = rng.uniform(2.0, 3.0)
        legs = [
            (np.array([1.0, 0.0]), stem),
            (np.array([-0.95, 0.3 * toward_middle]), back),
            (np.array([0.0, 0.6 * toward_middle]), np.inf),
        ]
    lo_y, hi_y = 3.0, FIELD_WIDTH - 3.0
    pos = np.empty((n, 2))
    pos[: snap + 1] = start
    p = start.astype(float).copy()
    leg, used = 0, 0.0
    for t in range(snap + 1, n):
        step = speed
        while step > 0:
            direction, length = legs[leg]
            take = min(step, length - used)
            p = p + direction * take
            used += take
            step -= take
            if used >= length:
                leg, used = leg + 1, 0.0
        if not lo_y <= p[1] <= hi_y:  # sideline: turn upfield
            p[1] = min(max(p[1], lo_y), hi_y)
            legs = legs[:leg] + [(np.array([1.0, 0.0]), np.inf)]
            used = 0.0
        if p[0] > 110.0:  # back line: work across the field
            p[0] = 110.0
            legs = legs[:leg] + [(np.array([0.0, toward_middle]), np.inf)]
            used = 0.0
        pos[t] = p
    return pos


def _zone_path(rng, start, anchor, receivers, n, snap, pull: float, reach: float, pull_from: int = 0):
    """Drop toward ``anchor``; drift toward the nearest receiver only inside ``reach`` yards
    and from frame ``pull_from`` on."""
    pos = np.empty((n, 2))
    pos[: snap + 1] = start
    p = start.astype(float).copy()
    drift = np.zeros(2)
    for t in range(snap + 1, n):
        to_anchor = anchor - p
        v = 0.18 * to_anchor
        sp = np.hypot(*v)
        if sp > 0.55:
            v *= 0.55 / sp
        near = receivers[:, t] - p
        dist = np.hypot(near[:, 0], near[:, 1])
        j = int(np.argmin(dist))
        if t >= pull_from and dist[j] < reach:
            v = v + pull * near[j]
        drift = 0.8 * drift + rng.normal(0.0, 0.04, size=2)
        p = p + v + drift
        pos[t] = p
    return pos


def _kinematics(pos: np.ndarray, frame_rate: float) -> tuple[np.ndarray, np.ndarray]:
    """Speed (yd/s) and direction of motion (degrees clockwise from +y) from positions."""
    vel = np.diff(pos, axis=0, prepend=pos[:1]) * frame_rate
    vel[0] = vel[1] if len(vel) > 1 else 0.0
    speed = np.hypot(vel[:, 0], vel[:, 1])
    direction = np.mod(np.degrees(np.arctan2(vel[:, 0], vel[:, 1])), 360.0)
    return speed, direction


def _simulate_play(rng, cfg: SimConfig, index: int) -> LabeledPlay:
    week = index % cfg.weeks + 1
    nth_in_week = index // cfg.weeks
    game_no = nth_in_week // cfg.plays_per_game
    game_id = str(2017090000 + 100 * week + game_no)
    play_id = str(index + 1)

    n_pre = int(rng.integers(cfg.presnap_frames[0], cfg.presnap_frames[1] + 1))
    n_route = int(rng.integers(cfg.throw_delay_frames[0], cfg.throw_delay_frames[1] + 1))
    n_post = int(rng.integers(cfg.post_throw_frames[0], cfg.post_throw_frames[1] + 1))
    snap, throw = n_pre, n_pre + n_route
    n = throw + n_post + 1

    off_club, def_club = (int(c) for c in rng.choice(len(CLUBS), size=2, replace=False))
    los = rng.uniform(30.0, 70.0)

    # receivers: two wide, the rest in the slot
    wide = [rng.uniform(6.0, 12.0), FIELD_WIDTH - rng.uniform(6.0, 12.0)]
    slots = [rng.uniform(16.0, 21.0) if i % 2 == 0 else FIELD_WIDTH - rng.uniform(16.0, 21.0) for i in range(cfg.n_receivers - 2)]
    wr_y = wide + slots
    wr_pos = np.stack(
        [_route(rng, np.array([los - 1.0, y]), n, snap, ROUTES[rng.integers(len(ROUTES))]) for y in wr_y]
    )

    paths: list[tuple[str, str, str, np.ndarray, int]] = []  # id, side, position, path, club
    for slot, path in zip(_WR_SLOTS, wr_pos):
        paths.append((_player_id(off_club, slot), OFFENSE, "WR", path, off_club))
    qb = np.tile([los - 5.0, MIDFIELD_Y], (n, 1))
    qb[snap:, 0] -= np.minimum(np.arange(n - snap) * 0.4, 5.0)
    paths.append((_player_id(off_club, _QB), OFFENSE, "QB", qb, off_club))
    rb = np.tile([los - 6.0, MIDFIELD_Y + 2.0], (n, 1))
    rb_dir = rng.choice([-1.0, 1.0])
    rb[snap:, 1] += rb_dir * np.minimum(np.arange(n - snap) * 0.5, 15.0)
    rb[snap:, 0] += np.minimum(np.arange(n - snap) * 0.2, 5.0)
    paths.append((_player_id(off_club, _RB), OFFENSE, "RB", rb, off_club))

    for slot, y in zip(_SAFETY_SLOTS, (MIDFIELD_Y - 9.0, MIDFIELD_Y + 9.0)):
        start = np.array([los + rng.uniform(11.0, 14.0), y + rng.uniform(-2.0, 2.0)])
        s = np.tile(start, (n, 1))
        s[snap:, 0] += np.minimum(np.arange(n - snap) * 0.15, 5.0)
        paths.append((_player_id(def_club, slot), DEFENSE, "FS" if slot == _SAFETY_SLOTS[0] else "SS", s, def_club))
    for slot, y in zip(_LB_SLOTS, (MIDFIELD_Y - 4.0, MIDFIELD_Y + 4.0)):
        start = np.array([los + rng.uniform(4.0, 6.0), y])
        s = np.tile(start, (n, 1))
        s[snap:, 0] += np.minimum(np.arange(n - snap) * 0.2, 6.0)
        paths.append((_player_id(def_club, slot), DEFENSE, "LB", s, def_club))

    truth: dict[str, str] = {}
    behavior: dict[str, str] = {}
    corner_slots = sorted(int(s) for s in rng.choice(_CB_SLOTS, size=2, replace=False))
    for side, slot in enumerate(corner_slots):
        cb_id = _player_id(def_club, slot)
        target = wr_pos[side]
        inside = np.sign(MIDFIELD_Y - target[0, 1]) or 1.0
        is_man = rng.random() < cfg.man_fraction
        press = np.array([rng.uniform(1.0, 2.5), inside * rng.uniform(0.0, 1.0)])
        if is_man:
            lagged = np.concatenate([np.repeat(target[:1], cfg.man_lag, axis=0), target])[:n]
            path = lagged + press
            kind = "man"
        else:
            roll = rng.random()
            kind = "disguised" if roll < cfg.disguise_rate else "zone"
            if kind == "zone" and rng.random() < cfg.hybrid_rate:
                kind = "hybrid"
            if kind == "disguised":
                start = target[0] + press
            else:
                start = target[0] + np.array([rng.uniform(6.0, 9.0), inside * rng.uniform(0.5, 2.0)])
            if rng.random() < 0.7:  # deep third
                anchor = np.array([los + rng.uniform(12.0, 18.0), target[0, 1] + inside * rng.uniform(0.0, 4.0)])
            else:  # flat
                anchor = np.array([los + rng.uniform(3.0, 6.0), target[0, 1] + inside * rng.uniform(-1.0, 2.0)])
            if kind == "hybrid":  # holds the zone early, then jumps the lone receiver
                mid = (snap + throw) // 2
                path = _zone_path(rng, start, anchor, wr_pos, n, snap, 0.15, 2.5 * cfg.zone_radius, pull_from=mid)
            else:
                path = _zone_path(rng, start, anchor, wr_pos, n, snap, 0.04, cfg.zone_radius)
        truth[cb_id] = MAN if is_man else ZONE
        behavior[cb_id] = kind
        paths.append((cb_id, DEFENSE, "CB", path, def_club))

    frames = np.arange(1, n + 1, dtype=np.int64)
    events = [""] * n
    events[snap] = SNAP_EVENT
    events[throw] = THROW_EVENT
    tracks = []
    for pid, side, position, path, club in paths:
        noisy = path + _ar1_noise(rng, n, cfg.noise_std, cfg.noise_corr)
        noisy[:, 0] = np.clip(noisy[:, 0], 0.0, 120.0)
        noisy[:, 1] = np.clip(noisy[:, 1], 0.0, FIELD_WIDTH)
        speed, direction = _kinematics(noisy, cfg.frame_rate)
        tracks.append(
            PlayerTrack(pid, side, position, frames.copy(), noisy[:, 0], noisy[:, 1], speed, direction, tuple(events), CLUBS[club])
        )
    quarter = int(rng.choice([1, 2, 3, 4, 5], p=[0.245, 0.245, 0.245, 0.245, 0.02]))
    down = int(rng.choice([1, 2, 3, 4], p=[0.40, 0.33, 0.25, 0.02]))
    tracks.sort(key=lambda t: id_key(t.player_id))
    play = Play(game_id, play_id, week, tracks, int(frames[snap]), int(frames[throw]), {"quarter": str(quarter), "down": str(down)})
    return LabeledPlay(play, truth, behavior)


def generate_corpus(config: SimConfig | None = None) -> list[LabeledPlay]:
    config = config or SimConfig()
    root = np.random.SeedSequence(config.rng_seed)
    # one child seed per play so a play does not depend on how many plays precede it
    return [_simulate_play(np.random.default_rng(s), config, i) for i, s in enumerate(root.spawn(config.n_plays))]


def truth_partition(corpus: list[LabeledPlay]) -> Partition:
    if not corpus:
        raise ValueError("empty corpus")
    items = sorted(
        ((lp.play.game_id, lp.play.play_id, cb), lab) for lp in corpus for cb, lab in lp.truth.items()
    )
    items.sort(key=lambda kv: sort_key(kv[0]))
    return Partition.from_labels([lab for _, lab in items], [k for k, _ in items])


def truth_labels(corpus: list[LabeledPlay]) -> dict[tuple[str, str, str], str]:
    return {(lp.play.game_id, lp.play.play_id, cb): lab for lp in corpus for cb, lab in lp.truth.items()}


def ingest_config(corpus: list[LabeledPlay]) -> IngestConfig:
    return IngestConfig(game_weeks={lp.play.game_id: lp.play.week for lp in corpus})


def write_corpus(corpus: list[LabeledPlay], directory: str | Path) -> dict[str, Path]:
    """Write tracking.csv, truth.csv and config.ini into ``directory``."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"tracking": out / "tracking.csv", "truth": out / "truth.csv", "config": out / "config.ini"}
    config = ingest_config(corpus)
    with open(paths["tracking"], "w", encoding="utf-8", newline="") as fh:
        write_tracking_csv([lp.play for lp in corpus], fh, config)
    with open(paths["truth"], "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["game_id", "play_id", "player_id", "label", "behavior"])
        for lp in corpus:
            for cb in sorted(lp.truth, key=int):
                w.writerow([lp.play.game_id, lp.play.play_id, cb, lp.truth[cb], lp.behavior.get(cb, "")])
    write_config(config, paths["config"])
    return paths


def read_truth_csv(path: str | Path) -> dict[tuple[str, str, str], str]:
    with open(path, encoding="utf-8", newline="") as fh:
        return {(r["game_id"], r["play_id"], r["player_id"]): r["label"] for r in csv.DictReader(fh)}


def planted_feature_vectors(
    n_per_week: int = 500,
    weeks: int = 6,
    signal: dict[str, float] | None = None,
    man_fraction: float = 0.6,
    rng_seed: int = 7,
) -> tuple[list[FeatureVector], dict[tuple[str, str, str], str]]:
    """Feature vectors that are pure noise except for planted class shifts.

    ``signal`` maps column name -> shift (in noise standard deviations) applied
    to ZONE rows. Default plants a strong shift in THROW_TO_END__OFF_DIR_VAR and
    weaker ones in the other OFF_DIR_VAR windows.
    """
    if signal is None:
        signal = {f"{w}__OFF_DIR_VAR": 1.5 for w in WINDOWS}
        signal["THROW_TO_END__OFF_DIR_VAR"] = 8.0
    unknown = set(signal) - set(COLUMNS)
    if unknown:
        raise ValueError(f"unknown columns {sorted(unknown)}")
    rng = np.random.default_rng(rng_seed)
    shift = np.array([signal.get(c, 0.0) for c in COLUMNS])
    vectors, truth = [], {}
    for week in range(1, weeks + 1):
        for i in range(n_per_week):
            zone = rng.random() >= man_fraction
            values = rng.normal(size=len(COLUMNS)) + (shift if zone else 0.0)
            key = (str(2017090000 + 100 * week), str(week * 10000 + i + 1), "10001")
            vectors.append(FeatureVector(*key, week, values, np.zeros(len(COLUMNS), dtype=bool)))
            truth[key] = ZONE if zone else MAN
    vectors.sort(key=lambda v: sort_key(v.key))
    return vectors, truth

