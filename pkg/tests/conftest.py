from __future__ import annotations

import numpy as np
import pytest

from manzone.features import extract_corpus_features
from manzone.synthetic import SimConfig, generate_corpus
from manzone.tracking import DEFENSE, OFFENSE, Play, PlayerTrack

ACCEPTANCE: list[tuple[int, str]] = []  # filled by test_acceptance.record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)


def make_track(pid, side, pos, xy, speed=None, direction=None, frames=None, club=""):
    xy = np.asarray(xy, dtype=float)
    n = len(xy)
    frames = np.arange(n, dtype=np.int64) if frames is None else np.asarray(frames, dtype=np.int64)
    speed = np.zeros(n) if speed is None else np.asarray(speed, dtype=float)
    direction = np.zeros(n) if direction is None else np.asarray(direction, dtype=float)
    return PlayerTrack(str(pid), side, pos, frames, xy[:, 0].copy(), xy[:, 1].copy(), speed, direction, club=club)


def make_play(tracks, snap=0, throw=None, game="1", play="1", week=1, meta=None):
    throw = tracks[0].frame_index[-1] if throw is None else throw
    return Play(game, play, week, list(tracks), int(snap), int(throw), dict(meta or {}))


def still(x, y, n):
    return np.tile([x, y], (n, 1))


def random_play(rng, n_frames=5, n_off=3, n_def=3):
    """Random small play; defensive player "100" is the cornerback."""
    tracks = []
    for k in range(n_off):
        tracks.append(
            make_track(200 + k, OFFENSE, "WR", rng.uniform([0, 0], [120, 58], size=(n_frames, 2)),
                       rng.uniform(0, 10, n_frames), rng.uniform(0, 360, n_frames))
        )
    for k in range(n_def):
        tracks.append(
            make_track(100 + k, DEFENSE, "CB" if k == 0 else "SS", rng.uniform([0, 0], [120, 58], size=(n_frames, 2)),
                       rng.uniform(0, 10, n_frames), rng.uniform(0, 360, n_frames))
        )
    return make_play(tracks, snap=1, throw=3)


@pytest.fixture(scope="session")
def small_corpus():
    return generate_corpus(SimConfig(n_plays=120, weeks=3, rng_seed=11))


@pytest.fixture(scope="session")
def small_vectors(small_corpus):
    return extract_corpus_features([lp.play for lp in small_corpus])


@pytest.fixture(scope="session")
def window_models():
    from manzone.gmm import FitConfig
    from manzone.reports import fit_window_models

    corpus = generate_corpus(SimConfig(n_plays=300, rng_seed=3))
    return fit_window_models(extract_corpus_features([lp.play for lp in corpus]), FitConfig(n_restarts=3))
