import io

import numpy as np
import pytest

from manzone.evaluation import MAN, ZONE
from manzone.features import WINDOWS, extract_corpus_features
from manzone.reports import (
    aggregate_report,
    coverage_timeline,
    format_timeline,
    histograms_by_window,
    load_window_models,
    membership_histogram,
    predict_vectors,
    save_window_models,
    sliding_timeline,
    write_aggregate,
    write_histograms,
    write_predictions,
    write_timelines,
)
from manzone.synthetic import SimConfig, generate_corpus
from manzone.tracking import DEFENSE, OFFENSE

from conftest import make_play, make_track, still

POST_SNAP = ("SNAP_TO_MID", "MID_TO_THROW", "SNAP_TO_THROW", "THROW_TO_END")


def test_window_models_labeled(window_models):
    assert list(window_models) == list(WINDOWS)
    for w, m in window_models.items():
        assert m.metadata["window"] == w and len(m.feature_names) == 11
        assert sorted(m.metadata["semantic_labels"].values()) == [MAN, ZONE]


def test_timeline_probabilities_sum_to_one(window_models, small_corpus):
    for lp in small_corpus[:10]:
        for cb in lp.truth:
            tl = coverage_timeline(lp.play, cb, window_models)
            assert [e.window for e in tl.entries] == list(WINDOWS)
            for e in tl.entries:
                assert not e.missing
                assert e.p_man + e.p_zone == pytest.approx(1.0, abs=1e-12)


def test_noiseless_man_is_man_after_snap(window_models):
    corpus = generate_corpus(SimConfig(n_plays=20, man_fraction=1.0, noise_std=0.0, rng_seed=99))
    for lp in corpus:
        for cb in lp.truth:
            tl = coverage_timeline(lp.play, cb, window_models)
            assert all(tl.entry(w).p_man >= 0.9 for w in POST_SNAP)


def test_missing_window_marked(window_models):
    tracks = [make_track(1, OFFENSE, "WR", still(40, 10, 8)), make_track(2, DEFENSE, "CB", still(42, 11, 8))]
    play = make_play(tracks, snap=0, throw=4)  # nothing before the snap
    tl = coverage_timeline(play, "2", window_models)
    pre = tl.entry("PRE_SNAP")
    assert pre.missing and np.isnan(pre.p_man) and np.isnan(pre.p_zone)
    assert not tl.entry("SNAP_TO_THROW").missing
    buf = io.StringIO()
    write_timelines([tl], buf)
    row = buf.getvalue().splitlines()[1].split(",")
    assert row[3] == "PRE_SNAP" and row[5:] == ["", "", "1"]
    assert "missing" in format_timeline(tl)


def test_sliding_timeline(window_models, small_corpus):
    play = small_corpus[0].play
    cb = next(iter(small_corpus[0].truth))
    tl = sliding_timeline(play, cb, window_models)
    assert [e.frame for e in tl.entries] == play.frame_index.tolist()
    assert tl.entries[0].missing  # a single frame has no variance to speak of
    names = [e.window for e in tl.entries]
    assert names[0] == "PRE_SNAP" and names[-1] == "THROW_TO_END"
    for e in tl.entries:
        if not e.missing:
            assert e.p_man + e.p_zone == pytest.approx(1.0, abs=1e-12)


def test_window_model_persistence(window_models, tmp_path):
    save_window_models(window_models, tmp_path)
    back = load_window_models(tmp_path)
    assert all(back[w] == window_models[w] for w in WINDOWS)
    (tmp_path / "THROW_TO_END.json").unlink()
    with pytest.raises(FileNotFoundError):
        load_window_models(tmp_path)


def test_predictions_csv(window_models, small_vectors):
    from manzone.features import COLUMNS

    preds = predict_vectors(window_models["SNAP_TO_THROW"], small_vectors[:6], COLUMNS, window="SNAP_TO_THROW")
    assert len(preds) == 6
    buf = io.StringIO()
    write_predictions(preds, buf)
    header = buf.getvalue().splitlines()[0].split(",")
    assert header[:8] == ["game_id", "play_id", "player_id", "week", "p_man", "p_zone", "assigned_label", "window"]
    assert {"club", "quarter", "down"} <= set(header)


def label_rows(rng, n, p_man=0.6, groups=("1", "2", "3", "4"), key="quarter"):
    return [
        {"assigned_label": MAN if rng.random() < p_man else ZONE, key: str(rng.choice(groups))}
        for _ in range(n)
    ]


def test_quarter_shares_within_binomial_tolerance():
    rows = label_rows(np.random.default_rng(0), 4000)
    rep = aggregate_report(rows, "quarter")
    assert [g.group for g in rep.groups] == ["1", "2", "3", "4"]
    assert rep.total == len(rows)
    for g in rep.groups:
        assert abs(g.man_share - 0.6) < 4 * np.sqrt(0.24 / g.count)
        assert g.man_share + g.zone_share == pytest.approx(1.0)


def test_small_groups_flagged_and_player_sort():
    rows = [{"assigned_label": MAN, "player_id": "a"}] * 40
    rows += [{"assigned_label": ZONE, "player_id": "b"}] * 30 + [{"assigned_label": MAN, "player_id": "b"}] * 30
    rows += [{"assigned_label": MAN, "player_id": "c"}] * 55 + [{"assigned_label": ZONE, "player_id": "c"}] * 5
    rep = aggregate_report(rows, "player", min_count=50)
    assert [g.group for g in rep.groups] == ["a", "c", "b"]
    assert [g.insufficient for g in rep.groups] == [True, False, False]
    buf = io.StringIO()
    write_aggregate(rep, buf)
    assert "insufficient sample" in buf.getvalue()
    buf = io.StringIO()
    write_aggregate(rep, buf, top=10)
    assert [line.split(",")[0] for line in buf.getvalue().splitlines()[1:]] == ["c", "b"]
    with pytest.raises(ValueError):
        aggregate_report(rows, "stadium")


def test_histogram_end_bins():
    counts, edges = membership_histogram([0.0] * 7 + [1.0] * 3)
    assert len(counts) == 20 and edges[0] == 0 and edges[-1] == 1
    assert counts[0] == 7 and counts[-1] == 3 and counts[1:-1].sum() == 0


def test_histogram_flat_and_conserved():
    u = np.random.default_rng(1).uniform(size=20000)
    counts, _ = membership_histogram(u)
    assert counts.sum() == len(u)
    expected = len(u) / 20
    assert np.abs(counts - expected).max() < 5 * np.sqrt(expected)


def test_histograms_by_window_csv():
    rows = [{"p_zone": "0.1", "window": "PRE_SNAP"}, {"p_zone": "0.9", "window": "THROW_TO_END"}, {"p_zone": ""}]
    hists = histograms_by_window(rows)
    assert list(hists) == ["PRE_SNAP", "THROW_TO_END"]
    buf = io.StringIO()
    write_histograms(hists, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "window,bin_lo,bin_hi,x,y" and len(lines) == 41
    assert histograms_by_window([{"p_zone": "0.5"}])["ALL"][0].sum() == 1
