import io

import numpy as np
import pytest

from manzone.tracking import (
    ColumnMapping,
    IngestConfig,
    RowError,
    SchemaError,
    filter_pass_plays,
    load_config,
    parse_tracking_csv,
    select_cornerbacks,
    write_config,
    write_tracking_csv,
)
from manzone.synthetic import SimConfig, generate_corpus, ingest_config

from conftest import make_play, make_track, still

HEADER = "gameId,playId,nflId,frame.id,x,y,s,dir,event,team,position\n"


def minimal_csv(events=("ball_snap", "", "pass_forward"), direction=10.0):
    rows = [HEADER]
    for pid, team, pos in (("1", "offense", "WR"), ("2", "defense", "CB")):
        for f, ev in enumerate(events, start=1):
            rows.append(f"g1,p1,{pid},{f},{10 + f},{20},1.5,{direction},{ev},{team},{pos}\n")
    return "".join(rows)


def test_minimal_play():
    res = parse_tracking_csv(minimal_csv().encode())
    assert len(res.plays) == 1 and not res.rejects
    p = res.plays[0]
    assert (p.snap_frame, p.throw_frame) == (1, 3)
    assert p.key == ("g1", "p1")
    assert [t.player_id for t in p.tracks] == ["1", "2"]


def test_missing_pass_forward_rejected():
    res = parse_tracking_csv(minimal_csv(events=("ball_snap", "", "")).encode())
    assert res.plays == []
    assert [r.reason for r in res.rejects] == ["missing pass_forward"]


def test_throw_before_snap_rejected():
    res = parse_tracking_csv(minimal_csv(events=("pass_forward", "", "ball_snap")).encode())
    assert res.plays == [] and res.rejects[0].reason == "pass_forward not after ball_snap"


def test_direction_wraps():
    p = parse_tracking_csv(minimal_csv(direction=365.0).encode()).plays[0]
    assert p.tracks[0].direction[0] == pytest.approx(5.0)
    p = parse_tracking_csv(minimal_csv(direction=-90.0).encode()).plays[0]
    assert p.tracks[0].direction[0] == pytest.approx(270.0)


def test_first_event_occurrence_used():
    res = parse_tracking_csv(minimal_csv(events=("ball_snap", "ball_snap", "pass_forward")).encode())
    assert res.plays[0].snap_frame == 1


def test_out_of_bounds_clamped_and_reported():
    text = minimal_csv().replace("g1,p1,1,2,12,20", "g1,p1,1,2,125,20")
    res = parse_tracking_csv(text.encode())
    p = res.plays[0]
    assert p.tracks[0].x[1] == 120.0
    assert res.report.clamped_frames == {("g1", "p1"): 1}
    assert "frames clamped to field bounds: 1" in res.report.to_text()


def test_frame_intersection_trim():
    text = minimal_csv() + "g1,p1,2,4,14,20,1.5,10,,defense,CB\n"
    res = parse_tracking_csv(text.encode())
    p = res.plays[0]
    assert [list(t.frame_index) for t in p.tracks] == [[1, 2, 3], [1, 2, 3]]


def test_too_few_common_frames_rejected():
    text = HEADER + "g,p,1,1,1,1,0,0,ball_snap,offense,WR\ng,p,2,2,1,1,0,0,pass_forward,defense,CB\n"
    res = parse_tracking_csv(text.encode())
    assert res.plays == [] and len(res.rejects) == 1


def test_football_rows_skipped():
    text = minimal_csv() + "g1,p1,,1,50,20,0,0,ball_snap,football,\n"
    res = parse_tracking_csv(text.encode())
    assert len(res.plays) == 1 and res.report.rows_skipped == 1


def test_schema_and_row_errors():
    with pytest.raises(SchemaError):
        parse_tracking_csv(b"gameId,playId\n1,2\n")
    with pytest.raises(RowError, match="line 2"):
        parse_tracking_csv(minimal_csv().replace("g1,p1,1,1,11", "g1,p1,1,1,abc", 1).encode())


def test_empty_input():
    assert parse_tracking_csv(b"").plays == []


def test_custom_mapping_and_sides():
    text = minimal_csv().replace("team", "side").replace("offense", "home").replace("defense", "away")
    mapping = ColumnMapping()
    mapping.columns["team"] = "side"
    mapping.offense_values, mapping.defense_values = ("home",), ("away",)
    res = parse_tracking_csv(text.encode(), IngestConfig(mapping=mapping))
    assert [t.team_side for t in res.plays[0].tracks] == ["offense", "defense"]


def test_week_table(tmp_path):
    cfg = IngestConfig(game_weeks={"g1": 4})
    assert parse_tracking_csv(minimal_csv().encode(), cfg).plays[0].week == 4
    res = parse_tracking_csv(minimal_csv().encode(), IngestConfig(game_weeks={"other": 2}))
    assert res.plays == [] and "week" in res.rejects[0].reason
    path = tmp_path / "c.ini"
    write_config(IngestConfig(cornerback_positions=frozenset({"CB", "DB"}), game_weeks={"g1": 4}), path)
    back = load_config(path)
    assert back.game_weeks == {"g1": 4} and back.cornerback_positions == {"CB", "DB"}


def test_filter_pass_plays():
    assert filter_pass_plays([]) == []
    p = make_play([make_track(1, "offense", "WR", still(0, 0, 3)), make_track(2, "defense", "CB", still(1, 1, 3))], 0, 2)
    q = make_play([make_track(1, "offense", "WR", still(0, 0, 3))], 0, 2)
    q.throw_frame = None
    assert filter_pass_plays([p, q, p]) == [p, p]


def test_select_cornerbacks():
    positions = ["CB", "CB", "SS", "FS"]
    tracks = [make_track(10 + i, "defense", pos, still(0, i, 3)) for i, pos in enumerate(positions)]
    tracks.append(make_track(1, "offense", "WR", still(5, 5, 3)))
    play = make_play(tracks)
    assert select_cornerbacks(play) == ["10", "11"]
    assert select_cornerbacks(make_play(tracks[2:])) == []
    db = make_play([make_track(7, "defense", "DB", still(0, 0, 3)), tracks[-1]])
    assert select_cornerbacks(db, {"CB", "DB"}) == ["7"]


def test_round_trip_synthetic():
    corpus = generate_corpus(SimConfig(n_plays=8, weeks=2, rng_seed=3))
    cfg = ingest_config(corpus)
    buf = io.StringIO()
    write_tracking_csv([lp.play for lp in corpus], buf, cfg)
    res = parse_tracking_csv(buf.getvalue().encode(), cfg)
    assert not res.rejects
    by_key = {lp.play.key: lp.play for lp in corpus}
    assert len(res.plays) == len(by_key)
    assert all(p == by_key[p.key] for p in res.plays)
    for p in res.plays:
        assert p.snap_frame < p.throw_frame
        for t in p.tracks:
            assert np.array_equal(t.frame_index, p.frame_index)
            assert ((0 <= t.x) & (t.x <= 120) & (0 <= t.y) & (t.y <= 58)).all()
            assert ((0 <= t.direction) & (t.direction < 360)).all()
