"""Acceptance suite: one test per criterion, each recording a PASS/FAIL line.

The lines are echoed in the pytest terminal summary (see conftest.py) so a plain
``pytest`` run shows the verdict of every criterion at a glance.
"""
import contextlib
import csv
import hashlib
import io
import time

import numpy as np
import pytest

import oracles
from conftest import ACCEPTANCE, random_play
from manzone.cli import main
from manzone.evaluation import MAN, ZONE, ari, pair_counts
from manzone.features import ANGULAR, COLUMNS, FEATURES, FeatureVector, build_windows, compute_features, write_feature_csv
from manzone.gmm import FitConfig, fit
from manzone.synthetic import planted_feature_vectors, read_truth_csv

pytestmark = pytest.mark.acceptance


def record(number, ok, detail, seconds, limit):
    ok = ok and seconds < limit
    budget = f"limit {limit:.0f}s" if np.isfinite(limit) else "no limit"
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} | {detail} | {seconds:.1f}s ({budget})"
    ACCEPTANCE.append((number, line))
    print(line)
    assert ok, line


def cli(*argv):
    out = io.StringIO()
    with contextlib.redirect_stdout(out):
        code = main([str(a) for a in argv])
    assert code == 0, f"manzone {' '.join(map(str, argv))} exited {code}"
    return out.getvalue()


def csv_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


# --- shared CLI pipeline for criteria 4-6 (and their reruns for 9) ----------------------


def planted_csv(path):
    """Planted OFF_DIR_VAR corpus with an appended pure-noise column."""
    vectors, _ = planted_feature_vectors()
    noise = np.random.default_rng(5).normal(size=len(vectors))
    with_noise = [
        FeatureVector(v.game_id, v.play_id, v.player_id, v.week, np.append(v.values, z), np.append(v.missing_mask, False))
        for v, z in zip(vectors, noise)
    ]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        write_feature_csv(with_noise, fh, columns=(*COLUMNS, "NOISE"))


def run_pipeline(root):
    """Criteria 4-6 artifacts from the command line, with per-stage timings."""
    t = {}
    sim, feats = root / "sim", root / "features.csv"

    start = time.perf_counter()
    cli("simulate", "--output", sim)
    cli("extract", "--input", sim / "tracking.csv", "--config", sim / "config.ini", "--output", feats)
    cli("fit", "--input", feats, "--g", 2, "--output", root / "model.json")
    cli("predict", "--input", feats, "--model", root / "model.json", "--output", root / "predictions.csv")
    t[4] = time.perf_counter() - start

    start = time.perf_counter()
    select_out = cli("select-g", "--input", feats, "--g-min", 2, "--g-max", 9, "--output", root / "select")
    (root / "select" / "stdout.txt").write_text(select_out)
    t[5] = time.perf_counter() - start

    start = time.perf_counter()
    planted_csv(root / "planted.csv")
    cli("influence", "--input", root / "planted.csv", "--g", 2, "--output", root / "influence")
    t[6] = time.perf_counter() - start

    artifacts = [
        sim / "tracking.csv", sim / "truth.csv", feats, root / "model.json", root / "predictions.csv",
        root / "select" / "cv_ari.csv", root / "select" / "cv_ari_series.csv", root / "select" / "stdout.txt",
        root / "planted.csv", root / "influence" / "influence.csv", root / "influence" / "influence_series.csv",
    ]
    return {"root": root, "times": t, "hashes": {p.relative_to(root).as_posix(): sha(p) for p in artifacts}}


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    return run_pipeline(tmp_path_factory.mktemp("run1"))


# --- criteria ---------------------------------------------------------------------------


def test_criterion_1_ari_oracle():
    start = time.perf_counter()
    rng = np.random.default_rng(101)
    worst, mismatched_counts, checked = 0.0, 0, 0
    for _ in range(10_000):
        n = int(rng.integers(2, 31))
        p = rng.integers(0, int(rng.integers(1, 6)), n).tolist()
        q = rng.integers(0, int(rng.integers(1, 6)), n).tolist()
        c = pair_counts(p, q)
        mismatched_counts += (c.a, c.b, c.c, c.d) != oracles.pair_counts(p, q)
        ref = oracles.hubert_arabie(p, q)
        if ref is not None:
            worst = max(worst, abs(ari(p, q) - ref))
            checked += 1
    ok = mismatched_counts == 0 and worst < 1e-12
    record(1, ok, f"pair-count mismatches {mismatched_counts}, max |dARI| {worst:.2e} over {checked} defined pairs",
           time.perf_counter() - start, 30)


def test_criterion_2_ari_null():
    start = time.perf_counter()
    rng = np.random.default_rng(202)
    vals = [ari(rng.integers(0, 2, 50), rng.integers(0, 2, 50)) for _ in range(1000)]
    mean = float(np.mean(vals))
    record(2, -0.02 <= mean <= 0.02, f"mean null ARI {mean:+.4f}", time.perf_counter() - start, 60)


def test_criterion_3_em_correctness():
    start = time.perf_counter()
    rng = np.random.default_rng(303)
    x = np.concatenate([rng.normal(-10, 0.1, 200), rng.normal(10, 0.1, 200)])[:, None]
    m = fit(x, FitConfig(n_components=2))
    err = float(np.abs(np.sort(m.raw_means[:, 0]) - [-10, 10]).max())
    worst_drop = 0.0
    for trace in m.traces:
        seg = []
        for _, ll, reseeded in trace:
            if reseeded:
                seg = []
            if seg:
                worst_drop = max(worst_drop, seg[-1] - ll)
            seg.append(ll)
    ok = err < 0.1 and worst_drop <= 1e-8
    record(3, ok, f"max mean error {err:.4f}, largest log-likelihood drop {worst_drop:.1e} over {len(m.traces)} restarts",
           time.perf_counter() - start, 10)


def test_criterion_4_end_to_end(pipeline):
    root = pipeline["root"]
    truth = read_truth_csv(root / "sim" / "truth.csv")
    preds = csv_rows(root / "predictions.csv")
    keys = [(r["game_id"], r["play_id"], r["player_id"]) for r in preds]
    assigned = [r["assigned_label"] for r in preds]
    true = [truth[k] for k in keys]
    score = ari(assigned, true)
    agree = float(np.mean([a == b for a, b in zip(assigned, true)]))
    ok = len(preds) == 1200 and score >= 0.8 and agree >= 0.9 and set(assigned) == {MAN, ZONE}
    record(4, ok, f"ARI vs truth {score:.3f}, MAN/ZONE label agreement {agree:.3f}", pipeline["times"][4], 180)


def test_criterion_5_select_g(pipeline):
    root = pipeline["root"] / "select"
    table = {int(r["G"]): float(r["mean_ari"]) for r in csv_rows(root / "cv_ari.csv")}
    printed = "G* = 2" in (root / "stdout.txt").read_text()
    runner_up = max(v for g, v in table.items() if g != 2)
    ok = printed and sorted(table) == list(range(2, 10)) and table[2] >= 0.9 and table[2] - runner_up >= 0.1
    shape = " ".join(f"{g}:{v:.3f}" for g, v in sorted(table.items()))
    record(5, ok, f"printed G*=2 {printed}; mean ARI by G {shape}; margin {table[2] - runner_up:.3f}",
           pipeline["times"][5], 1200)


def test_criterion_6_influence(pipeline):
    rows = csv_rows(pipeline["root"] / "influence" / "influence.csv")
    top = rows[0]
    noise = float(next(r for r in rows if r["feature"] == "NOISE")["influence"])
    ok = top["feature"].endswith("__OFF_DIR_VAR") and float(top["influence"]) > 0 and abs(noise) < 0.05
    record(6, ok, f"top {top['feature']} {float(top['influence']):+.4f}, NOISE {noise:+.4f}", pipeline["times"][6], 1200)


def test_criterion_7_feature_oracle():
    start = time.perf_counter()
    rng = np.random.default_rng(707)
    worst_rel, worst_ang, cases = 0.0, 0.0, 0
    for _ in range(1000):
        play = random_play(rng, n_frames=5, n_off=3, n_def=3)
        for w in build_windows(play):
            if w.missing:
                continue
            values, _ = compute_features(play, "100", w)
            ref = oracles.features(play, "100", w.start_frame, w.end_frame)
            for i, name in enumerate(FEATURES):
                d = abs(values[i] - ref[name])
                if name in ANGULAR:
                    worst_ang = max(worst_ang, d)
                elif d > 0:
                    worst_rel = max(worst_rel, d / abs(ref[name]) if ref[name] else np.inf)
            cases += 1
    ok = worst_rel <= 1e-9 and worst_ang <= 1e-6
    record(7, ok, f"{cases} windows, max relative error {worst_rel:.1e}, max angular error {worst_ang:.1e}",
           time.perf_counter() - start, 30)


def test_criterion_8_disguise_timeline(tmp_path):
    start = time.perf_counter()
    cli("simulate", "--output", tmp_path / "train")
    cli("extract", "--input", tmp_path / "train" / "tracking.csv", "--config", tmp_path / "train" / "config.ini",
        "--output", tmp_path / "train.csv")
    cli("fit", "--input", tmp_path / "train.csv", "--per-window", "--output", tmp_path / "models")
    cli("simulate", "--output", tmp_path / "dis", "--n-plays", 100, "--man-fraction", 0, "--disguise-rate", 1, "--seed", 99)
    cli("timeline", "--input", tmp_path / "dis" / "tracking.csv", "--config", tmp_path / "dis" / "config.ini",
        "--model", tmp_path / "models", "--output", tmp_path / "timeline.csv", "--show", 0)
    by_cb = {}
    for r in csv_rows(tmp_path / "timeline.csv"):
        by_cb.setdefault((r["game_id"], r["play_id"], r["player_id"]), {})[r["window"]] = r
    hits = [
        float(w["PRE_SNAP"]["p_man"]) > 0.5 and float(w["THROW_TO_END"]["p_zone"]) > 0.8
        for w in by_cb.values()
    ]
    frac = float(np.mean(hits))
    record(8, len(hits) == 200 and frac >= 0.8, f"{sum(hits)}/{len(hits)} disguised corners read MAN pre-snap and ZONE after the throw",
           time.perf_counter() - start, 300)


def test_criterion_9_determinism(pipeline, tmp_path_factory):
    start = time.perf_counter()
    runs = [pipeline["hashes"]] + [run_pipeline(tmp_path_factory.mktemp(f"run{i}"))["hashes"] for i in (2, 3)]
    differing = sorted(name for name in runs[0] if len({r[name] for r in runs}) != 1)
    record(9, not differing, f"{len(runs[0])} artifacts x 3 runs, differing: {differing or 'none'}",
           time.perf_counter() - start, float("inf"))
