import csv
import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from handpinch.align_detector import AlignmentTolerance, DetectionSets, detect_alignment
from handpinch.hand_model import FINGERS, NON_THUMB
from handpinch.lateral_detector import SpanGrid, SpanHistogram, detect_lateral
from handpinch.reporting import (PAPER_ALIGN_COUNTS, SUMMARY_HEADER, DetectionReport,
                                 ExportError, cloud_extends, compare_report, count_table_rows,
                                 near_far_trend, read_histogram_csv, read_report_json,
                                 read_summary_csv, render_pct, resolution_trend, summarize,
                                 sweep, write_count_table_csv, write_lateral_histogram_csv,
                                 write_report_json, write_summary_csv, write_sweep_csv,
                                 write_tip_histogram_csv, write_tip_share_csv)
from handpinch.tip_detector import detect_tip


def _sets(detected, evaluated, detector="align"):
    masks = {f: np.arange(evaluated[f]) < detected[f] for f in detected}
    return DetectionSets(detector, "thumb", tuple(detected), masks, dict(evaluated))


def _report(detected, evaluated=None, case=1, **kw):
    evaluated = evaluated or {f: 100 for f in detected}
    return summarize(_sets(detected, evaluated), case, 3, 1e-5, **kw)


@pytest.mark.parametrize("frac,text", [(Fraction(1, 8), "12.50"), (Fraction(1, 800), "0.13"),
                                       (Fraction(1, 1600), "0.06"), (Fraction(0), "0.00"),
                                       (Fraction(1), "100.00"), (Fraction(2, 3), "66.67"),
                                       (Fraction(38708, 810000), "4.78")])
def test_render_half_up(frac, text):
    assert render_pct(frac) == text


@given(st.integers(0, 10**7), st.integers(1, 10**7))
def test_render_within_half_unit(d, e):
    q = Fraction(d, e)
    assert abs(Fraction(render_pct(q)) - q * 100) <= Fraction(1, 200)


def test_empty_sets_give_zero_ratios():
    rep = _report({f: 0 for f in FINGERS})
    assert all(rep.ratio_pct(f) == "0.00" for f in FINGERS)


def test_published_counts_ratio():
    rep = _report({"thumb": 115_644}, {"thumb": 16_200_000}, case=2)
    assert rep.detected["thumb"] == 115_644
    assert rep.ratio_pct("thumb") == "0.71"


def test_detected_cannot_exceed_evaluated():
    with pytest.raises(ValueError):
        DetectionReport(1, "align", 1, 1e-5, "none", ["thumb"], {"thumb": 5}, {"thumb": 6})


def test_summary_csv_round_trip(tmp_path):
    a = _report({"thumb": 3, "index": 50})
    b = _report({"thumb": 7, "index": 1}, case=4)
    path = write_summary_csv([a, b], tmp_path / "s.csv")
    raw = path.read_bytes()
    assert b"\r" not in raw
    assert raw.decode().splitlines()[0] == ",".join(SUMMARY_HEADER)
    rows = read_summary_csv(path)
    assert [(r["case"], r["finger"], r["detected"], r["evaluated"]) for r in rows] == \
        [(1, "thumb", 3, 100), (1, "index", 50, 100), (4, "thumb", 7, 100), (4, "index", 1, 100)]
    assert rows[1]["ratio_pct"] == "50.00" and rows[0]["epsilon"] == 1e-5


def test_json_round_trip(tmp_path, case1):
    res = detect_lateral(case1["thumb"], case1["index"], SpanGrid.lateral())
    rep = summarize(res.sets, 1, 1, 1e-5, "bucket", "endpoints", 0.05, [res.histogram], 1.5)
    write_report_json(rep, tmp_path / "r.json")
    back = read_report_json(tmp_path / "r.json")
    assert back.detected == rep.detected and back.evaluated == rep.evaluated
    assert back.histograms[0].detected_pairs.tolist() == res.histogram.detected_pairs.tolist()
    doc = json.loads((tmp_path / "r.json").read_text())
    assert {"case", "detector", "resolution", "epsilon", "delta_mode", "evaluated", "detected",
            "sampling", "strategy", "histograms", "wall_time"} <= set(doc)


def test_histogram_exports_conserve_counts(tmp_path, case1):
    lat = detect_lateral(case1["thumb"], case1["index"], SpanGrid.lateral())
    write_lateral_histogram_csv(lat.histogram, tmp_path / "lat.csv")
    rows = read_histogram_csv(tmp_path / "lat.csv")
    assert list(rows[0]) == ["span", "detected_pairs", "unique_thumb", "unique_index"]
    assert sum(r["detected_pairs"] for r in rows) == lat.sets.accepted_pairs["index"]
    assert [r["span"] for r in rows] == list(SpanGrid.lateral().spans)

    tip = detect_tip(case1["thumb"], {f: case1[f] for f in NON_THUMB})
    write_tip_histogram_csv([tip.histograms[f] for f in NON_THUMB], tmp_path / "tip.csv")
    rows = read_histogram_csv(tmp_path / "tip.csv")
    for f in NON_THUMB:
        assert sum(r["detected_pairs"] for r in rows if r["finger"] == f) == \
            tip.sets.accepted_pairs[f]
    rep = summarize(tip.sets, 1, 1, 1e-5)
    write_tip_share_csv([tip.histograms[f] for f in NON_THUMB], rep.detected,
                        tmp_path / "share.csv")
    with open(tmp_path / "share.csv", newline="") as fh:
        share = list(csv.DictReader(fh))
    assert len(share) == 4 * 13
    assert all(0 <= float(r["share_of_detected"]) <= 100 for r in share)


def test_count_table_shape(tmp_path):
    reps = [_report({f: c for f, c in zip(FINGERS, PAPER_ALIGN_COUNTS[k])},
                    {f: 16_200_000 for f in FINGERS}, case=k) for k in (1, 2, 3, 4)]
    rows = count_table_rows(reps)
    assert len(rows) == 4 and all(len(r) == 6 for r in rows)
    assert rows[3][1:] == list(PAPER_ALIGN_COUNTS[4])
    write_count_table_csv(reps, tmp_path / "t.csv")
    assert (tmp_path / "t.csv").read_text().splitlines()[0] == "case,thumb,index,middle,ring,little"


def test_export_error_has_path(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(ExportError, match="file"):
        write_summary_csv(_report({"thumb": 1}), blocker / "sub" / "s.csv")


def test_eps_sweep_annotations(case1):
    fingers = {f: case1[f] for f in NON_THUMB}

    def run(eps):
        s = detect_alignment(case1["thumb"], fingers, AlignmentTolerance(eps))
        return summarize(s, 1, 1, eps), s

    res = sweep(run, [1e-2, 1e-3, 1e-4], "epsilon")
    assert all(res.monotone.values()) and all(res.nested.values())
    again = sweep(run, [1e-2, 1e-3, 1e-4], "epsilon")
    assert [r.detected for r in again.reports] == [r.detected for r in res.reports]


def test_sweep_validation():
    run = lambda v: _report({"thumb": 1})
    with pytest.raises(ValueError):
        sweep(run, [1e-3], "epsilon")
    with pytest.raises(ValueError):
        sweep(run, [1e-3, 1e-3], "epsilon")
    with pytest.raises(ValueError):
        sweep(run, [1e-3, 1e-4, 1e-2], "epsilon")
    with pytest.raises(ValueError):
        sweep(run, [1, 2], "span")
    with pytest.raises(ValueError):
        sweep(lambda v: _report({"thumb": 1}, case=v), [1, 2], "resolution")


def test_resolution_trend_flags(tmp_path):
    counts = {1: 10, 2: 30, 3: 20}
    res = sweep(lambda r: _report({"thumb": counts[r], "index": 10 * r}), [1, 2, 3],
                "resolution")
    flags = {f.name: f.holds for f in resolution_trend(res)}
    assert flags == {"case1-align-thumb-ratio-rises": False, "case1-align-index-ratio-rises": True}
    write_sweep_csv(res, tmp_path / "sw.csv")
    assert (tmp_path / "sw.csv").read_text().splitlines()[0] == \
        "resolution,finger,evaluated,detected,ratio_pct"


def _hist(partner, unique):
    n = len(unique)
    return SpanHistogram("thumb", partner, np.arange(n) * 0.1, np.array(unique),
                         np.array(unique), np.array(unique), 100, 100)


def test_near_far_trend():
    ok = near_far_trend([_hist("index", [0, 9, 5, 1]), _hist("little", [0, 3, 5, 4])], 1)
    assert ok.holds and "span 0.1" in ok.detail
    bad = near_far_trend([_hist("index", [1, 1]), _hist("little", [2, 0])], 1)
    assert not bad.holds


def test_cloud_extends():
    inner = np.array([[0.01, 0.01, 0.01], [0.11, 0.01, 0.01]])
    outer = np.vstack([inner, [[0.31, 0.01, 0.01]]])
    assert cloud_extends(inner, outer, "x").holds
    assert not cloud_extends(outer, inner, "x").holds
    assert not cloud_extends(inner, inner + 0.001, "x").holds
    # points on a rounding boundary still count as covered
    edge = np.array([[0.5e-9, 0.0, 0.0]])
    assert cloud_extends(edge, np.vstack([edge - 1e-12, [[1.0, 0, 0]]]), "x").holds
    shifted = cloud_extends(inner, outer + 0.2, "x")
    assert not shifted.holds and "2 inner points not reached" in shifted.detail


def test_compare_rows():
    rep = _report({f: c for f, c in zip(FINGERS, PAPER_ALIGN_COUNTS[1])},
                  {f: 810_000 for f in FINGERS})
    rows = compare_report(rep, "align", 1)
    assert len(rows) == 5 and all(r.match for r in rows)
    off = _report({f: 2 * c for f, c in zip(FINGERS, PAPER_ALIGN_COUNTS[1])},
                  {f: 810_000 for f in FINGERS})
    assert not any(r.match for r in compare_report(off, "align", 1))
    missing = compare_report(None, "tip", 3)
    assert [r.match for r in missing] == [None] * 5 and missing[0].row()[-1] == "not-run"
    with pytest.raises(ValueError):
        compare_report(rep, "grip", 1)
