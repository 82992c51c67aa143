"""Counts, ratios, sweeps, span histograms and their CSV/JSON renderings."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .align_detector import DetectionSets
from .hand_model import FINGERS, NON_THUMB
from .lateral_detector import SpanHistogram

SUMMARY_HEADER = ("case", "detector", "resolution", "epsilon", "delta_mode", "finger",
                  "evaluated", "detected", "ratio_pct")
LATERAL_HIST_HEADER = ("span", "detected_pairs", "unique_thumb", "unique_index")
TIP_HIST_HEADER = ("finger", "span", "detected_pairs", "unique_thumb", "unique_finger")
TIP_SHARE_HEADER = ("finger", "span", "unique_finger", "share_of_evaluated", "share_of_detected")
COMPARISON_HEADER = ("table", "case", "finger", "paper", "produced", "deviation", "tolerance",
                     "unit", "match")


class ExportError(OSError):
    pass


# ---------------------------------------------------------------------------
# Ratios
# ---------------------------------------------------------------------------

def ratio(detected: int, evaluated: int) -> Fraction:
    return Fraction(int(detected), int(evaluated)) if evaluated else Fraction(0)


def render_pct(value: Fraction, places: int = 2) -> str:
    """Percentage of an exact fraction, rounded half up (``Fraction(1, 8)`` -> ``12.50``)."""
    scaled = Fraction(value) * 100 * 10 ** places
    n = math.floor(scaled + Fraction(1, 2))
    sign = "-" if n < 0 else ""
    n = abs(n)
    if places == 0:
        return f"{sign}{n}"
    return f"{sign}{n // 10 ** places}.{n % 10 ** places:0{places}d}"


def format_float(x: Optional[float]) -> str:
    """Shortest text that reads back to the same float."""
    if x is None:
        return ""
    return repr(float(x))


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

@dataclass
class DetectionReport:
    case: int
    detector: str
    resolution: int
    epsilon: float
    delta_mode: str
    fingers: List[str]
    evaluated: Dict[str, int]
    detected: Dict[str, int]
    sampling: str = ""
    strategy: str = ""
    delta: Optional[float] = None
    histograms: List[SpanHistogram] = field(default_factory=list)
    pairs_tested: Dict[str, int] = field(default_factory=dict)
    accepted_pairs: Dict[str, int] = field(default_factory=dict)
    wall_time: float = 0.0

    def __post_init__(self):
        for f in self.fingers:
            if not 0 <= self.detected[f] <= self.evaluated[f]:
                raise ValueError(f"{f}: detected {self.detected[f]} outside "
                                 f"[0, {self.evaluated[f]}]")

    def ratio(self, finger: str) -> Fraction:
        return ratio(self.detected[finger], self.evaluated[finger])

    def ratio_pct(self, finger: str) -> str:
        return render_pct(self.ratio(finger))

    def ratio_float(self, finger: str) -> float:
        return float(self.ratio(finger) * 100)

    def mean_ratio(self, fingers: Sequence[str] = NON_THUMB) -> float:
        """Unweighted mean of per-finger percentages."""
        present = [f for f in fingers if f in self.evaluated]
        return float(sum(self.ratio(f) for f in present) * 100 / len(present)) if present else 0.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["histograms"] = [histogram_to_dict(h) for h in self.histograms]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DetectionReport":
        d = dict(d)
        d["histograms"] = [histogram_from_dict(h) for h in d.get("histograms", [])]
        return cls(**d)


def histogram_to_dict(h: SpanHistogram) -> dict:
    return {"reference": h.reference, "partner": h.partner,
            "spans": [float(s) for s in h.spans],
            "detected_pairs": [int(x) for x in h.detected_pairs],
            "unique_ref": [int(x) for x in h.unique_ref],
            "unique_partner": [int(x) for x in h.unique_partner],
            "evaluated_ref": int(h.evaluated_ref), "evaluated_partner": int(h.evaluated_partner)}


def histogram_from_dict(d: dict) -> SpanHistogram:
    return SpanHistogram(d["reference"], d["partner"], np.asarray(d["spans"], dtype=float),
                         np.asarray(d["detected_pairs"], dtype=np.int64),
                         np.asarray(d["unique_ref"], dtype=np.int64),
                         np.asarray(d["unique_partner"], dtype=np.int64),
                         int(d["evaluated_ref"]), int(d["evaluated_partner"]))


def summarize(sets: DetectionSets, case: int, resolution: int, epsilon: float,
              delta_mode: str = "none", sampling: str = "", delta: Optional[float] = None,
              histograms: Sequence[SpanHistogram] = (), wall_time: float = 0.0
              ) -> DetectionReport:
    fingers = [f for f in FINGERS if f in sets.fingers]
    return DetectionReport(
        case=int(case), detector=sets.detector, resolution=int(resolution),
        epsilon=float(epsilon), delta_mode=delta_mode, fingers=fingers,
        evaluated={f: int(sets.evaluated[f]) for f in fingers},
        detected={f: sets.detected_count(f) for f in fingers},
        sampling=sampling, strategy=sets.strategy, delta=delta,
        histograms=list(histograms),
        pairs_tested={k: int(v) for k, v in sets.pairs_tested.items()},
        accepted_pairs={k: int(v) for k, v in sets.accepted_pairs.items()},
        wall_time=float(wall_time))


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------

@dataclass
class SweepResult:
    """Reports over one swept parameter, with monotonicity annotations.

    ``monotone[f]`` says whether finger ``f``'s detected count moves in the
    expected direction along the sweep (non-increasing as ``epsilon``
    shrinks; ratio non-decreasing as ``resolution`` grows).  ``nested[f]``
    is the exact subset check between consecutive detection sets, when the
    sets were supplied.
    """

    parameter: str
    values: List[float]
    reports: List[DetectionReport]
    monotone: Dict[str, bool] = field(default_factory=dict)
    nested: Dict[str, bool] = field(default_factory=dict)

    def series(self, finger: str) -> List[float]:
        return [r.ratio_float(finger) for r in self.reports]

    def mean_series(self, fingers: Sequence[str] = NON_THUMB) -> List[float]:
        return [r.mean_ratio(fingers) for r in self.reports]


SWEEP_PARAMETERS = ("epsilon", "resolution")


def sweep(run: Callable[[float], Union[DetectionReport, Tuple[DetectionReport, DetectionSets]]],
          values: Sequence[float], parameter: str = "epsilon") -> SweepResult:
    """Run ``run(value)`` per value and annotate the trend.

    ``run`` may return a report alone or ``(report, sets)``; with sets, the
    epsilon sweep also checks that tighter tolerances give subsets.
    """
    if parameter not in SWEEP_PARAMETERS:
        raise ValueError(f"unknown sweep parameter {parameter!r}")
    values = list(values)
    if len(values) < 2:
        raise ValueError("a sweep needs at least two values")
    diffs = [b - a for a, b in zip(values, values[1:])]
    if not (all(d > 0 for d in diffs) or all(d < 0 for d in diffs)):
        raise ValueError("swept values must be strictly ordered")
    reports, sets = [], []
    for v in values:
        out = run(v)
        rep, s = out if isinstance(out, tuple) else (out, None)
        reports.append(rep)
        sets.append(s)
    first = reports[0]
    for r in reports[1:]:
        if (r.case, r.detector) != (first.case, first.detector):
            raise ValueError("sweep reports must share case and detector")
    result = SweepResult(parameter, values, reports)
    # walk from the loosest/coarsest setting to the tightest/finest
    order = sorted(range(len(values)), key=lambda k: values[k],
                   reverse=parameter == "epsilon")
    for f in first.fingers:
        if parameter == "epsilon":
            counts = [reports[k].detected[f] for k in order]
            result.monotone[f] = all(b <= a for a, b in zip(counts, counts[1:]))
        else:
            ratios = [reports[k].ratio(f) for k in order]
            result.monotone[f] = all(b >= a for a, b in zip(ratios, ratios[1:]))
        if parameter == "epsilon" and all(s is not None for s in sets):
            masks = [sets[k].masks[f] for k in order]
            result.nested[f] = all(not np.any(b & ~a) for a, b in zip(masks, masks[1:]))
    return result


# ---------------------------------------------------------------------------
# CSV / JSON export
# ---------------------------------------------------------------------------

def _open_for_write(path: Union[str, Path]):
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        return open(path, "w", newline="", encoding="utf-8")
    except OSError as e:
        raise ExportError(f"cannot write {path}: {e.strerror or e}") from e


def _write_rows(path, header, rows) -> Path:
    with _open_for_write(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return Path(path)


def summary_rows(report: DetectionReport) -> List[list]:
    return [[report.case, report.detector, report.resolution, format_float(report.epsilon),
             report.delta_mode, f, report.evaluated[f], report.detected[f], report.ratio_pct(f)]
            for f in report.fingers]


def write_summary_csv(reports: Union[DetectionReport, Iterable[DetectionReport]],
                      path: Union[str, Path]) -> Path:
    if isinstance(reports, DetectionReport):
        reports = [reports]
    return _write_rows(path, SUMMARY_HEADER, [r for rep in reports for r in summary_rows(rep)])


def read_summary_csv(path: Union[str, Path]) -> List[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        r["case"] = int(r["case"])
        r["resolution"] = int(r["resolution"])
        r["epsilon"] = float(r["epsilon"])
        r["evaluated"] = int(r["evaluated"])
        r["detected"] = int(r["detected"])
    return rows


def _span_text(s: float) -> str:
    return f"{float(s):.10g}"


def lateral_histogram_rows(h: SpanHistogram) -> List[list]:
    return [[_span_text(s), int(a), int(b), int(c)]
            for s, a, b, c in zip(h.spans, h.detected_pairs, h.unique_ref, h.unique_partner)]


def tip_histogram_rows(hists: Iterable[SpanHistogram]) -> List[list]:
    return [[h.partner, _span_text(s), int(a), int(b), int(c)]
            for h in hists
            for s, a, b, c in zip(h.spans, h.detected_pairs, h.unique_ref, h.unique_partner)]


def tip_share_rows(hists: Iterable[SpanHistogram], detected: Mapping[str, int]) -> List[list]:
    """Per-span partner shares under both normalizations.

    ``share_of_evaluated`` divides by the partner's evaluated grid size;
    ``share_of_detected`` divides by the partner's detected set over all spans.
    """
    rows = []
    for h in hists:
        total = detected.get(h.partner, 0)
        for s, u in zip(h.spans, h.unique_partner):
            rows.append([h.partner, _span_text(s), int(u),
                         render_pct(ratio(u, h.evaluated_partner)),
                         render_pct(ratio(u, total))])
    return rows


def write_lateral_histogram_csv(h: SpanHistogram, path) -> Path:
    return _write_rows(path, LATERAL_HIST_HEADER, lateral_histogram_rows(h))


def write_tip_histogram_csv(hists: Iterable[SpanHistogram], path) -> Path:
    return _write_rows(path, TIP_HIST_HEADER, tip_histogram_rows(hists))


def write_tip_share_csv(hists: Iterable[SpanHistogram], detected: Mapping[str, int], path) -> Path:
    return _write_rows(path, TIP_SHARE_HEADER, tip_share_rows(hists, detected))


def read_histogram_csv(path) -> List[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        for k in r:
            if k == "span":
                r[k] = float(r[k])
            elif k != "finger":
                r[k] = int(r[k])
    return rows


def count_table_rows(reports: Iterable[DetectionReport],
                     fingers: Sequence[str] = FINGERS) -> List[list]:
    """One row per case with the detected count of each finger (table layout)."""
    return [[r.case] + [r.detected[f] for f in fingers] for r in reports]


def write_count_table_csv(reports: Iterable[DetectionReport], path,
                          fingers: Sequence[str] = FINGERS) -> Path:
    return _write_rows(path, ("case",) + tuple(fingers), count_table_rows(reports, fingers))


def write_report_json(report: DetectionReport, path) -> Path:
    with _open_for_write(path) as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return Path(path)


def read_report_json(path) -> DetectionReport:
    with open(path, encoding="utf-8") as fh:
        return DetectionReport.from_dict(json.load(fh))


def write_sweep_csv(result: SweepResult, path) -> Path:
    header = (result.parameter, "finger", "evaluated", "detected", "ratio_pct")
    rows = [[format_float(v) if result.parameter == "epsilon" else int(v), f,
             r.evaluated[f], r.detected[f], r.ratio_pct(f)]
            for v, r in zip(result.values, result.reports) for f in r.fingers]
    return _write_rows(path, header, rows)


# ---------------------------------------------------------------------------
# Published reference values
# ---------------------------------------------------------------------------

# evaluated grid sizes at resolution 3: (thumb, each finger)
PAPER_EVALUATED_RES3 = {1: (810_000, 19_800), 2: (16_200_000, 19_800),
                        3: (810_000, 594_000), 4: (16_200_000, 594_000)}
# evaluated grid sizes at resolution 1
PAPER_EVALUATED_RES1 = {1: (6_561, 594), 2: (39_366, 594), 3: (6_561, 5_346), 4: (39_366, 5_346)}
# thumb-referenced alignment, detected counts (thumb, index, middle, ring, little)
PAPER_ALIGN_COUNTS = {
    1: (38_708, 4_698, 4_745, 4_711, 4_615),
    2: (115_644, 3_638, 3_761, 3_928, 4_031),
    3: (38_797, 67_367, 70_104, 73_556, 76_568),
    4: (159_525, 41_249, 44_811, 49_363, 53_025),
}
# index-referenced alignment, detected counts (index, middle, ring, little)
PAPER_NO_THUMB_COUNTS = {
    1: (19_800, 19_800, 19_800, 19_115), 2: (19_800, 19_800, 19_800, 19_115),
    3: (594_000, 594_000, 572_461, 526_435), 4: (594_000, 594_000, 572_461, 526_435),
}
# lateral pinch ratios in percent (thumb, index)
PAPER_LATERAL_PCT = {1: (44.25, 35.77), 2: (73.87, 32.26), 3: (79.45, 36.14), 4: (88.57, 36.24)}
# tip pinch ratios in percent (thumb, index, middle, ring, little)
PAPER_TIP_PCT = {
    1: (26.66, 42.09, 53.37, 55.56, 57.74),
    2: (28.83, 80.30, 81.82, 81.82, 81.82),
    3: (93.77, 44.11, 55.31, 58.21, 56.34),
    4: (95.24, 81.11, 81.72, 81.71, 81.69),
}
# alignment epsilon sweep at resolution 3: epsilon -> (thumb %, four-finger mean %)
PAPER_EPS_SWEEP_PCT = {1e-3: (17.43, 66.28), 1e-4: (12.01, 54.61), 1e-5: (4.95, 25.68)}

_PAPER_COUNTS = {"align": (PAPER_ALIGN_COUNTS, FINGERS),
                 "align-no-thumb": (PAPER_NO_THUMB_COUNTS, NON_THUMB)}
_PAPER_PCT = {"lateral": (PAPER_LATERAL_PCT, ("thumb", "index")),
              "tip": (PAPER_TIP_PCT, FINGERS)}


@dataclass
class ComparisonRow:
    table: str
    case: int
    finger: str
    paper: float
    produced: Optional[float]
    deviation: Optional[float]
    tolerance: float
    unit: str  # "rel" (relative count deviation) or "pp" (percentage points)
    match: Optional[bool]  # None: not produced (e.g. requires a finer resolution)

    def row(self) -> list:
        dev = "" if self.deviation is None else f"{self.deviation:.4f}"
        prod = "" if self.produced is None else (
            f"{self.produced:.2f}" if self.unit == "pp" else f"{int(self.produced)}")
        flag = {True: "match", False: "deviation", None: "not-run"}[self.match]
        return [self.table, self.case, self.finger, self.paper, prod, dev,
                self.tolerance, self.unit, flag]


def compare_report(report: Optional[DetectionReport], table: str, case: int,
                   rel_tol: float = 0.05, pp_tol: float = 5.0, note_missing: str = ""
                   ) -> List[ComparisonRow]:
    """Per-cell produced-vs-published rows for one detector/case.

    Counts are compared relatively, percentages in percentage points.
    ``report=None`` yields unmatched placeholder rows.
    """
    if table in _PAPER_COUNTS:
        ref, fingers = _PAPER_COUNTS[table]
        unit, tol = "rel", rel_tol
    elif table in _PAPER_PCT:
        ref, fingers = _PAPER_PCT[table]
        unit, tol = "pp", pp_tol
    else:
        raise ValueError(f"no published values for {table!r}")
    rows = []
    for f, paper in zip(fingers, ref[case]):
        if report is None or f not in report.detected:
            rows.append(ComparisonRow(table, case, f, paper, None, None, tol, unit, None))
            continue
        if unit == "rel":
            produced = float(report.detected[f])
            dev = (produced - paper) / paper
        else:
            produced = report.ratio_float(f)
            dev = produced - paper
        rows.append(ComparisonRow(table, case, f, paper, produced, dev, tol, unit,
                                  abs(dev) <= tol + 1e-12))
    return rows


def write_comparison_csv(rows: Iterable[ComparisonRow], path) -> Path:
    return _write_rows(path, COMPARISON_HEADER, [r.row() for r in rows])


# ---------------------------------------------------------------------------
# Qualitative trend flags
# ---------------------------------------------------------------------------

@dataclass
class TrendFlag:
    name: str
    holds: bool
    detail: str


def resolution_trend(result: SweepResult) -> List[TrendFlag]:
    if result.parameter != "resolution":
        raise ValueError("resolution_trend needs a resolution sweep")
    return [TrendFlag(f"case{result.reports[0].case}-{result.reports[0].detector}-{f}-ratio-rises",
                      result.monotone[f],
                      " -> ".join(f"{x:.2f}" for x in result.series(f)))
            for f in result.reports[0].fingers]


def near_far_trend(hists: Sequence[SpanHistogram], case: int,
                   near: str = "index", far: str = "little") -> TrendFlag:
    """Near finger leads at the shortest detected span, far finger at the longest."""
    by = {h.partner: h for h in hists}
    a, b = by[near], by[far]
    sa, sb = a.partner_share(), b.partner_share()
    live = np.flatnonzero((a.unique_partner > 0) | (b.unique_partner > 0))
    if len(live) == 0:
        return TrendFlag(f"case{case}-tip-near-far", False, "no detections")
    lo, hi = live[0], live[-1]
    holds = bool(sa[lo] >= sb[lo] and sb[hi] >= sa[hi])
    detail = (f"span {a.spans[lo]:g}: {near} {100 * sa[lo]:.2f}% vs {far} {100 * sb[lo]:.2f}%; "
              f"span {a.spans[hi]:g}: {near} {100 * sa[hi]:.2f}% vs {far} {100 * sb[hi]:.2f}%")
    return TrendFlag(f"case{case}-tip-near-far", holds, detail)


def _voxels(points: np.ndarray, cell: float) -> set:
    return set(map(tuple, np.floor(np.asarray(points) / cell).astype(np.int64).tolist()))


def _uncovered(inner: np.ndarray, outer: np.ndarray, tol: float) -> int:
    """Number of ``inner`` points with no ``outer`` point within ``tol``."""
    keys = set(map(tuple, np.round(outer / tol).astype(np.int64).tolist()))
    cand = [p for p, k in zip(inner, np.round(inner / tol).astype(np.int64).tolist())
            if tuple(k) not in keys]
    # rounding can split coincident points across a boundary; confirm by distance
    return sum(1 for p in cand if np.min(np.abs(outer - p).max(axis=1)) > tol)


def cloud_extends(inner: np.ndarray, outer: np.ndarray, name: str, cell: float = 0.05,
                  tol: float = 1e-9) -> TrendFlag:
    """Every ``inner`` point is also in ``outer`` and ``outer`` reaches new voxels.

    Voxels are axis-aligned cubes of side ``cell`` in hand-length units.
    """
    inner, outer = np.asarray(inner, dtype=float), np.asarray(outer, dtype=float)
    missing = _uncovered(inner, outer, tol)
    vi, vo = _voxels(inner, cell), _voxels(outer, cell)
    extra = len(vo - vi)
    detail = (f"{len(vi)} vs {len(vo)} occupied voxels (side {cell:g}), {extra} new; "
              f"{missing} inner points not reached")
    return TrendFlag(name, missing == 0 and extra > 0, detail)


def write_trend_csv(flags: Iterable[TrendFlag], path) -> Path:
    return _write_rows(path, ("check", "holds", "detail"),
                       [[f.name, "yes" if f.holds else "no", f.detail] for f in flags])
