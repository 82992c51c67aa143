"""Tip pinch: fingertip-to-fingertip opposition between the thumb and each finger."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Union

import numpy as np

from . import _kernels as K
from .align_detector import DetectionSets, _as_mapping, check_same_model
from .lateral_detector import SpanGrid, SpanHistogram, _histogram
from .pair_index import PairStrategy, build_spatial_grid, run_chunks
from .workspace import SampleSet


@dataclass
class TipDetectionRecord:
    thumb_index: int
    finger: str
    finger_index: int
    distance: float
    span: float


@dataclass
class TipResult:
    sets: DetectionSets
    histograms: Dict[str, SpanHistogram]
    spans: SpanGrid


def tip_accepts(v_t, p_t, v_f, p_f) -> bool:
    """Posture and non-parallel conditions, without the span test."""
    c = float(v_t[0] * v_f[0] + v_t[1] * v_f[1] + v_t[2] * v_f[2])
    return 1.0 - abs(c) > 0.0 and p_t[1] >= p_f[1] and p_f[2] >= p_t[2]


def fingertip_distance(p_t, p_f) -> float:
    dx, dy, dz = p_t[0] - p_f[0], p_t[1] - p_f[1], p_t[2] - p_f[2]
    return float(np.sqrt(dx * dx + dy * dy + dz * dz))


def _pair_tip(thumb: SampleSet, finger: SampleSet, spans: SpanGrid,
              strategy: PairStrategy, workers: int):
    sp = spans.array()
    nt, nf = len(thumb), len(finger)
    wt = np.zeros((len(sp), nt), dtype=np.uint8)
    wf = np.zeros((len(sp), nf), dtype=np.uint8)
    if strategy is PairStrategy.NAIVE:
        def work(lo, hi):
            return K.tip_naive(lo, hi, thumb.p_tip, thumb.direction, finger.p_tip,
                               finger.direction, sp, spans.delta, wt, wf)
    else:
        g = build_spatial_grid(finger.p_tip, spans.step or 0.1)

        def work(lo, hi):
            return K.tip_binned(lo, hi, thumb.p_tip, thumb.direction, finger.p_tip,
                                finger.direction, sp, spans.delta, g.cell_start, g.members,
                                g.lo, g.hi, wt, wf)
    parts = run_chunks(work, nt, workers)
    hist = np.zeros(len(sp), dtype=np.int64)
    for h, _ in parts:
        hist += h
    tested = sum(int(p[1]) for p in parts)
    return hist, wt, wf, tested


def detect_tip(thumb: SampleSet, fingers: Union[Mapping[str, SampleSet], Sequence[SampleSet]],
               spans: Optional[SpanGrid] = None,
               pairing: Union[PairStrategy, str] = PairStrategy.BINNED,
               workers: int = 1) -> TipResult:
    spans = spans if spans is not None else SpanGrid.tip()
    strategy = PairStrategy.parse(pairing)
    fingers = _as_mapping(fingers)
    check_same_model([thumb, *fingers.values()])
    nt = len(thumb)
    t_mask = np.zeros(nt, dtype=bool)
    masks, by_partner, tested, accepted, hists = {}, {}, {}, {}, {}
    for name, f in fingers.items():
        hist, wt, wf, n = _pair_tip(thumb, f, spans, strategy, workers)
        by_partner[name] = wt.any(axis=0)
        t_mask |= by_partner[name]
        masks[name] = wf.any(axis=0)
        tested[name] = n
        accepted[name] = int(hist.sum())
        hists[name] = _histogram(thumb.finger, name, spans, hist, wt, wf, nt, len(f))
    masks = {thumb.finger: t_mask, **masks}
    evaluated = {thumb.finger: nt, **{n: len(f) for n, f in fingers.items()}}
    sets = DetectionSets("tip", thumb.finger, tuple(masks), masks, evaluated,
                         by_partner, tested, accepted, strategy.value)
    return TipResult(sets, hists, spans)


def tip_records(thumb: SampleSet, finger: SampleSet, t: int,
                spans: Optional[SpanGrid] = None) -> List[TipDetectionRecord]:
    """Accepted (finger configuration, span) records for one thumb configuration."""
    spans = spans if spans is not None else SpanGrid.tip()
    out = []
    for f in range(len(finger)):
        if not tip_accepts(thumb.direction[t], thumb.p_tip[t], finger.direction[f],
                           finger.p_tip[f]):
            continue
        d = fingertip_distance(thumb.p_tip[t], finger.p_tip[f])
        for s in spans.matches(d):
            out.append(TipDetectionRecord(t, finger.finger, f, d, s))
    return out
