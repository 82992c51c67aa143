"""Lateral pinch: thumb distal pad against the radial side of the index.

Contact points are sampled along the thumb distal segment and along every
index phalanx.  A thumb/index configuration pair is detected at span ``d``
when some contact-point pair sits ``d`` apart (within ``delta``), the thumb
point is not below the index point in ``y_o``, and the thumb point's ``x_o``
falls inside the owning index phalanx's ``x_o`` interval.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Tuple, Union

import numpy as np

from . import _kernels as K
from .align_detector import DetectionSets, check_same_model
from .kinematics import FingertipSample
from .pair_index import PairStrategy, build_spatial_grid, run_chunks
from .workspace import SampleSet

DELTA_MODES = ("strict", "bucket")
DEFAULT_STRICT_DELTA = 1e-5
MAX_SPANS = 64  # spans are packed into a 64-bit mask per pair


@dataclass(frozen=True)
class SpanGrid:
    """Target separations and the tolerance used to match them."""

    spans: Tuple[float, ...]
    delta: float
    mode: str = "bucket"

    def __post_init__(self):
        s = tuple(float(x) for x in self.spans)
        if not s:
            raise ValueError("span grid is empty")
        if len(s) > MAX_SPANS:
            raise ValueError(f"at most {MAX_SPANS} spans are supported")
        if any(b <= a for a, b in zip(s, s[1:])):
            raise ValueError("spans must be strictly increasing")
        if not (self.delta > 0 and math.isfinite(self.delta)):
            raise ValueError(f"span tolerance must be positive, got {self.delta!r}")
        object.__setattr__(self, "spans", s)

    @classmethod
    def uniform(cls, stop: float, step: float = 0.1, delta: Union[str, float] = "bucket",
                eps: float = DEFAULT_STRICT_DELTA) -> "SpanGrid":
        if not (step > 0 and stop >= 0 and math.isfinite(stop / step)):
            raise ValueError(f"span step must be positive, got {step!r}")
        n = int(round(stop / step)) + 1
        spans = tuple(round(k * step, 12) for k in range(n))
        value, mode = resolve_delta(delta, step, eps)
        return cls(spans, value, mode)

    @classmethod
    def lateral(cls, delta: Union[str, float] = "bucket", **kw) -> "SpanGrid":
        return cls.uniform(1.0, 0.1, delta, **kw)

    @classmethod
    def tip(cls, delta: Union[str, float] = "bucket", **kw) -> "SpanGrid":
        return cls.uniform(1.2, 0.1, delta, **kw)

    @property
    def max_span(self) -> float:
        return self.spans[-1]

    @property
    def step(self) -> Optional[float]:
        if len(self.spans) < 2:
            return None
        return self.spans[1] - self.spans[0]

    def array(self) -> np.ndarray:
        return np.asarray(self.spans, dtype=float)

    def matches(self, d: float) -> List[float]:
        return [s for s in self.spans if abs(d - s) < self.delta]


def resolve_delta(delta: Union[str, float], step: float, eps: float = DEFAULT_STRICT_DELTA
                  ) -> Tuple[float, str]:
    """``strict`` -> ``eps``; ``bucket`` -> half the span step; numbers pass through."""
    if isinstance(delta, str):
        key = delta.strip().lower()
        if key == "strict":
            return float(eps), "strict"
        if key == "bucket":
            return step / 2.0, "bucket"
        try:
            delta = float(key)
        except ValueError:
            raise ValueError(f"span tolerance must be strict, bucket or a number, got {delta!r}")
    value = float(delta)
    return value, f"{value:g}"


# ---------------------------------------------------------------------------
# Contact points
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ContactPoint:
    finger: str
    phalanx: int
    s: float
    position: np.ndarray


def contact_parameters(step: float = 0.1) -> np.ndarray:
    """``0, step, 2 step, ..., 1``; the endpoint is always included."""
    if not 0 < step <= 1:
        raise ValueError(f"contact step must lie in (0, 1], got {step!r}")
    n = int(math.floor(1.0 / step + 1e-9))
    s = [min(k * step, 1.0) for k in range(n + 1)]
    if s[-1] < 1.0 - 1e-12:
        s.append(1.0)
    else:
        s[-1] = 1.0
    return np.array(s)


def phalanx_points(sample: FingertipSample, step: float = 0.1,
                   distal_only: bool = False) -> List[ContactPoint]:
    pts = sample.phalanx_points
    first = len(pts) - 2 if distal_only else 0
    out = []
    for k in range(first, len(pts) - 1):
        a, b = pts[k], pts[k + 1]
        for s in contact_parameters(step):
            out.append(ContactPoint(sample.finger, k, float(s), a + s * (b - a)))
    return out


def segment_points(start: np.ndarray, end: np.ndarray, step: float = 0.1) -> np.ndarray:
    """Batched contact points: ``(..., 3)`` endpoints -> ``(..., S, 3)``."""
    s = contact_parameters(step)
    start = np.asarray(start, dtype=float)[..., None, :]
    end = np.asarray(end, dtype=float)[..., None, :]
    return start + s[:, None] * (end - start)


# ---------------------------------------------------------------------------
# Span histograms
# ---------------------------------------------------------------------------

@dataclass
class SpanHistogram:
    """Per-span counts for one reference/partner finger pairing.

    ``detected_pairs[k]`` counts distinct configuration pairs matched at span
    ``k``; ``unique_ref``/``unique_partner`` count distinct configurations.
    """

    reference: str
    partner: str
    spans: np.ndarray
    detected_pairs: np.ndarray
    unique_ref: np.ndarray
    unique_partner: np.ndarray
    evaluated_ref: int
    evaluated_partner: int

    def partner_share(self) -> np.ndarray:
        """Per-span detected partner configurations over the partner grid size."""
        return self.unique_partner / max(self.evaluated_partner, 1)

    def pair_share(self) -> np.ndarray:
        """Per-span detected pairs over all evaluated configuration pairs."""
        return self.detected_pairs / max(self.evaluated_ref * self.evaluated_partner, 1)


def _histogram(ref: str, partner: str, spans: SpanGrid, hist, wr, wp, nr, npart) -> SpanHistogram:
    return SpanHistogram(ref, partner, spans.array(), np.asarray(hist, dtype=np.int64),
                         wr.sum(axis=1, dtype=np.int64), wp.sum(axis=1, dtype=np.int64), nr, npart)


@dataclass
class LateralDetectionRecord:
    thumb_index: int
    index_index: int
    span: float
    thumb_point: np.ndarray
    index_point: np.ndarray
    phalanx: int


@dataclass
class LateralResult:
    sets: DetectionSets
    histogram: SpanHistogram
    spans: SpanGrid
    step: float


# ---------------------------------------------------------------------------
# Detection
# ---------------------------------------------------------------------------

def _index_items(index: SampleSet, step: float) -> Tuple[np.ndarray, np.ndarray]:
    if index.phalanx_points is None:
        raise ValueError("index sample set has no phalanx points; enumerate with "
                         "include_phalanges=True")
    ph = index.phalanx_points
    pts = np.ascontiguousarray(segment_points(ph[:, :-1], ph[:, 1:], step))
    x = np.stack([np.minimum(ph[:, :-1, 0], ph[:, 1:, 0]),
                  np.maximum(ph[:, :-1, 0], ph[:, 1:, 0])], axis=-1)
    return pts, np.ascontiguousarray(x)


@dataclass
class _Segments:
    start: np.ndarray  # (U, 3)
    end: np.ndarray
    item_of: np.ndarray  # (N, K) distinct segment id per configuration phalanx


def _distinct_segments(ph: np.ndarray) -> _Segments:
    """Exact deduplication of phalanx segments.

    Proximal phalanges depend only on the first joints, so many configurations
    share them bit for bit; testing each distinct segment once is exact.
    """
    n, p = ph.shape[0], ph.shape[1] - 1
    ends = np.concatenate([ph[:, :-1], ph[:, 1:]], axis=-1).reshape(n * p, 6)
    uniq, inv = np.unique(ends, axis=0, return_inverse=True)
    return _Segments(np.ascontiguousarray(uniq[:, :3]), np.ascontiguousarray(uniq[:, 3:]),
                     np.ascontiguousarray(inv.reshape(n, p).astype(np.int64)))


def detect_lateral(thumb: SampleSet, index: SampleSet, spans: Optional[SpanGrid] = None,
                   step: float = 0.1, pairing: Union[PairStrategy, str] = PairStrategy.BINNED,
                   workers: int = 1) -> LateralResult:
    spans = spans if spans is not None else SpanGrid.lateral()
    strategy = PairStrategy.parse(pairing)
    check_same_model([thumb, index])
    tpts = np.ascontiguousarray(segment_points(thumb.p_joint, thumb.p_tip, step))
    ipts, ixr = _index_items(index, step)
    sp = spans.array()
    nt, ni = len(thumb), ipts.shape[0]
    wt = np.zeros((len(sp), nt), dtype=np.uint8)
    wi = np.zeros((len(sp), ni), dtype=np.uint8)

    if strategy is PairStrategy.NAIVE:
        def work(lo, hi):
            return K.lateral_naive(lo, hi, tpts, ipts, ixr, sp, spans.delta, wt, wi)
    else:
        t_lo, t_hi = tpts.min(axis=1), tpts.max(axis=1)
        seg = _distinct_segments(index.phalanx_points)
        upts = np.ascontiguousarray(segment_points(seg.start, seg.end, step)[:, None])
        ulo, uhi = upts[:, 0].min(axis=1), upts[:, 0].max(axis=1)
        uxr = np.ascontiguousarray(np.stack([np.minimum(seg.start[:, 0], seg.end[:, 0]),
                                             np.maximum(seg.start[:, 0], seg.end[:, 0])], -1))
        grid_ = build_spatial_grid(0.5 * (ulo + uhi), spans.step or 0.1, ulo, uhi)
        fx = uxr[grid_.members]
        cell_xlo = np.minimum.reduceat(fx[:, 0], grid_.cell_start[:-1])
        cell_xhi = np.maximum.reduceat(fx[:, 1], grid_.cell_start[:-1])

        def work(lo, hi):
            return K.lateral_binned(lo, hi, tpts, t_lo, t_hi, upts, uxr, ulo, uhi, seg.item_of,
                                    grid_.cell_start, grid_.members, grid_.lo, grid_.hi,
                                    cell_xlo, cell_xhi, sp, spans.delta, wt, wi)

    parts = run_chunks(work, nt, workers)
    hist = np.zeros(len(sp), dtype=np.int64)
    for h, _ in parts:
        hist += h
    tested = sum(int(p[1]) for p in parts)
    t_mask = wt.any(axis=0)
    i_mask = wi.any(axis=0)
    sets = DetectionSets("lateral", thumb.finger, (thumb.finger, index.finger),
                         {thumb.finger: t_mask, index.finger: i_mask},
                         {thumb.finger: nt, index.finger: ni},
                         {index.finger: t_mask}, {index.finger: tested},
                         {index.finger: int(hist.sum())}, strategy.value)
    histogram = _histogram(thumb.finger, index.finger, spans, hist, wt, wi, nt, ni)
    return LateralResult(sets, histogram, spans, step)


def lateral_records(thumb: SampleSet, index: SampleSet, t: int, i: int,
                    spans: Optional[SpanGrid] = None, step: float = 0.1
                    ) -> List[LateralDetectionRecord]:
    """Every accepted contact tuple for one configuration pair (pure Python)."""
    spans = spans if spans is not None else SpanGrid.lateral()
    tp = segment_points(thumb.p_joint[t], thumb.p_tip[t], step)
    ph = index.phalanx_points[i]
    out = []
    for k in range(len(ph) - 1):
        lo, hi = sorted((ph[k][0], ph[k + 1][0]))
        for q in segment_points(ph[k], ph[k + 1], step):
            for p in tp:
                if not (lo <= p[0] <= hi and p[1] >= q[1]):
                    continue
                d = float(np.sqrt(((p - q) ** 2).sum()))
                for s in spans.matches(d):
                    out.append(LateralDetectionRecord(t, i, s, p, q, k))
    return out
