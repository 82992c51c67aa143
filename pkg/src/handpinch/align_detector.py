"""Distal-phalanx alignment detection (pulp and chuck pinch).

A reference configuration and an opposing configuration pair up when their
distal directions are parallel to within ``eps`` and the two distal segments
overlap once projected onto the reference direction.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Mapping, Sequence, Tuple, Union

import numpy as np

from . import _kernels as K
from .pair_index import (GROUP_SLACK, PairStrategy, build_direction_index, group_directions,
                         run_chunks)
from .workspace import SampleSet


class ModelMismatchError(ValueError):
    """Sample sets handed to one detector come from different hand models."""


@dataclass(frozen=True)
class Segment:
    start: np.ndarray
    end: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.start, dtype=float).reshape(3)
        e = np.asarray(self.end, dtype=float).reshape(3)
        if not (np.all(np.isfinite(s)) and np.all(np.isfinite(e))):
            raise ValueError("segment endpoints must be finite")
        object.__setattr__(self, "start", s)
        object.__setattr__(self, "end", e)

    @property
    def length(self) -> float:
        d = self.end - self.start
        return float(np.sqrt(d @ d))

    def direction(self) -> np.ndarray:
        n = self.length
        if not n > 0:
            raise ValueError("zero-length segment has no direction")
        return (self.end - self.start) / n


@dataclass(frozen=True)
class AlignmentTolerance:
    eps: float = 1e-5
    strict_overlap: bool = True  # L_ovr > 0; False accepts touching segments

    def __post_init__(self):
        if not (self.eps > 0 and np.isfinite(self.eps)):
            raise ValueError(f"eps must be a positive finite number, got {self.eps!r}")


def parallel_residual(v_t, v_f) -> float:
    v_t = np.asarray(v_t, dtype=float)
    v_f = np.asarray(v_f, dtype=float)
    return abs(1.0 - float(v_t[0] * v_f[0] + v_t[1] * v_f[1] + v_t[2] * v_f[2]))


def projected_overlap(v_t, seg_t: Segment, seg_f: Segment) -> float:
    """Signed overlap length of both segments projected onto ``v_t``."""
    v = np.asarray(v_t, dtype=float)
    a1, a2 = float(v @ seg_t.start), float(v @ seg_t.end)
    b1, b2 = float(v @ seg_f.start), float(v @ seg_f.end)
    return min(max(a1, a2), max(b1, b2)) - max(min(a1, a2), min(b1, b2))


def aligned(v_t, seg_t: Segment, v_f, seg_f: Segment, tol: AlignmentTolerance) -> bool:
    if not parallel_residual(v_t, v_f) < tol.eps:
        return False
    l_ovr = projected_overlap(v_t, seg_t, seg_f)
    return l_ovr > 0.0 if tol.strict_overlap else l_ovr >= 0.0


@dataclass
class DetectionSets:
    """Grid-index detection flags per finger, plus bookkeeping.

    ``masks[f][k]`` is True when configuration ``k`` of finger ``f`` took part
    in at least one accepted pair.  ``reference_by_partner`` keeps the
    reference finger's flags split by opposing finger.
    """

    detector: str
    reference: str
    fingers: Tuple[str, ...]
    masks: Dict[str, np.ndarray]
    evaluated: Dict[str, int]
    reference_by_partner: Dict[str, np.ndarray] = field(default_factory=dict)
    pairs_tested: Dict[str, int] = field(default_factory=dict)
    accepted_pairs: Dict[str, int] = field(default_factory=dict)
    strategy: str = PairStrategy.NAIVE.value

    def detected_indices(self, finger: str) -> np.ndarray:
        return np.flatnonzero(self.masks[finger])

    def detected_count(self, finger: str) -> int:
        return int(np.count_nonzero(self.masks[finger]))

    def detected(self) -> Dict[str, int]:
        return {f: self.detected_count(f) for f in self.fingers}

    def as_sets(self) -> Dict[str, frozenset]:
        return {f: frozenset(self.detected_indices(f).tolist()) for f in self.fingers}

    def same_sets(self, other: "DetectionSets") -> bool:
        return self.fingers == other.fingers and all(
            np.array_equal(self.masks[f], other.masks[f]) for f in self.fingers)


def check_same_model(sets: Sequence[SampleSet]) -> None:
    keys = {s.model_key for s in sets}
    if len(keys) > 1:
        raise ModelMismatchError(
            "sample sets come from different hand models: "
            + ", ".join(f"{s.finger}={s.model_key or '?'}" for s in sets))


def _as_mapping(sets: Union[Mapping[str, SampleSet], Sequence[SampleSet]]) -> Dict[str, SampleSet]:
    if isinstance(sets, Mapping):
        return dict(sets)
    return {s.finger: s for s in sets}


def _pair_alignment(ref: SampleSet, opp: SampleSet, tol: AlignmentTolerance,
                    strategy: PairStrategy, workers: int, ref_groups=None
                    ) -> Tuple[np.ndarray, np.ndarray, int, int]:
    w_ref = np.zeros(len(ref), dtype=np.uint8)
    w_opp = np.zeros(len(opp), dtype=np.uint8)
    strict = bool(tol.strict_overlap)
    if strategy is PairStrategy.NAIVE:
        def work(lo, hi):
            return K.align_naive(lo, hi, ref.p_joint, ref.p_tip, ref.direction,
                                 opp.p_joint, opp.p_tip, opp.direction,
                                 tol.eps, strict, w_ref, w_opp)
        parts = run_chunks(work, len(ref), workers)
        tested = sum(int(p[0]) for p in parts)
    else:
        rg = ref_groups if ref_groups is not None else group_directions(ref.direction)
        index = build_direction_index(opp.direction, tol.eps)
        og = index.groups
        h = index.h if index.h is not None else 0.0
        if index.h is None:
            # cone wider than the cube-face scheme supports: every group is a candidate
            return _pair_alignment(ref, opp, tol, PairStrategy.NAIVE, workers)

        def work(lo, hi):
            return K.align_binned(lo, hi, rg.order, rg.offsets, rg.reps,
                                  ref.p_joint, ref.p_tip, ref.direction,
                                  og.order, og.offsets, og.reps,
                                  opp.p_joint, opp.p_tip, opp.direction,
                                  index.ukeys, index.ustart, index.sorted_groups,
                                  h, index.n, tol.eps + GROUP_SLACK, tol.eps, strict,
                                  w_ref, w_opp)
        parts = run_chunks(work, rg.n_groups, workers)
        tested = sum(int(p[1]) for p in parts)
    accepted = sum(int(p[-1]) for p in parts)
    return w_ref.astype(bool), w_opp.astype(bool), tested, accepted


def _detect(detector: str, ref: SampleSet, opponents: Dict[str, SampleSet],
            tol: AlignmentTolerance, pairing, workers: int) -> DetectionSets:
    strategy = PairStrategy.parse(pairing)
    check_same_model([ref, *opponents.values()])
    ref_groups = group_directions(ref.direction) if strategy is PairStrategy.BINNED else None
    masks: Dict[str, np.ndarray] = {}
    by_partner: Dict[str, np.ndarray] = {}
    tested: Dict[str, int] = {}
    accepted: Dict[str, int] = {}
    ref_mask = np.zeros(len(ref), dtype=bool)
    for name, opp in opponents.items():
        w_r, w_o, n_t, n_a = _pair_alignment(ref, opp, tol, strategy, workers, ref_groups)
        masks[name] = w_o
        by_partner[name] = w_r
        tested[name] = n_t
        accepted[name] = n_a
        ref_mask |= w_r
    masks = {ref.finger: ref_mask, **masks}
    fingers = tuple(masks)
    evaluated = {ref.finger: len(ref), **{n: len(o) for n, o in opponents.items()}}
    return DetectionSets(detector, ref.finger, fingers, masks, evaluated,
                         by_partner, tested, accepted, strategy.value)


def detect_alignment(thumb: SampleSet,
                     fingers: Union[Mapping[str, SampleSet], Sequence[SampleSet]],
                     tol: AlignmentTolerance = AlignmentTolerance(),
                     pairing: Union[PairStrategy, str] = PairStrategy.BINNED,
                     workers: int = 1) -> DetectionSets:
    """Thumb-referenced alignment against each opposing finger."""
    return _detect("align", thumb, _as_mapping(fingers), tol, pairing, workers)


def detect_alignment_no_thumb(index: SampleSet,
                              others: Union[Mapping[str, SampleSet], Sequence[SampleSet]],
                              tol: AlignmentTolerance = AlignmentTolerance(),
                              pairing: Union[PairStrategy, str] = PairStrategy.BINNED,
                              workers: int = 1) -> DetectionSets:
    """Index-referenced alignment against middle, ring and little (no self-pairing)."""
    others = {k: v for k, v in _as_mapping(others).items() if k != index.finger}
    return _detect("align-no-thumb", index, others, tol, pairing, workers)


# ---------------------------------------------------------------------------
# Pair log
# ---------------------------------------------------------------------------

PAIR_LOG_HEADER = ("thumb_index", "finger", "finger_index", "residual", "l_ovr")


def alignment_pairs(ref: SampleSet, opp: SampleSet, tol: AlignmentTolerance = AlignmentTolerance(),
                    cap: int = 1_000_000) -> np.ndarray:
    """Accepted pairs as rows ``(ref index, opp index, residual, l_ovr)``.

    Raises ``OverflowError`` when more than ``cap`` pairs are accepted.
    """
    out = np.empty((cap, 4))
    n = K.align_log_pairs(0, len(ref), ref.p_joint, ref.p_tip, ref.direction,
                          opp.p_joint, opp.p_tip, opp.direction, tol.eps,
                          bool(tol.strict_overlap), out, cap)
    if n > cap:
        raise OverflowError(f"{n} accepted pairs exceed the log cap of {cap}")
    return out[:n].copy()


def write_pair_log(ref: SampleSet, opponents: Union[Mapping[str, SampleSet], Sequence[SampleSet]],
                   path: Union[str, Path], tol: AlignmentTolerance = AlignmentTolerance(),
                   cap: int = 1_000_000) -> int:
    rows = 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PAIR_LOG_HEADER)
        for name, opp in _as_mapping(opponents).items():
            for r, o, res, l in alignment_pairs(ref, opp, tol, cap).tolist():
                w.writerow([int(r), name, int(o), repr(res), repr(l)])
                rows += 1
    return rows
