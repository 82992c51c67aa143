"""Pruning structures for the thumb/finger pair searches.

``DirectionIndex`` buckets unit directions on the six faces of a cube
(gnomonic projection per face).  The cell width is chosen so that any two
directions closer than the parallel-cone half-angle land in the same or an
adjacent cell of some face, which makes the 3x3 neighbourhood lookup
complete.  Configurations sharing a direction (to ``GROUP_QUANTUM``) are
grouped first, so the cone test runs once per group pair.

``SpatialGrid`` is a uniform grid over points with exact per-cell bounding
boxes, used by the distance-driven lateral and tip searches.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterator, List, Optional, Tuple

import numpy as np

from . import _kernels as K

GROUP_QUANTUM = 1e-11
# slack on the group-level cone test; covers the within-group spread
GROUP_SLACK = 1e-9


class PairStrategy(str, enum.Enum):
    NAIVE = "naive"
    BINNED = "binned"

    @classmethod
    def parse(cls, value) -> "PairStrategy":
        try:
            return cls(str(getattr(value, "value", value)).lower())
        except ValueError:
            raise ValueError(f"unknown pair strategy {value!r}; use naive or binned") from None


def parallel_half_angle(eps: float) -> float:
    """Half-angle of the cone ``|1 - cos| < eps``."""
    return math.acos(max(-1.0, 1.0 - eps))


def cell_width_for(eps: float) -> Optional[float]:
    """Cube-face cell width guaranteeing neighbour completeness, or None.

    The gnomonic map stretches arcs by at most ``1 + r^2`` with ``r`` the
    distance from the face centre; the lookup region extends one cell past
    the face edge, hence the fixed point ``h = theta * (1 + 2 (1 + h)^2)``.
    """
    theta = parallel_half_angle(eps + GROUP_SLACK) * 1.001 + 1e-12
    h = 3.0 * theta
    for _ in range(200):
        nxt = 1.01 * theta * (1.0 + 2.0 * (1.0 + h) ** 2)
        if abs(nxt - h) < 1e-15:
            break
        h = nxt
        if h >= 0.25:
            return None
    if not h < 0.25:
        return None
    return h


@dataclass
class DirectionGroups:
    order: np.ndarray  # configuration indices sorted by group
    offsets: np.ndarray  # group g owns order[offsets[g]:offsets[g+1]]
    reps: np.ndarray  # (G, 3) representative direction per group

    @property
    def n_groups(self) -> int:
        return self.reps.shape[0]

    def members(self, g: int) -> np.ndarray:
        return self.order[self.offsets[g]:self.offsets[g + 1]]


def group_directions(directions: np.ndarray, quantum: float = GROUP_QUANTUM) -> DirectionGroups:
    keys = np.rint(directions / quantum).astype(np.int64)
    order = np.lexsort((keys[:, 2], keys[:, 1], keys[:, 0]))
    sk = keys[order]
    new = np.empty(len(order), dtype=bool)
    if len(order):
        new[0] = True
        new[1:] = np.any(sk[1:] != sk[:-1], axis=1)
    starts = np.flatnonzero(new)
    offsets = np.append(starts, len(order)).astype(np.int64)
    reps = np.ascontiguousarray(directions[order[starts]])
    return DirectionGroups(order.astype(np.int64), offsets, reps)


@dataclass
class DirectionIndex:
    eps: float
    h: Optional[float]  # None: degenerate single-bucket index (very wide cone)
    n: int
    groups: DirectionGroups
    cell_of_group: np.ndarray  # cell key per group
    ukeys: np.ndarray  # sorted distinct occupied cell keys
    ustart: np.ndarray  # CSR starts into sorted_groups, len(ukeys) + 1
    sorted_groups: np.ndarray

    @property
    def half_angle(self) -> float:
        return parallel_half_angle(self.eps)

    @property
    def n_cells(self) -> int:
        return len(self.ukeys)

    def cell_members(self, cell_pos: int) -> np.ndarray:
        gs = self.sorted_groups[self.ustart[cell_pos]:self.ustart[cell_pos + 1]]
        if len(gs) == 0:
            return np.empty(0, dtype=np.int64)
        return np.concatenate([self.groups.members(g) for g in gs])


def build_direction_index(directions: np.ndarray, eps: float,
                          groups: Optional[DirectionGroups] = None) -> DirectionIndex:
    if not eps > 0:
        raise ValueError("eps must be > 0")
    groups = groups if groups is not None else group_directions(directions)
    h = cell_width_for(eps)
    if h is None:
        n = 1
        keys = np.zeros(groups.n_groups, dtype=np.int64)
    else:
        n = int(math.ceil((2.0 + 2.0 * h) / h))
        keys = K.cell_keys(groups.reps, h, n)
    sorted_groups = np.argsort(keys, kind="stable").astype(np.int64)
    ukeys, first = np.unique(keys[sorted_groups], return_index=True)
    ustart = np.append(first, len(sorted_groups)).astype(np.int64)
    return DirectionIndex(eps, h, n, groups, keys, ukeys.astype(np.int64), ustart, sorted_groups)


def candidate_groups(ref_dir: np.ndarray, index: DirectionIndex) -> List[int]:
    """Opposing group ids whose cells neighbour ``ref_dir`` (pure-Python lookup)."""
    if index.h is None:
        return list(range(index.groups.n_groups))
    h, n = index.h, index.n
    out: List[int] = []
    for face in range(6):
        ok, u, w = K.cube_face_coords(np.asarray(ref_dir, dtype=float), face)
        if not ok or abs(u) > 1 + h or abs(w) > 1 + h:
            continue
        iu = int(math.floor((u + 1 + h) / h))
        iw = int(math.floor((w + 1 + h) / h))
        for cu in (iu - 1, iu, iu + 1):
            for cw in (iw - 1, iw, iw + 1):
                if not (0 <= cu < n and 0 <= cw < n):
                    continue
                key = (face * n + cu) * n + cw
                pos = int(np.searchsorted(index.ukeys, key))
                if pos < len(index.ukeys) and index.ukeys[pos] == key:
                    out.extend(int(g) for g in
                               index.sorted_groups[index.ustart[pos]:index.ustart[pos + 1]])
    return out


def candidate_pairs(ref_index: DirectionIndex, opp_index: DirectionIndex
                    ) -> Iterator[Tuple[int, int]]:
    """Stream ``(ref config, opp config)`` pairs that may satisfy the cone test.

    Complete: every pair within the cone of ``opp_index.eps`` is emitted.
    Intended for inspection and tests; the detectors use the compiled path.
    """
    if ref_index.h != opp_index.h:
        raise ValueError("direction indexes were built with different cell widths")
    ref_groups = ref_index.groups
    for g in range(ref_groups.n_groups):
        rep = ref_groups.reps[g]
        for og in candidate_groups(rep, opp_index):
            for r in ref_groups.members(g):
                for o in opp_index.groups.members(og):
                    yield int(r), int(o)


# ---------------------------------------------------------------------------
# Uniform spatial grid
# ---------------------------------------------------------------------------

@dataclass
class SpatialGrid:
    cell_size: float
    cell_start: np.ndarray  # CSR offsets, len n_cells + 1
    members: np.ndarray  # item ids sorted by cell
    lo: np.ndarray  # (n_cells, 3) exact member bounds
    hi: np.ndarray

    @property
    def n_cells(self) -> int:
        return len(self.cell_start) - 1


def build_spatial_grid(centers: np.ndarray, cell_size: float,
                       box_lo: Optional[np.ndarray] = None,
                       box_hi: Optional[np.ndarray] = None) -> SpatialGrid:
    """Bucket items by the cell of their ``centers``.

    ``box_lo``/``box_hi`` give each item's own bounding box (defaults to the
    center point); cell bounds are the union over members.
    """
    if not cell_size > 0:
        raise ValueError("cell_size must be > 0")
    centers = np.asarray(centers, dtype=float)
    box_lo = centers if box_lo is None else box_lo
    box_hi = centers if box_hi is None else box_hi
    ijk = np.floor(centers / cell_size).astype(np.int64)
    order = np.lexsort((ijk[:, 2], ijk[:, 1], ijk[:, 0]))
    s = ijk[order]
    new = np.ones(len(order), dtype=bool)
    new[1:] = np.any(s[1:] != s[:-1], axis=1)
    starts = np.flatnonzero(new)
    cell_start = np.append(starts, len(order)).astype(np.int64)
    lo = np.minimum.reduceat(box_lo[order], starts, axis=0) if len(order) else np.empty((0, 3))
    hi = np.maximum.reduceat(box_hi[order], starts, axis=0) if len(order) else np.empty((0, 3))
    return SpatialGrid(cell_size, cell_start, order.astype(np.int64),
                       np.ascontiguousarray(lo), np.ascontiguousarray(hi))


# ---------------------------------------------------------------------------
# Chunked execution
# ---------------------------------------------------------------------------

def run_chunks(fn: Callable[[int, int], object], n: int, workers: int = 1,
               chunk: Optional[int] = None) -> list:
    """Apply ``fn(lo, hi)`` over ``[0, n)`` and return results in chunk order."""
    workers = max(1, int(workers))
    if chunk is None:
        chunk = max(1, -(-n // (4 * workers)))
    bounds = [(lo, min(lo + chunk, n)) for lo in range(0, n, chunk)]
    if workers == 1 or len(bounds) <= 1:
        return [fn(lo, hi) for lo, hi in bounds]
    with ThreadPoolExecutor(workers) as pool:
        return list(pool.map(lambda b: fn(*b), bounds))
