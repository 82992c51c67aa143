"""Joint-grid discretization and fingertip sample enumeration."""

from __future__ import annotations

import csv
import json
import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .hand_model import HandModel, JointRangeSet
from .kinematics import distal_digest, frame_positions

SAMPLING_CONVENTIONS = ("endpoints", "min-inclusive", "max-inclusive", "midpoint")
DEFAULT_SAMPLING = "endpoints"

# range width in degrees -> samples per joint
RESOLUTION_TABLE: Dict[int, Dict[int, int]] = {
    1: {90: 9, 60: 6, 130: 11},
    2: {90: 18, 60: 12, 130: 22},
    3: {90: 30, 60: 20, 130: 33},
}


class GridConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ResolutionPolicy:
    """Named resolution level, or explicit per-joint sample counts."""

    level: Optional[int] = 1
    counts: Optional[Tuple[int, ...]] = None

    def __post_init__(self):
        if self.counts is None and self.level not in RESOLUTION_TABLE:
            raise GridConfigError(f"unknown resolution level {self.level!r}")
        if self.counts is not None and min(self.counts) < 2:
            raise GridConfigError("explicit sample counts must be >= 2")

    @property
    def label(self) -> str:
        if self.counts is not None:
            return "x".join(str(c) for c in self.counts)
        return f"res{self.level}"

    def counts_for(self, ranges: JointRangeSet) -> Tuple[int, ...]:
        if self.counts is not None:
            if len(self.counts) != len(ranges):
                raise GridConfigError(
                    f"{len(self.counts)} explicit counts for {len(ranges)} joints")
            return tuple(int(c) for c in self.counts)
        table = RESOLUTION_TABLE[self.level]
        out = []
        for width in ranges.widths:
            deg = math.degrees(width)
            key = int(round(deg))
            if abs(deg - key) > 1e-6 or key not in table:
                raise GridConfigError(
                    f"no sample count defined for a {deg:.6g} deg range at {self.label}; "
                    "give explicit counts")
            out.append(table[key])
        return tuple(out)


def joint_samples(lo: float, hi: float, n: int, sampling: str = DEFAULT_SAMPLING) -> np.ndarray:
    """``n`` samples of ``[lo, hi]``.

    ``endpoints`` spaces them ``(hi - lo) / (n - 1)`` apart and hits both
    limits; the other conventions use a ``(hi - lo) / n`` step.
    """
    if sampling == "endpoints":
        return np.linspace(lo, hi, n)
    i = np.arange(n, dtype=float)
    if sampling == "min-inclusive":
        offs = i
    elif sampling == "max-inclusive":
        offs = i + 1.0
    elif sampling == "midpoint":
        offs = i + 0.5
    else:
        raise GridConfigError(f"unknown sampling convention {sampling!r}")
    vals = lo + offs * (hi - lo) / n
    if sampling == "max-inclusive":
        vals[-1] = hi
    return vals


@dataclass(frozen=True)
class ConfigurationGrid:
    """Row-major product grid over the actuated joints."""

    values: Tuple[np.ndarray, ...]
    sampling: str = DEFAULT_SAMPLING

    @property
    def counts(self) -> Tuple[int, ...]:
        return tuple(len(v) for v in self.values)

    @property
    def size(self) -> int:
        return int(np.prod(self.counts, dtype=np.int64))

    @property
    def n_joints(self) -> int:
        return len(self.values)

    def configurations(self, start: int = 0, stop: Optional[int] = None) -> np.ndarray:
        stop = self.size if stop is None else min(stop, self.size)
        idx = np.arange(start, stop, dtype=np.int64)
        multi = np.unravel_index(idx, self.counts)
        return np.stack([v[m] for v, m in zip(self.values, multi)], axis=1)

    def configuration(self, index: int) -> np.ndarray:
        if not 0 <= index < self.size:
            raise IndexError(f"grid index {index} out of range [0, {self.size})")
        multi = np.unravel_index(index, self.counts)
        return np.array([v[m] for v, m in zip(self.values, multi)])

    def describe(self) -> dict:
        return {"sampling": self.sampling, "counts": list(self.counts),
                "values": [[float(x) for x in v] for v in self.values]}


def grid(ranges: JointRangeSet, policy: Union[ResolutionPolicy, int] = 1,
         sampling: str = DEFAULT_SAMPLING) -> ConfigurationGrid:
    if isinstance(policy, int):
        policy = ResolutionPolicy(policy)
    counts = policy.counts_for(ranges)
    values = tuple(joint_samples(lo, hi, n, sampling) for (lo, hi), n in zip(ranges, counts))
    return ConfigurationGrid(values, sampling)


@dataclass
class SampleSet:
    """Fingertip digests for every configuration of one finger's grid.

    Stored as contiguous ``(N, 3)`` blocks; row ``k`` is grid index ``k``.
    ``phalanx_points`` (``(N, P, 3)``) is only filled when requested.
    """

    finger: str
    grid: ConfigurationGrid
    p_joint: np.ndarray
    p_tip: np.ndarray
    direction: np.ndarray
    phalanx_points: Optional[np.ndarray] = None
    distal_length: float = float("nan")
    model_key: str = ""

    def __len__(self) -> int:
        return self.p_tip.shape[0]

    @property
    def size(self) -> int:
        return len(self)


def enumerate_samples(model: HandModel, finger: str, grid_: ConfigurationGrid,
                      include_phalanges: bool = False, workers: int = 1,
                      chunk_size: int = 1 << 18) -> SampleSet:
    chain = model.chain(finger)
    if grid_.n_joints != chain.n_actuated:
        raise GridConfigError(
            f"{finger}: grid has {grid_.n_joints} joints, chain has {chain.n_actuated}")
    N = grid_.size
    p_joint = np.empty((N, 3))
    p_tip = np.empty((N, 3))
    direction = np.empty((N, 3))
    phal = np.empty((N, len(chain.phalanx_frames), 3)) if include_phalanges else None

    def work(start: int) -> None:
        stop = min(start + chunk_size, N)
        pts = frame_positions(chain, grid_.configurations(start, stop))
        pj, pe, v = distal_digest(pts)
        p_joint[start:stop] = pj
        p_tip[start:stop] = pe
        direction[start:stop] = v
        if phal is not None:
            phal[start:stop] = pts

    starts = range(0, N, chunk_size)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            list(pool.map(work, starts))
    else:
        for s in starts:
            work(s)
    return SampleSet(finger, grid_, p_joint, p_tip, direction, phal, chain.distal_length,
                     model.key)


def reachable_cloud(samples: SampleSet) -> np.ndarray:
    return samples.p_tip.copy()


def write_cloud_csv(samples: Union[SampleSet, Sequence[SampleSet]], path: Union[str, Path]) -> None:
    sets = [samples] if isinstance(samples, SampleSet) else list(samples)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["finger", "grid_index", "x", "y", "z"])
        for s in sets:
            for k, (x, y, z) in enumerate(s.p_tip.tolist()):
                w.writerow([s.finger, k, repr(x), repr(y), repr(z)])


def read_cloud_csv(path: Union[str, Path]) -> Dict[str, np.ndarray]:
    rows: Dict[str, List[Tuple[int, float, float, float]]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            rows.setdefault(rec["finger"], []).append(
                (int(rec["grid_index"]), float(rec["x"]), float(rec["y"]), float(rec["z"])))
    out = {}
    for finger, recs in rows.items():
        recs.sort()
        out[finger] = np.array([r[1:] for r in recs]).reshape(-1, 3)
    return out


# ---------------------------------------------------------------------------
# Binary sample-set dump
# ---------------------------------------------------------------------------

_MAGIC = b"HPSAMPLE"
_VERSION = 1


def save_samples(samples: SampleSet, path: Union[str, Path]) -> None:
    header = {
        "version": _VERSION,
        "finger": samples.finger,
        "size": len(samples),
        "grid": samples.grid.describe(),
        "distal_length": samples.distal_length,
        "model_key": samples.model_key,
        "phalanx_count": 0 if samples.phalanx_points is None else samples.phalanx_points.shape[1],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    tmp = Path(str(path) + ".part")
    with open(tmp, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", _VERSION, len(blob)))
        fh.write(blob)
        for arr in (samples.p_joint, samples.p_tip, samples.direction, samples.phalanx_points):
            if arr is not None:
                fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    tmp.replace(path)


def load_samples(path: Union[str, Path]) -> SampleSet:
    with open(path, "rb") as fh:
        if fh.read(len(_MAGIC)) != _MAGIC:
            raise GridConfigError(f"{path}: not a sample-set file")
        version, n = struct.unpack("<II", fh.read(8))
        if version != _VERSION:
            raise GridConfigError(f"{path}: unsupported sample-set version {version}")
        header = json.loads(fh.read(n).decode("utf-8"))
        N, P = header["size"], header["phalanx_count"]

        def block(*shape):
            count = int(np.prod(shape))
            arr = np.fromfile(fh, dtype="<f8", count=count)
            if arr.size != count:
                raise GridConfigError(f"{path}: truncated sample-set file")
            return arr.reshape(shape).astype(np.float64, copy=False)

        p_joint, p_tip, direction = block(N, 3), block(N, 3), block(N, 3)
        phal = block(N, P, 3) if P else None
    g = header["grid"]
    grid_ = ConfigurationGrid(tuple(np.array(v) for v in g["values"]), g["sampling"])
    return SampleSet(header["finger"], grid_, p_joint, p_tip, direction, phal,
                     header["distal_length"], header.get("model_key", ""))
