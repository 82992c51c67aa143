"""Hand models for the four finger/thumb DoF combinations.

All lengths are expressed in hand-length units unless ``hand_length`` is
changed.  Chains use the modified DH convention: each row lists
``(alpha_prev, a_prev, d, theta)`` and is applied as
``RotX(alpha_prev) TransX(a_prev) RotZ(theta) TransZ(d)``.

Coordinate frame (palm-rooted, ``P_o``)::

    +z_o : finger extension direction at the initial posture
    -y_o : index -> little spacing direction
    +x_o : finger flexion side; the thumb points along +x_o when unflexed
"""

from __future__ import annotations

import enum
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np

PI = math.pi

FINGERS = ("thumb", "index", "middle", "ring", "little")
NON_THUMB = ("index", "middle", "ring", "little")

FINGER_PLACEMENTS = ("axial", "lateral", "dh-offset")
THUMB_RANGE_READINGS = ("reconciled", "literal")


class HandModelError(ValueError):
    """Invalid hand parameters or model configuration."""


class CaseId(enum.IntEnum):
    CASE1 = 1
    CASE2 = 2
    CASE3 = 3
    CASE4 = 4

    @property
    def finger_dof(self) -> int:
        return 3 if self in (CaseId.CASE1, CaseId.CASE2) else 4

    @property
    def thumb_dof(self) -> int:
        return 4 if self in (CaseId.CASE1, CaseId.CASE3) else 5

    @classmethod
    def parse(cls, value: Union[int, str, "CaseId"]) -> "CaseId":
        if isinstance(value, CaseId):
            return value
        text = str(value).strip().lower().replace("case", "")
        try:
            return cls(int(text))
        except (ValueError, TypeError):
            raise HandModelError(f"unknown case {value!r}; expected 1..4") from None


@dataclass(frozen=True)
class HandParameters:
    hand_length: float = 1.0
    hand_width: float = 0.54
    finger_length: float = 0.45
    thumb_length: float = 0.51
    thumb_offset_0: float = 0.1  # a_0'
    thumb_offset_1: float = 0.1  # a_1'
    finger_station_depth: float = 0.55  # d_1 (= d_2 in the finger DH tables)
    finger_station_offset: float = 0.18  # a_1 of the index finger
    finger_spacing: float = 0.18  # a_2
    finger_segments_3dof: Tuple[float, ...] = (0.23, 0.22)  # a_3, a_4
    finger_segments_4dof: Tuple[float, ...] = (0.23, 0.12, 0.10)  # a_3, a_4, a_5
    thumb_segments: Tuple[float, ...] = (0.24, 0.16, 0.11)  # a_2', a_3'|a_6', a_4'|a_7'
    finger_placement: str = "axial"
    index_lateral_offset: float = 0.0

    def validate(self) -> None:
        lengths = [self.hand_length, self.hand_width, self.finger_length,
                   self.thumb_length, self.finger_spacing]
        lengths += list(self.finger_segments_3dof) + list(self.finger_segments_4dof)
        lengths += list(self.thumb_segments)
        if not all(np.isfinite(lengths)) or min(lengths) <= 0:
            raise HandModelError("all lengths must be finite and positive")
        if self.finger_placement not in FINGER_PLACEMENTS:
            raise HandModelError(
                f"finger_placement must be one of {FINGER_PLACEMENTS}, "
                f"got {self.finger_placement!r}")
        if len(self.finger_segments_3dof) != 2 or len(self.finger_segments_4dof) != 3:
            raise HandModelError("finger segment tuples must have 2 and 3 entries")
        if len(self.thumb_segments) != 3:
            raise HandModelError("thumb_segments must have 3 entries")

    def to_dict(self) -> dict:
        out = asdict(self)
        for key, value in out.items():
            if isinstance(value, tuple):
                out[key] = list(value)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "HandParameters":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise HandModelError(f"unknown hand parameter(s): {sorted(unknown)}")
        kwargs = {}
        for key, value in data.items():
            kwargs[key] = tuple(float(v) for v in value) if isinstance(value, list) else value
        return cls(**kwargs)


def derive_ratios(hand_length: float = 1.0) -> HandParameters:
    """Scale the reference hand-length ratios to ``hand_length``."""
    if not (isinstance(hand_length, (int, float)) and math.isfinite(hand_length)) \
            or hand_length <= 0:
        raise HandModelError(f"hand_length must be positive, got {hand_length!r}")
    hl = float(hand_length)
    finger_length = 0.45 * hl
    params = HandParameters(
        hand_length=hl,
        hand_width=0.54 * hl,
        finger_length=finger_length,
        thumb_length=0.51 * hl,
        thumb_offset_0=0.1 * hl,
        thumb_offset_1=0.1 * hl,
        finger_station_depth=hl - finger_length,
        finger_station_offset=0.18 * hl,
        finger_spacing=0.54 * hl / 3.0,
        finger_segments_3dof=(0.23 * hl, 0.22 * hl),
        finger_segments_4dof=(0.23 * hl, 0.12 * hl, 0.10 * hl),
        thumb_segments=(0.24 * hl, 0.16 * hl, 0.11 * hl),
    )
    params.validate()
    return params


# ---------------------------------------------------------------------------
# DH rows and chains
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FixedAngle:
    value: float


@dataclass(frozen=True)
class ActuatedJoint:
    index: int
    name: str = ""


@dataclass(frozen=True)
class DhRow:
    alpha_prev: float
    a_prev: float
    d: float
    theta: Union[FixedAngle, ActuatedJoint]

    @property
    def actuated(self) -> bool:
        return isinstance(self.theta, ActuatedJoint)


@dataclass(frozen=True)
class JointRangeSet:
    """Closed ``(min, max)`` interval in radians per actuated joint."""

    bounds: Tuple[Tuple[float, float], ...]

    def __post_init__(self):
        for lo, hi in self.bounds:
            if not (lo < hi):
                raise HandModelError(f"joint range min must be < max, got ({lo}, {hi})")

    def __len__(self) -> int:
        return len(self.bounds)

    def __iter__(self):
        return iter(self.bounds)

    def __getitem__(self, k):
        return self.bounds[k]

    @property
    def widths(self) -> Tuple[float, ...]:
        return tuple(hi - lo for lo, hi in self.bounds)

    def contains(self, q: Sequence[float]) -> bool:
        return len(q) == len(self.bounds) and all(
            lo <= v <= hi for v, (lo, hi) in zip(q, self.bounds))


@dataclass(frozen=True)
class KinematicChain:
    finger: str
    rows: Tuple[DhRow, ...]
    phalanx_frames: Tuple[int, ...]
    base_offset: Tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        last = self.rows[-1]
        if last.actuated or last.a_prev <= 0:
            raise HandModelError("last DH row must be a fixed link carrying the distal length")
        idx = [r.theta.index for r in self.rows if r.actuated]
        if idx != list(range(len(idx))):
            raise HandModelError("actuated joint indices must be 0..n-1 in row order")

    @property
    def n_actuated(self) -> int:
        return sum(1 for r in self.rows if r.actuated)

    @property
    def n_frames(self) -> int:
        return len(self.rows)

    @property
    def distal_length(self) -> float:
        return self.rows[-1].a_prev

    @property
    def joint_names(self) -> Tuple[str, ...]:
        return tuple(r.theta.name for r in self.rows if r.actuated)


def _thumb_rows(params: HandParameters, dof: int) -> Tuple[Tuple[DhRow, ...], Tuple[int, ...]]:
    a0, a1 = params.thumb_offset_0, params.thumb_offset_1
    s2, s3, s4 = params.thumb_segments
    if dof == 5:
        rows = (
            DhRow(0.0, a0, 0.0, ActuatedJoint(0, "theta1'")),
            DhRow(-PI / 2, a1, 0.0, ActuatedJoint(1, "theta2'")),
            DhRow(PI / 2, s2, 0.0, FixedAngle(PI / 2)),
            DhRow(PI / 2, 0.0, 0.0, ActuatedJoint(2, "theta4'")),
            DhRow(-PI / 2, 0.0, 0.0, FixedAngle(-PI / 2)),
            DhRow(-PI / 2, 0.0, 0.0, ActuatedJoint(3, "theta6'")),
            DhRow(0.0, s3, 0.0, ActuatedJoint(4, "theta7'")),
            DhRow(0.0, s4, 0.0, FixedAngle(0.0)),
        )
        return rows, (2, 3, 7, 8)
    rows = (
        DhRow(0.0, a0, 0.0, ActuatedJoint(0, "theta1'")),
        DhRow(-PI / 2, a1, 0.0, ActuatedJoint(1, "theta2'")),
        DhRow(PI / 2, s2, 0.0, ActuatedJoint(2, "theta3'")),
        DhRow(0.0, s3, 0.0, ActuatedJoint(3, "theta4'")),
        DhRow(0.0, s4, 0.0, FixedAngle(0.0)),
    )
    return rows, (2, 3, 4, 5)


def _finger_rows(params: HandParameters, dof: int, station_offset: float,
                 d2: float) -> Tuple[Tuple[DhRow, ...], Tuple[int, ...]]:
    head = (
        DhRow(PI / 2, 0.0, 0.0, FixedAngle(PI / 2)),
        DhRow(PI / 2, station_offset, d2, ActuatedJoint(0, "theta2")),
        DhRow(-PI / 2, 0.0, 0.0, ActuatedJoint(1, "theta3")),
    )
    if dof == 4:
        s3, s4, s5 = params.finger_segments_4dof
        tail = (
            DhRow(0.0, s3, 0.0, ActuatedJoint(2, "theta4")),
            DhRow(0.0, s4, 0.0, ActuatedJoint(3, "theta5")),
            DhRow(0.0, s5, 0.0, FixedAngle(0.0)),
        )
        return head + tail, (2, 4, 5, 6)
    s3, s4 = params.finger_segments_3dof
    tail = (
        DhRow(0.0, s3, 0.0, ActuatedJoint(2, "theta4")),
        DhRow(0.0, s4, 0.0, FixedAngle(0.0)),
    )
    return head + tail, (2, 4, 5)


def build_chain(case: CaseId, finger: str, params: HandParameters) -> KinematicChain:
    case = CaseId.parse(case)
    if finger == "thumb":
        rows, frames = _thumb_rows(params, case.thumb_dof)
        return KinematicChain("thumb", rows, frames)
    if finger not in NON_THUMB:
        raise HandModelError(f"unknown finger {finger!r}")
    k = NON_THUMB.index(finger)
    lateral = params.index_lateral_offset - k * params.finger_spacing
    depth = params.finger_station_depth
    if params.finger_placement == "axial":
        # Knuckle at depth d along z_o; the DH rows only orient the chain.
        rows, frames = _finger_rows(params, case.finger_dof, 0.0, 0.0)
        return KinematicChain(finger, rows, frames, (0.0, lateral, depth))
    if params.finger_placement == "lateral":
        # Stations share the DH row; fingers step along -y_o from the index.
        rows, frames = _finger_rows(params, case.finger_dof, params.finger_station_offset, depth)
        return KinematicChain(finger, rows, frames, (0.0, lateral, 0.0))
    rows, frames = _finger_rows(
        params, case.finger_dof, params.finger_station_offset + k * params.finger_spacing, depth)
    return KinematicChain(finger, rows, frames)


# ---------------------------------------------------------------------------
# Joint ranges
# ---------------------------------------------------------------------------

_FINGER_RANGES = {
    "theta2": (-PI / 6, PI / 6),
    "theta3": (-PI / 2, 2 * PI / 9),
    "theta4": (-PI / 2, 0.0),
    "theta5": (-PI / 2, 0.0),
}

_THUMB_RANGES = {
    4: {"theta1'": (0.0, PI / 2), "theta2'": (-PI / 2, 0.0),
        "theta3'": (-PI / 2, 0.0), "theta4'": (-PI / 2, 0.0)},
    5: {"theta1'": (0.0, PI / 2), "theta2'": (-PI / 2, 0.0),
        "theta4'": (-PI / 6, PI / 6), "theta6'": (-PI / 2, 0.0),
        "theta7'": (-PI / 2, 0.0)},
}

# Row-per-case reading of the published thumb range table.
_THUMB_RANGES_LITERAL = {
    CaseId.CASE1: {"theta1'": (0.0, PI / 2), "theta2'": (-PI / 2, 0.0),
                   "theta4'": (-PI / 2, 0.0), "theta3'": (-PI / 2, 0.0)},
    CaseId.CASE2: {"theta1'": (0.0, PI / 2), "theta2'": (-PI / 2, 0.0),
                   "theta4'": (-PI / 2, 0.0), "theta3'": (-PI / 2, 0.0)},
    CaseId.CASE3: {"theta1'": (0.0, PI / 2), "theta2'": (-PI / 2, 0.0),
                   "theta4'": (-PI / 2, 0.0), "theta3'": (-PI / 6, PI / 6),
                   "theta6'": (-PI / 2, 0.0), "theta7'": (-PI / 2, 0.0)},
    CaseId.CASE4: {"theta1'": (0.0, PI / 2), "theta2'": (-PI / 2, 0.0),
                   "theta4'": (-PI / 2, 0.0), "theta3'": (-PI / 6, PI / 6),
                   "theta6'": (-PI / 2, 0.0), "theta7'": (-PI / 2, 0.0)},
}


def joint_ranges(case: Union[CaseId, int], finger: str,
                 reading: str = "reconciled") -> JointRangeSet:
    """Default actuating ranges for one finger of one case.

    ``reading="literal"`` maps the thumb table row-by-case onto joint names;
    joints the literal row leaves unspecified fall back to ``[-pi/2, 0]``.
    """
    case = CaseId.parse(case)
    if reading not in THUMB_RANGE_READINGS:
        raise HandModelError(f"unknown range reading {reading!r}")
    if finger == "thumb":
        names = _thumb_rows(derive_ratios(), case.thumb_dof)[0]
        names = [r.theta.name for r in names if r.actuated]
        if reading == "literal":
            table = _THUMB_RANGES_LITERAL[case]
            return JointRangeSet(tuple(table.get(n, (-PI / 2, 0.0)) for n in names))
        table = _THUMB_RANGES[case.thumb_dof]
        return JointRangeSet(tuple(table[n] for n in names))
    if finger not in NON_THUMB:
        raise HandModelError(f"unknown finger {finger!r}")
    names = ["theta2", "theta3", "theta4"] + (["theta5"] if case.finger_dof == 4 else [])
    return JointRangeSet(tuple(_FINGER_RANGES[n] for n in names))


# ---------------------------------------------------------------------------
# Hand model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HandModel:
    case: CaseId
    params: HandParameters
    chains: Dict[str, KinematicChain]
    ranges: Dict[str, JointRangeSet]
    range_reading: str = "reconciled"
    range_overrides: Dict[str, Tuple[Tuple[float, float], ...]] = field(default_factory=dict)

    def chain(self, finger: str) -> KinematicChain:
        try:
            return self.chains[finger]
        except KeyError:
            raise HandModelError(f"unknown finger {finger!r}") from None

    def joint_range(self, finger: str) -> JointRangeSet:
        return self.ranges[finger]

    def fingerprint(self) -> dict:
        """Canonical description used for cache keys and manifests."""
        return config_dict(self)

    @property
    def key(self) -> str:
        blob = json.dumps(config_dict(self), sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()[:16]


def build_case(case: Union[CaseId, int, str], params: Optional[HandParameters] = None,
               range_reading: str = "reconciled",
               range_overrides: Optional[Dict[str, Sequence[Sequence[float]]]] = None
               ) -> HandModel:
    case = CaseId.parse(case)
    params = params if params is not None else derive_ratios()
    params.validate()
    overrides = {}
    for finger, bounds in (range_overrides or {}).items():
        if finger not in FINGERS:
            raise HandModelError(f"range override for unknown finger {finger!r}")
        overrides[finger] = tuple((float(lo), float(hi)) for lo, hi in bounds)
    chains = {f: build_chain(case, f, params) for f in FINGERS}
    ranges = {}
    for f in FINGERS:
        rs = JointRangeSet(overrides[f]) if f in overrides else joint_ranges(case, f, range_reading)
        if len(rs) != chains[f].n_actuated:
            raise HandModelError(
                f"{f}: {len(rs)} ranges given for {chains[f].n_actuated} actuated joints")
        ranges[f] = rs
    return HandModel(case, params, chains, ranges, range_reading, overrides)


# ---------------------------------------------------------------------------
# Config round trip
# ---------------------------------------------------------------------------

def config_dict(model: HandModel) -> dict:
    reference = derive_ratios(model.params.hand_length).to_dict()
    current = model.params.to_dict()
    out = {
        "case": int(model.case),
        "hand_length": model.params.hand_length,
        "overrides": {k: v for k, v in current.items()
                      if k != "hand_length" and v != reference[k]},
        "range_reading": model.range_reading,
    }
    if model.range_overrides:
        out["joint_ranges"] = {f: [list(b) for b in bounds]
                               for f, bounds in model.range_overrides.items()}
    return out


def model_from_config(data: dict) -> HandModel:
    if "case" not in data:
        raise HandModelError("config is missing 'case'")
    params = derive_ratios(float(data.get("hand_length", 1.0)))
    overrides = data.get("overrides") or {}
    if overrides:
        merged = params.to_dict()
        unknown = set(overrides) - set(merged)
        if unknown:
            raise HandModelError(f"unknown hand parameter override(s): {sorted(unknown)}")
        merged.update(overrides)
        params = HandParameters.from_dict(merged)
    return build_case(data["case"], params,
                      range_reading=data.get("range_reading", "reconciled"),
                      range_overrides=data.get("joint_ranges"))


def save_model(model: HandModel, path: Union[str, Path]) -> None:
    Path(path).write_text(json.dumps(config_dict(model), indent=2) + "\n", encoding="utf-8")


def load_model(path: Union[str, Path]) -> HandModel:
    return model_from_config(json.loads(Path(path).read_text(encoding="utf-8")))
