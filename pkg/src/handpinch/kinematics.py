"""Forward kinematics for modified-DH chains.

Two paths share the same arithmetic: :func:`forward_kinematics` composes 4x4
homogeneous transforms for a single configuration, and
:func:`frame_positions` runs the same recursion element-wise over a batch of
configurations.  The batched path never calls BLAS, so each configuration's
result does not depend on how the batch is chunked.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .hand_model import ActuatedJoint, DhRow, KinematicChain

_HALF_PI = np.pi / 2


class DegenerateGeometryError(ValueError):
    """A distal segment has zero length, so its direction is undefined."""


class ConfigurationLengthError(ValueError):
    """A configuration vector does not match the chain's actuated joint count."""


def _cos_sin(angle):
    """cos/sin with exact values at integer multiples of pi/2."""
    angle = np.asarray(angle, dtype=float)
    c, s = np.cos(angle), np.sin(angle)
    k = np.round(angle / _HALF_PI)
    snap = np.abs(angle - k * _HALF_PI) <= 1e-15 * np.maximum(1.0, np.abs(angle))
    if np.any(snap):
        km = np.mod(k, 4).astype(int)
        c = np.where(snap, np.array([1.0, 0.0, -1.0, 0.0])[km], c)
        s = np.where(snap, np.array([0.0, 1.0, 0.0, -1.0])[km], s)
    return c, s


def rot_x(alpha: float) -> np.ndarray:
    c, s = _cos_sin(alpha)
    return np.array([[1.0, 0.0, 0.0, 0.0],
                     [0.0, c, -s, 0.0],
                     [0.0, s, c, 0.0],
                     [0.0, 0.0, 0.0, 1.0]])


def rot_z(theta: float) -> np.ndarray:
    c, s = _cos_sin(theta)
    return np.array([[c, -s, 0.0, 0.0],
                     [s, c, 0.0, 0.0],
                     [0.0, 0.0, 1.0, 0.0],
                     [0.0, 0.0, 0.0, 1.0]])


def trans(x: float = 0.0, y: float = 0.0, z: float = 0.0) -> np.ndarray:
    T = np.eye(4)
    T[:3, 3] = (x, y, z)
    return T


def dh_transform(row: DhRow, theta: float) -> np.ndarray:
    """Single-row transform ``RotX(alpha) TransX(a) RotZ(theta) TransZ(d)``."""
    ca, sa = _cos_sin(row.alpha_prev)
    ct, st = _cos_sin(theta)
    return np.array([
        [ct, -st, 0.0, row.a_prev],
        [st * ca, ct * ca, -sa, -sa * row.d],
        [st * sa, ct * sa, ca, ca * row.d],
        [0.0, 0.0, 0.0, 1.0],
    ])


def row_angles(chain: KinematicChain, q: Sequence[float]) -> List[float]:
    q = np.asarray(q, dtype=float).ravel()
    if q.shape[0] != chain.n_actuated:
        raise ConfigurationLengthError(
            f"{chain.finger}: expected {chain.n_actuated} joint values, got {q.shape[0]}")
    return [float(q[r.theta.index]) if isinstance(r.theta, ActuatedJoint) else r.theta.value
            for r in chain.rows]


def forward_kinematics(chain: KinematicChain, q: Sequence[float]) -> List[np.ndarray]:
    """Frames ``[T_0, T_1, ..., T_n]`` in the palm frame; ``T_0`` is the chain base."""
    angles = row_angles(chain, q)
    T = trans(*chain.base_offset)
    frames = [T]
    for row, theta in zip(chain.rows, angles):
        T = T @ dh_transform(row, theta)
        frames.append(T)
    return frames


def full_product(chain: KinematicChain, q: Sequence[float]) -> np.ndarray:
    """End-frame transform built as one product of all row transforms."""
    mats = [trans(*chain.base_offset)]
    mats += [dh_transform(r, t) for r, t in zip(chain.rows, row_angles(chain, q))]
    return np.linalg.multi_dot(mats)


@dataclass(frozen=True)
class FingertipSample:
    finger: str
    grid_index: int
    p_joint: np.ndarray
    p_tip: np.ndarray
    direction: np.ndarray
    phalanx_points: np.ndarray  # (n_phalanx_frames, 3), proximal -> distal

    @property
    def distal_length(self) -> float:
        return float(np.linalg.norm(self.p_tip - self.p_joint))


def fingertip_sample(chain: KinematicChain, q: Sequence[float], grid_index: int = -1
                     ) -> FingertipSample:
    frames = forward_kinematics(chain, q)
    pts = np.array([frames[k][:3, 3] for k in chain.phalanx_frames])
    p_j, p_e = pts[-2].copy(), pts[-1].copy()
    seg = p_e - p_j
    norm = np.sqrt(seg @ seg)
    if not norm > 0:
        raise DegenerateGeometryError(f"{chain.finger}: zero-length distal segment")
    return FingertipSample(chain.finger, grid_index, p_j, p_e, seg / norm, pts)


# ---------------------------------------------------------------------------
# Batched recursion
# ---------------------------------------------------------------------------

def frame_positions(chain: KinematicChain, Q: np.ndarray,
                    frames: Optional[Sequence[int]] = None) -> np.ndarray:
    """Origins of the requested frames for every row of ``Q``.

    Returns an array of shape ``(M, len(frames), 3)``.  Frame ``k`` is the frame
    after ``k`` DH rows (frame 0 is the chain base).
    """
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    if Q.shape[1] != chain.n_actuated:
        raise ConfigurationLengthError(
            f"{chain.finger}: expected {chain.n_actuated} joint columns, got {Q.shape[1]}")
    frames = tuple(chain.phalanx_frames if frames is None else frames)
    M = Q.shape[0]
    out = np.empty((M, len(frames), 3))
    # columns of the running rotation, and the running origin
    c0 = np.zeros((M, 3)); c0[:, 0] = 1.0
    c1 = np.zeros((M, 3)); c1[:, 1] = 1.0
    c2 = np.zeros((M, 3)); c2[:, 2] = 1.0
    p = np.tile(np.asarray(chain.base_offset, dtype=float), (M, 1))
    if 0 in frames:
        out[:, frames.index(0)] = p
    for k, row in enumerate(chain.rows, start=1):
        ca, sa = (float(v) for v in _cos_sin(row.alpha_prev))
        # origin shift in the previous frame: (a, -sin(alpha) d, cos(alpha) d)
        ty, tz = -sa * row.d, ca * row.d
        p = p + c0 * row.a_prev
        if ty != 0.0:
            p = p + c1 * ty
        if tz != 0.0:
            p = p + c2 * tz
        # R <- R RotX(alpha)
        c1, c2 = c1 * ca + c2 * sa, c2 * ca - c1 * sa
        # R <- R RotZ(theta)
        if isinstance(row.theta, ActuatedJoint):
            ct, st = _cos_sin(Q[:, row.theta.index])
            ct, st = ct[:, None], st[:, None]
        else:
            ct, st = (float(v) for v in _cos_sin(row.theta.value))
        c0, c1 = c0 * ct + c1 * st, c1 * ct - c0 * st
        if k in frames:
            out[:, frames.index(k)] = p
    return out


def distal_digest(points: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(p_joint, p_tip, unit direction)`` from batched phalanx points."""
    p_j = np.ascontiguousarray(points[:, -2, :])
    p_e = np.ascontiguousarray(points[:, -1, :])
    seg = p_e - p_j
    norm = np.sqrt(seg[:, 0] * seg[:, 0] + seg[:, 1] * seg[:, 1] + seg[:, 2] * seg[:, 2])
    if np.any(~(norm > 0)):
        raise DegenerateGeometryError("zero-length distal segment in batch")
    return p_j, p_e, seg / norm[:, None]
