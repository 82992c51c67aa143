"""Independent reference computations used by the tests.

Transforms are assembled from axis-angle (Rodrigues) rotations rather than
the closed-form DH matrix the library uses.
"""

import numpy as np

from handpinch.hand_model import ActuatedJoint


def rodrigues(axis, angle):
    """Batched rotation matrices about a fixed unit axis; ``angle`` has shape (M,)."""
    angle = np.asarray(angle, dtype=float)
    k = np.asarray(axis, dtype=float)
    K = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    s, c = np.sin(angle)[:, None, None], np.cos(angle)[:, None, None]
    return np.eye(3) + s * K + (1 - c) * (K @ K)


def homog(R, t):
    M = R.shape[0]
    T = np.zeros((M, 4, 4))
    T[:, :3, :3] = R
    T[:, :3, 3] = t
    T[:, 3, 3] = 1.0
    return T


def chain_frames(chain, Q):
    """All frames ``(M, n_rows + 1, 4, 4)`` as RotX * TransX * RotZ * TransZ products."""
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    M = Q.shape[0]
    eye = np.broadcast_to(np.eye(3), (M, 3, 3))
    T = homog(eye, np.broadcast_to(np.asarray(chain.base_offset, float), (M, 3)))
    out = [T]
    for row in chain.rows:
        th = Q[:, row.theta.index] if isinstance(row.theta, ActuatedJoint) \
            else np.full(M, row.theta.value)
        rx = homog(rodrigues([1, 0, 0], np.full(M, row.alpha_prev)), np.zeros((M, 3)))
        tx = homog(eye, np.tile([row.a_prev, 0, 0], (M, 1)))
        rz = homog(rodrigues([0, 0, 1], th), np.zeros((M, 3)))
        tz = homog(eye, np.tile([0, 0, row.d], (M, 1)))
        T = T @ rx @ tx @ rz @ tz
        out.append(T)
    return np.stack(out, axis=1)


def random_configs(ranges, n, rng):
    lo = np.array([b[0] for b in ranges])
    hi = np.array([b[1] for b in ranges])
    return lo + rng.random((n, len(lo))) * (hi - lo)


def brute_alignment(ref, opp, eps, strict=True):
    """Accepted-pair boolean matrix by numpy broadcasting."""
    v = ref.direction

    def dot(p, q):  # same summation order as the compiled predicate
        return (p[:, None, 0] * q[None, :, 0] + p[:, None, 1] * q[None, :, 1]
                + p[:, None, 2] * q[None, :, 2])

    def rdot(p):
        return (v[:, 0] * p[:, 0] + v[:, 1] * p[:, 1] + v[:, 2] * p[:, 2])[:, None]

    res = np.abs(1.0 - dot(v, opp.direction))
    a1, a2 = rdot(ref.p_joint), rdot(ref.p_tip)
    b1, b2 = dot(v, opp.p_joint), dot(v, opp.p_tip)
    l_ovr = np.minimum(np.maximum(a1, a2), np.maximum(b1, b2)) - \
        np.maximum(np.minimum(a1, a2), np.minimum(b1, b2))
    ok = l_ovr > 0 if strict else l_ovr >= 0
    return (res < eps) & ok


def contact_points(start, end, step=0.1):
    n = int(round(1.0 / step))
    s = np.array([k * step for k in range(n)] + [1.0])
    return start[..., None, :] + s[:, None] * (end - start)[..., None, :]


def brute_lateral(thumb, index, spans, delta, step=0.1):
    """``(n_t, n_i, n_spans)`` boolean match array by broadcasting."""
    tp = contact_points(thumb.p_joint, thumb.p_tip, step)            # (T, A, 3)
    ph = index.phalanx_points
    ip = contact_points(ph[:, :-1], ph[:, 1:], step)                 # (I, K, B, 3)
    xlo = np.minimum(ph[:, :-1, 0], ph[:, 1:, 0])                    # (I, K)
    xhi = np.maximum(ph[:, :-1, 0], ph[:, 1:, 0])
    t = tp[:, None, None, :, None, :]                                # (T,1,1,A,1,3)
    q = ip[None, :, :, None, :, :]                                   # (1,I,K,1,B,3)
    dx, dy, dz = (t[..., j] - q[..., j] for j in range(3))
    d = np.sqrt(dx * dx + dy * dy + dz * dz)                         # (T,I,K,A,B)
    tx = tp[:, None, None, :, None, 0]
    inside = (xlo[None, :, :, None, None] <= tx) & (tx <= xhi[None, :, :, None, None])
    above = t[..., 1] >= q[..., 1]
    ok = inside & above
    out = np.zeros((len(tp), len(ip), len(spans)), dtype=bool)
    for k, s in enumerate(spans):
        out[:, :, k] = (ok & (np.abs(d - s) < delta)).any(axis=(2, 3, 4))
    return out


def brute_tip(thumb, finger, spans, delta):
    v, w = thumb.direction, finger.direction
    c = v[:, None, 0] * w[None, :, 0] + v[:, None, 1] * w[None, :, 1] + v[:, None, 2] * w[None, :, 2]
    pt, pf = thumb.p_tip, finger.p_tip
    ok = (1.0 - np.abs(c) > 0) & (pt[:, None, 1] >= pf[None, :, 1]) & \
        (pf[None, :, 2] >= pt[:, None, 2])
    dx, dy, dz = (pt[:, None, j] - pf[None, :, j] for j in range(3))
    d = np.sqrt(dx * dx + dy * dy + dz * dz)
    out = np.zeros((len(pt), len(pf), len(spans)), dtype=bool)
    for k, s in enumerate(spans):
        out[:, :, k] = ok & (np.abs(d - s) < delta)
    return out
