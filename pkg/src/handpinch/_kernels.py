"""Compiled inner loops for the pair searches.

Every search comes in a naive flavour (exhaustive double loop) and a pruned
flavour.  Both call the same per-pair predicate, so pruning can only skip
work, never change a verdict.  Kernels release the GIL and write detection
flags into shared ``uint8`` arrays; concurrent writers only ever store 1.
"""

from __future__ import annotations

import numpy as np
from numba import njit

_JIT = dict(nogil=True, cache=True, fastmath=False)


# ---------------------------------------------------------------------------
# Shared predicates
# ---------------------------------------------------------------------------

# Predicates take (array, row) pairs rather than row views: slicing inside
# the hot loops costs an order of magnitude in throughput.

@njit(**_JIT)
def align_accept_at(rv, rpj, rpe, r, ov, opj, ope, o, eps, strict):
    vx = rv[r, 0]
    vy = rv[r, 1]
    vz = rv[r, 2]
    residual = abs(1.0 - (vx * ov[o, 0] + vy * ov[o, 1] + vz * ov[o, 2]))
    if not residual < eps:
        return False
    a1 = vx * rpj[r, 0] + vy * rpj[r, 1] + vz * rpj[r, 2]
    a2 = vx * rpe[r, 0] + vy * rpe[r, 1] + vz * rpe[r, 2]
    b1 = vx * opj[o, 0] + vy * opj[o, 1] + vz * opj[o, 2]
    b2 = vx * ope[o, 0] + vy * ope[o, 1] + vz * ope[o, 2]
    l_ovr = min(max(a1, a2), max(b1, b2)) - max(min(a1, a2), min(b1, b2))
    if strict:
        return l_ovr > 0.0
    return l_ovr >= 0.0


@njit(**_JIT)
def align_residual_overlap_at(rv, rpj, rpe, r, ov, opj, ope, o):
    vx = rv[r, 0]
    vy = rv[r, 1]
    vz = rv[r, 2]
    residual = abs(1.0 - (vx * ov[o, 0] + vy * ov[o, 1] + vz * ov[o, 2]))
    a1 = vx * rpj[r, 0] + vy * rpj[r, 1] + vz * rpj[r, 2]
    a2 = vx * rpe[r, 0] + vy * rpe[r, 1] + vz * rpe[r, 2]
    b1 = vx * opj[o, 0] + vy * opj[o, 1] + vz * opj[o, 2]
    b2 = vx * ope[o, 0] + vy * ope[o, 1] + vz * ope[o, 2]
    return residual, min(max(a1, a2), max(b1, b2)) - max(min(a1, a2), min(b1, b2))


@njit(**_JIT)
def span_mask(d, spans, delta):
    """Bit k set iff ``|d - spans[k]| < delta`` (spans sorted ascending)."""
    n = spans.shape[0]
    lo = 0
    hi = n
    x = d - delta
    while lo < hi:
        mid = (lo + hi) >> 1
        if spans[mid] <= x:
            lo = mid + 1
        else:
            hi = mid
    if lo > 0:
        lo -= 1
    mask = np.uint64(0)
    for k in range(lo, n):
        s = spans[k]
        if s - d > delta:
            break
        if abs(d - s) < delta:
            mask |= np.uint64(1) << np.uint64(k)
    return mask


@njit(**_JIT)
def _record_mask(mask, a, b, n_spans, hist, wa_span, wb_span):
    for k in range(n_spans):
        if mask & (np.uint64(1) << np.uint64(k)):
            hist[k] += 1
            wa_span[k, a] = 1
            wb_span[k, b] = 1


@njit(**_JIT)
def _spans_reachable(dmin, dmax, spans, delta, slack):
    lo = dmin - delta - slack
    hi = dmax + delta + slack
    for k in range(spans.shape[0]):
        if spans[k] > lo and spans[k] < hi:
            return True
    return False


# ---------------------------------------------------------------------------
# Alignment
# ---------------------------------------------------------------------------

@njit(**_JIT)
def align_naive(r_lo, r_hi, rpj, rpe, rv, opj, ope, ov, eps, strict, w_ref, w_opp):
    n_opp = opj.shape[0]
    accepted = 0
    for r in range(r_lo, r_hi):
        hit = False
        for o in range(n_opp):
            if align_accept_at(rv, rpj, rpe, r, ov, opj, ope, o, eps, strict):
                w_opp[o] = 1
                hit = True
                accepted += 1
        if hit:
            w_ref[r] = 1
    return (r_hi - r_lo) * n_opp, accepted


@njit(**_JIT)
def cube_face_coords(v, face):
    axis = face // 2
    sign = 1.0 if face % 2 == 0 else -1.0
    c = sign * v[axis]
    if c <= 0.0:
        return False, 0.0, 0.0
    return True, v[(axis + 1) % 3] / c, v[(axis + 2) % 3] / c


@njit(**_JIT)
def primary_face(v):
    ax = 0
    best = abs(v[0])
    if abs(v[1]) > best:
        ax = 1
        best = abs(v[1])
    if abs(v[2]) > best:
        ax = 2
    return 2 * ax + (0 if v[ax] >= 0.0 else 1)


@njit(**_JIT)
def cell_keys(reps, h, n):
    m = reps.shape[0]
    keys = np.empty(m, dtype=np.int64)
    for g in range(m):
        f = primary_face(reps[g])
        ok, u, w = cube_face_coords(reps[g], f)
        iu = min(max(int(np.floor((u + 1.0 + h) / h)), 0), n - 1)
        iw = min(max(int(np.floor((w + 1.0 + h) / h)), 0), n - 1)
        keys[g] = (f * n + iu) * n + iw
    return keys


@njit(**_JIT)
def align_binned(g_lo, g_hi,
                 r_order, r_off, r_rep, rpj, rpe, rv,
                 o_order, o_off, o_rep, opj, ope, ov,
                 ukeys, ustart, o_sorted_groups,
                 h, n, group_eps, eps, strict, w_ref, w_opp):
    """Direction-binned alignment over reference groups ``[g_lo, g_hi)``.

    Returns ``(group_pairs, member_pairs, accepted)`` counters.
    """
    n_cells = ukeys.shape[0]
    group_pairs = 0
    member_pairs = 0
    accepted = 0
    lim = 1.0 + h
    for g in range(g_lo, g_hi):
        vg = r_rep[g]
        for face in range(6):
            ok, u, w = cube_face_coords(vg, face)
            if not ok or abs(u) > lim or abs(w) > lim:
                continue
            iu = int(np.floor((u + 1.0 + h) / h))
            iw = int(np.floor((w + 1.0 + h) / h))
            for du in range(-1, 2):
                cu = iu + du
                if cu < 0 or cu >= n:
                    continue
                for dw in range(-1, 2):
                    cw = iw + dw
                    if cw < 0 or cw >= n:
                        continue
                    key = (face * n + cu) * n + cw
                    pos = np.searchsorted(ukeys, key)
                    if pos >= n_cells or ukeys[pos] != key:
                        continue
                    for j in range(ustart[pos], ustart[pos + 1]):
                        og = o_sorted_groups[j]
                        group_pairs += 1
                        c = (vg[0] * o_rep[og, 0] + vg[1] * o_rep[og, 1]
                             + vg[2] * o_rep[og, 2])
                        if not abs(1.0 - c) < group_eps:
                            continue
                        for a in range(r_off[g], r_off[g + 1]):
                            r = r_order[a]
                            hit = False
                            for b in range(o_off[og], o_off[og + 1]):
                                o = o_order[b]
                                member_pairs += 1
                                if align_accept_at(rv, rpj, rpe, r, ov, opj, ope, o,
                                                   eps, strict):
                                    w_opp[o] = 1
                                    hit = True
                                    accepted += 1
                            if hit:
                                w_ref[r] = 1
    return group_pairs, member_pairs, accepted


@njit(**_JIT)
def align_log_pairs(r_lo, r_hi, rpj, rpe, rv, opj, ope, ov, eps, strict, out, cap):
    """Naive enumeration of accepted pairs into ``out`` rows (r, o, residual, l_ovr)."""
    n_opp = opj.shape[0]
    k = 0
    for r in range(r_lo, r_hi):
        for o in range(n_opp):
            if align_accept_at(rv, rpj, rpe, r, ov, opj, ope, o, eps, strict):
                if k < cap:
                    res, l = align_residual_overlap_at(rv, rpj, rpe, r, ov, opj, ope, o)
                    out[k, 0] = r
                    out[k, 1] = o
                    out[k, 2] = res
                    out[k, 3] = l
                k += 1
    return k


# ---------------------------------------------------------------------------
# Tip pinch
# ---------------------------------------------------------------------------

@njit(**_JIT)
def tip_pair_mask_at(tpe, tv, t, fpe, fv, f, spans, delta):
    c = tv[t, 0] * fv[f, 0] + tv[t, 1] * fv[f, 1] + tv[t, 2] * fv[f, 2]
    if not 1.0 - abs(c) > 0.0:
        return np.uint64(0)
    py = tpe[t, 1]
    if not py >= fpe[f, 1]:
        return np.uint64(0)
    pz = tpe[t, 2]
    if not fpe[f, 2] >= pz:
        return np.uint64(0)
    dx = tpe[t, 0] - fpe[f, 0]
    dy = py - fpe[f, 1]
    dz = pz - fpe[f, 2]
    return span_mask(np.sqrt(dx * dx + dy * dy + dz * dz), spans, delta)


@njit(**_JIT)
def tip_naive(t_lo, t_hi, tpe, tv, fpe, fv, spans, delta, wt_span, wf_span):
    n_spans = spans.shape[0]
    hist = np.zeros(n_spans, dtype=np.int64)
    nf = fpe.shape[0]
    for t in range(t_lo, t_hi):
        for f in range(nf):
            mask = tip_pair_mask_at(tpe, tv, t, fpe, fv, f, spans, delta)
            if mask:
                _record_mask(mask, t, f, n_spans, hist, wt_span, wf_span)
    return hist, (t_hi - t_lo) * nf


@njit(**_JIT)
def _point_box_bounds(px, py, pz, lo, hi, c):
    """Min and max distance from a point to box ``c`` of ``lo``/``hi``."""
    dmin2 = 0.0
    dmax2 = 0.0
    p = (px, py, pz)
    for a in range(3):
        l = lo[c, a]
        u = hi[c, a]
        if p[a] < l:
            e = l - p[a]
        elif p[a] > u:
            e = p[a] - u
        else:
            e = 0.0
        dmin2 += e * e
        far = max(abs(p[a] - l), abs(p[a] - u))
        dmax2 += far * far
    return np.sqrt(dmin2), np.sqrt(dmax2)


@njit(**_JIT)
def tip_binned(t_lo, t_hi, tpe, tv, fpe, fv, spans, delta,
               cell_start, cell_members, cell_lo, cell_hi, wt_span, wf_span):
    """Tip search over a uniform grid of finger tips.

    ``cell_lo``/``cell_hi`` are the exact bounding boxes of each cell's members.
    """
    n_spans = spans.shape[0]
    hist = np.zeros(n_spans, dtype=np.int64)
    n_cells = cell_start.shape[0] - 1
    pairs = 0
    for t in range(t_lo, t_hi):
        px = tpe[t, 0]
        py = tpe[t, 1]
        pz = tpe[t, 2]
        for c in range(n_cells):
            # every member fails y_t >= y_f, or every member fails z_f >= z_t
            if cell_lo[c, 1] > py or cell_hi[c, 2] < pz:
                continue
            dmin, dmax = _point_box_bounds(px, py, pz, cell_lo, cell_hi, c)
            if not _spans_reachable(dmin, dmax, spans, delta, 1e-9):
                continue
            for j in range(cell_start[c], cell_start[c + 1]):
                f = cell_members[j]
                pairs += 1
                mask = tip_pair_mask_at(tpe, tv, t, fpe, fv, f, spans, delta)
                if mask:
                    _record_mask(mask, t, f, n_spans, hist, wt_span, wf_span)
    return hist, pairs


# ---------------------------------------------------------------------------
# Lateral pinch
# ---------------------------------------------------------------------------

@njit(**_JIT)
def lateral_item_mask(tpts, t, ipts, i, k, xlo, xhi, spans, delta):
    """Span mask for thumb ``t``'s distal contact points against index item ``(i, k)``.

    ``tpts``: (Nt, S_t, 3); ``ipts``: (Ni, K, S_i, 3); ``[xlo, xhi]`` is the
    closed ``x_o`` interval of phalanx ``k``'s endpoints.
    """
    mask = np.uint64(0)
    for a in range(tpts.shape[1]):
        x = tpts[t, a, 0]
        if not (xlo <= x and x <= xhi):
            continue
        y = tpts[t, a, 1]
        z = tpts[t, a, 2]
        for b in range(ipts.shape[2]):
            yi = ipts[i, k, b, 1]
            if not y >= yi:
                continue
            dx = x - ipts[i, k, b, 0]
            dy = y - yi
            dz = z - ipts[i, k, b, 2]
            mask |= span_mask(np.sqrt(dx * dx + dy * dy + dz * dz), spans, delta)
    return mask


@njit(**_JIT)
def lateral_naive(t_lo, t_hi, tpts, ipts, ixr, spans, delta, wt_span, wi_span):
    n_spans = spans.shape[0]
    hist = np.zeros(n_spans, dtype=np.int64)
    ni = ipts.shape[0]
    nk = ipts.shape[1]
    for t in range(t_lo, t_hi):
        for i in range(ni):
            mask = np.uint64(0)
            for k in range(nk):
                mask |= lateral_item_mask(tpts, t, ipts, i, k, ixr[i, k, 0], ixr[i, k, 1],
                                          spans, delta)
            if mask:
                _record_mask(mask, t, i, n_spans, hist, wt_span, wi_span)
    return hist, (t_hi - t_lo) * ni * nk


@njit(**_JIT)
def _box_spans_reachable(alo, ahi, t, blo, bhi, c, spans, delta):
    dmin2 = 0.0
    dmax2 = 0.0
    for a in range(3):
        gap = max(alo[t, a] - bhi[c, a], blo[c, a] - ahi[t, a], 0.0)
        dmin2 += gap * gap
        far = max(ahi[t, a] - blo[c, a], bhi[c, a] - alo[t, a])
        dmax2 += far * far
    return _spans_reachable(np.sqrt(dmin2), np.sqrt(dmax2), spans, delta, 1e-9)


@njit(**_JIT)
def lateral_binned(t_lo, t_hi, tpts, t_lo_box, t_hi_box, upts, uxr, u_lo, u_hi,
                   item_of, cell_start, cell_items, cell_lo, cell_hi, cell_xlo, cell_xhi,
                   spans, delta, wt_span, wi_span):
    """Lateral search over deduplicated index phalanx segments.

    ``upts`` (U, S_i, 3) holds the contact points of each distinct phalanx
    segment, ``uxr`` its closed x interval and ``u_lo``/``u_hi`` its exact box.
    ``item_of[i, k]`` maps index configuration ``i``'s phalanx ``k`` to its
    distinct segment.  Cells hold segment ids; cell boxes and x intervals
    bound their members exactly.
    """
    n_spans = spans.shape[0]
    hist = np.zeros(n_spans, dtype=np.int64)
    ni = item_of.shape[0]
    nk = item_of.shape[1]
    n_cells = cell_start.shape[0] - 1
    umask = np.zeros(upts.shape[0], dtype=np.uint64)
    touched = np.empty(upts.shape[0], dtype=np.int64)
    items = 0
    for t in range(t_lo, t_hi):
        n_touched = 0
        tx_lo = t_lo_box[t, 0]
        tx_hi = t_hi_box[t, 0]
        ty_hi = t_hi_box[t, 1]
        for c in range(n_cells):
            if cell_xhi[c] < tx_lo or cell_xlo[c] > tx_hi or cell_lo[c, 1] > ty_hi:
                continue
            if not _box_spans_reachable(t_lo_box, t_hi_box, t, cell_lo, cell_hi, c,
                                        spans, delta):
                continue
            for j in range(cell_start[c], cell_start[c + 1]):
                u = cell_items[j]
                xlo = uxr[u, 0]
                xhi = uxr[u, 1]
                if xhi < tx_lo or xlo > tx_hi or u_lo[u, 1] > ty_hi:
                    continue
                items += 1
                mask = lateral_item_mask(tpts, t, upts, u, 0, xlo, xhi, spans, delta)
                if mask:
                    umask[u] = mask
                    touched[n_touched] = u
                    n_touched += 1
        if n_touched:
            for i in range(ni):
                mask = np.uint64(0)
                for k in range(nk):
                    mask |= umask[item_of[i, k]]
                if mask:
                    _record_mask(mask, t, i, n_spans, hist, wt_span, wi_span)
            for j in range(n_touched):
                umask[touched[j]] = 0
    return hist, items
