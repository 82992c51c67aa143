import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from handpinch.hand_model import build_case
from handpinch.pair_index import (PairStrategy, build_direction_index, build_spatial_grid,
                                  candidate_groups, candidate_pairs, cell_width_for,
                                  group_directions, parallel_half_angle, run_chunks)
from handpinch.workspace import enumerate_samples, grid

unit = st.tuples(st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1)).filter(
    lambda v: 0.1 < math.sqrt(sum(x * x for x in v)))


def _normalize(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


def test_half_angle_for_default_eps():
    # small-angle expansion of arccos(1 - e): sqrt(2e) (1 + e/12 + ...)
    e = 1e-5
    assert parallel_half_angle(e) == pytest.approx(math.sqrt(2 * e) * (1 + e / 12), rel=1e-9)
    assert parallel_half_angle(e) == pytest.approx(4.472e-3, abs=1e-6)


def test_cell_width_covers_cone():
    for e in (1e-3, 1e-4, 1e-5, 1e-7):
        h = cell_width_for(e)
        assert h is not None and h >= parallel_half_angle(e)
    assert cell_width_for(0.5) is None


def test_single_direction_single_cell():
    d = np.tile(_normalize([0.3, -0.2, 0.9]), (50, 1))
    idx = build_direction_index(d, 1e-5)
    assert idx.n_cells == 1
    assert sorted(idx.cell_members(0).tolist()) == list(range(50))


def test_every_configuration_in_one_cell(case1):
    d = case1["thumb"].direction
    idx = build_direction_index(d, 1e-5)
    members = np.concatenate([idx.cell_members(k) for k in range(idx.n_cells)])
    assert sorted(members.tolist()) == list(range(len(d)))


@given(unit, unit, st.floats(0.0, 0.999))
def test_lookup_superset(v, axis, frac):
    # rotate v by less than the cone half-angle: the lookup must find it
    eps = 1e-5
    v = _normalize(v)
    k = np.cross(v, _normalize(axis))
    if np.linalg.norm(k) < 1e-3:
        return
    k = k / np.linalg.norm(k)
    ang = frac * parallel_half_angle(eps)
    w = v * math.cos(ang) + np.cross(k, v) * math.sin(ang)
    idx = build_direction_index(np.array([w]), eps)
    assert 0 in candidate_groups(v, idx)


def test_candidate_stream_covers_true_pairs(case1):
    eps = 1e-3
    ref = case1["thumb"].direction[::7]
    opp = case1["index"].direction
    ri, oi = build_direction_index(ref, eps), build_direction_index(opp, eps)
    got = set(candidate_pairs(ri, oi))
    true = np.argwhere(np.abs(1 - ref @ opp.T) < eps)
    assert {tuple(p) for p in true.tolist()} <= got
    assert len(got) < len(ref) * len(opp)


def test_orthogonal_singletons_give_no_candidates():
    a = build_direction_index(np.array([[1.0, 0, 0]]), 1e-5)
    b = build_direction_index(np.array([[0, 1.0, 0]]), 1e-5)
    assert list(candidate_pairs(a, b)) == []


def test_incompatible_widths_rejected():
    a = build_direction_index(np.array([[1.0, 0, 0]]), 1e-5)
    b = build_direction_index(np.array([[1.0, 0, 0]]), 1e-3)
    with pytest.raises(ValueError):
        list(candidate_pairs(a, b))


@pytest.mark.parametrize("case", [1, 3])
def test_direction_dedup_bound(case):
    # the distal direction only depends on the A/A angle and the sum of F/E angles
    m = build_case(case)
    g = grid(m.ranges["index"], 1)
    s = enumerate_samples(m, "index", g)
    sums = {round(sum(x), 9) for x in itertools.product(*g.values[1:])}
    n_groups = group_directions(s.direction).n_groups
    bound = len(g.values[0]) * len(sums)
    assert n_groups <= bound <= len(s)
    if case == 3:  # two F/E joints after the first: sums collide
        assert bound < len(s) // 4


def test_index_build_deterministic(case1):
    d = case1["thumb"].direction
    a, b = build_direction_index(d, 1e-5), build_direction_index(d, 1e-5)
    assert np.array_equal(a.ukeys, b.ukeys) and np.array_equal(a.sorted_groups, b.sorted_groups)


def test_spatial_grid_partition_and_bounds():
    rng = np.random.default_rng(0)
    pts = rng.random((500, 3)) * 2 - 1
    g = build_spatial_grid(pts, 0.3)
    assert sorted(g.members.tolist()) == list(range(500))
    for c in range(g.n_cells):
        mem = pts[g.members[g.cell_start[c]:g.cell_start[c + 1]]]
        assert np.array_equal(mem.min(axis=0), g.lo[c])
        assert np.array_equal(mem.max(axis=0), g.hi[c])
        assert len({tuple(x) for x in np.floor(mem / 0.3).astype(int).tolist()}) == 1
    with pytest.raises(ValueError):
        build_spatial_grid(pts, 0.0)


@pytest.mark.parametrize("workers", [1, 3])
def test_run_chunks_order(workers):
    out = run_chunks(lambda lo, hi: list(range(lo, hi)), 103, workers, chunk=10)
    assert [x for part in out for x in part] == list(range(103))


def test_strategy_parse():
    assert PairStrategy.parse("BINNED") is PairStrategy.BINNED
    assert PairStrategy.parse(PairStrategy.NAIVE) is PairStrategy.NAIVE
    with pytest.raises(ValueError):
        PairStrategy.parse("kdtree")
