import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from handpinch.hand_model import (FINGERS, NON_THUMB, CaseId, HandModelError, HandParameters,
                                  build_case, config_dict, derive_ratios, joint_ranges,
                                  load_model, model_from_config, save_model)
from handpinch.kinematics import fingertip_sample

PI = math.pi


def test_reference_ratios():
    p = derive_ratios(1.0)
    assert p.finger_length == pytest.approx(0.45)
    assert p.thumb_length == pytest.approx(0.51)
    assert p.finger_station_depth == pytest.approx(0.55)
    assert p.finger_spacing == pytest.approx(0.18)
    assert sum(p.finger_segments_3dof) == pytest.approx(0.45)
    assert sum(p.finger_segments_4dof) == pytest.approx(0.45)
    assert sum(p.thumb_segments) == pytest.approx(0.51)


@given(st.floats(0.05, 20.0))
def test_ratios_scale_linearly(h):
    a, b = derive_ratios(1.0), derive_ratios(h)
    assert b.finger_spacing == pytest.approx(h * a.finger_spacing)
    assert b.thumb_segments == pytest.approx(tuple(h * x for x in a.thumb_segments))


@pytest.mark.parametrize("bad", [0.0, -1.0, float("nan"), float("inf")])
def test_bad_hand_length(bad):
    with pytest.raises(HandModelError):
        derive_ratios(bad)


@pytest.mark.parametrize("case,thumb,finger", [(1, 4, 3), (2, 5, 3), (3, 4, 4), (4, 5, 4)])
def test_case_dof(case, thumb, finger):
    m = build_case(case)
    assert m.chain("thumb").n_actuated == thumb
    for f in NON_THUMB:
        assert m.chain(f).n_actuated == finger
        assert len(m.ranges[f]) == finger


def test_case_parse():
    assert CaseId.parse("case3") is CaseId.CASE3
    assert CaseId.parse(2) is CaseId.CASE2
    with pytest.raises(HandModelError):
        CaseId.parse(5)


@pytest.mark.parametrize("case", [1, 2, 3, 4])
def test_rest_posture_geometry(case):
    # all joints at zero: fingers straight up from their knuckles, thumb along x
    m = build_case(case)
    for k, f in enumerate(NON_THUMB):
        ch = m.chain(f)
        s = fingertip_sample(ch, np.zeros(ch.n_actuated))
        knuckle = s.phalanx_points[0]
        assert knuckle == pytest.approx([0.0, -0.18 * k, 0.55], abs=1e-12)
        # knuckle depth plus finger length reaches the hand length
        assert s.p_tip == pytest.approx([0.0, -0.18 * k, 1.0], abs=1e-12)
        assert s.direction == pytest.approx([0, 0, 1], abs=1e-12)
    ch = m.chain("thumb")
    s = fingertip_sample(ch, np.zeros(ch.n_actuated))
    # thumb offsets 0.1 + 0.1, then its three segments
    assert s.p_tip == pytest.approx([0.2 + 0.51, 0, 0], abs=1e-12)


def test_ranges_by_dof():
    assert joint_ranges(1, "index").bounds == ((-PI / 6, PI / 6), (-PI / 2, 2 * PI / 9),
                                               (-PI / 2, 0.0))
    assert joint_ranges(4, "thumb").widths == pytest.approx((PI / 2, PI / 2, PI / 3, PI / 2,
                                                              PI / 2))
    with pytest.raises(HandModelError):
        joint_ranges(1, "pinky")


def test_unknown_finger():
    with pytest.raises(HandModelError):
        build_case(1).chain("pinky")


def test_invalid_parameters():
    with pytest.raises(HandModelError):
        HandParameters(finger_spacing=-0.1).validate()
    with pytest.raises(HandModelError):
        HandParameters(finger_placement="sideways").validate()


def test_range_override_count_checked():
    with pytest.raises(HandModelError):
        build_case(1, range_overrides={"index": [(0, 1)]})


def test_config_round_trip(tmp_path):
    m = build_case(3, range_overrides={"index": [(-0.1, 0.1), (0, 1), (-1, 0), (-1, 0)]})
    path = tmp_path / "model.json"
    save_model(m, path)
    back = load_model(path)
    assert config_dict(back) == config_dict(m)
    assert back.key == m.key
    assert model_from_config(config_dict(m)).ranges == m.ranges


def test_key_tracks_content():
    a, b = build_case(1), build_case(1)
    assert a.key == b.key
    assert build_case(2).key != a.key
    assert build_case(1, derive_ratios(2.0)).key != a.key


def test_all_fingers_present():
    assert tuple(build_case(4).chains) == FINGERS
