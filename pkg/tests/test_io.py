import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gapms import io
from gapms.arm import ArmSpec, JointLimit, joint_angles_to_vectors
from gapms.errors import ParseError
from gapms.motion import MotionParams, simulate_execution
from gapms.planner import PathPlan
from gapms.validate import check_pose, link_samples, occupied, validate_plan

MINIMAL = {
    "grid": {"bounds_min": [-1, -1, -1], "bounds_max": [1, 1, 1], "voxel_size": 0.1, "dilation_radius": 0.0},
    "obstacles": [],
    "root": [0, 0, 0],
    "target": [0.5, 0.5, 0.5],
}


def _text(d):
    return json.dumps(d, indent=1)


def test_minimal_scene_parses_and_builds():
    scene = io.parse_scene(_text(MINIMAL))
    g = scene.build_grid()
    assert g.dims == (20, 20, 20)
    assert g.n_occupied == 0
    assert scene.approach_axis is None


def test_box_min_above_max_names_field():
    d = json.loads(_text(MINIMAL))
    d["obstacles"] = [{"id": "a", "box_min": [0, 0, 0], "box_max": [0.2, 0.2, 0.2]},
                      {"id": "b", "box_min": [0.5, 0, 0], "box_max": [0.4, 1, 1]}]
    with pytest.raises(ParseError) as exc:
        io.parse_scene(_text(d))
    assert exc.value.field == "obstacles[1].box_min"
    assert exc.value.line is not None


def test_unknown_field_rejected():
    d = dict(MINIMAL, colour="red")
    with pytest.raises(ParseError):
        io.parse_scene(_text(d))
    d = json.loads(_text(MINIMAL))
    d["grid"]["cell"] = 3
    with pytest.raises(ParseError) as exc:
        io.parse_scene(_text(d))
    assert exc.value.field == "grid"


def test_syntax_error_has_line():
    with pytest.raises(ParseError) as exc:
        io.parse_scene('{\n "grid": {\n  "bounds_min": [1, 2,\n}')
    assert exc.value.line is not None


def test_obstacle_needs_box_or_points():
    with pytest.raises(ParseError):
        io.parse_obstacle('{"id": "x"}')
    with pytest.raises(ParseError):
        io.parse_obstacle('{"id": "x", "box_min": [0,0,0], "box_max": [1,1,1], "points": [[0,0,0]]}')
    ob = io.parse_obstacle('{"id": "x", "points": [[0,0,0], [1,1,1]]}')
    assert ob.kind == "cloud"


_coord = st.floats(-10, 10, allow_nan=False, allow_subnormal=False)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.tuples(_coord, _coord, _coord), st.tuples(_coord, _coord, _coord)), max_size=4),
       st.tuples(_coord, _coord, _coord), st.floats(0, 180, allow_nan=False))
def test_scene_round_trip_is_byte_identical(boxes, target, half):
    d = json.loads(_text(MINIMAL))
    d["obstacles"] = [{"id": f"b{k}", "box_min": list(np.minimum(a, b)), "box_max": list(np.maximum(a, b))}
                      for k, (a, b) in enumerate(boxes)]
    d["target"] = list(target)
    d["approach"] = {"axis": [0.0, 0.0, 1.0], "half_angle_deg": half}
    first = io.emit_scene(io.parse_scene(_text(d)))
    assert io.emit_scene(io.parse_scene(first)) == first


def test_arm_round_trip():
    spec = ArmSpec((1.0, 0.9, 0.8, 0.2), arm_radius=0.04,
                   joint_limits=(JointLimit(), JointLimit((0.1, 2.5)), JointLimit((0, 3.0), (-2.0, 2.0)), JointLimit()),
                   offsets=(0.0, 0.05, 0.0, 0.0))
    text = io.emit_arm(spec)
    back = io.parse_arm(text)
    assert io.emit_arm(back) == text
    assert back.joint_limits[1].elevation == pytest.approx((0.1, 2.5), abs=1e-15)
    assert back.offsets == spec.offsets


def test_start_pose_in_degrees():
    spec = ArmSpec((1.0, 1.0, 1.0))
    pose = io.parse_start_pose('{"joint_angles_deg": [30, 45, 0, 60, 0, 30]}', spec)
    ref = joint_angles_to_vectors(spec, np.radians([30, 45, 0, 60, 0, 30]))
    np.testing.assert_allclose(pose.segments, ref.segments)
    with pytest.raises(ParseError):
        io.parse_start_pose('{"segments": [[0, 0, 1]]}', spec)


def _toy_plan(spec):
    qa = np.array([0.0, 0.5, 0.0, 1.0, 0.0, 1.0])
    qb = qa.copy()
    qb[0] = 0.05
    a, b = joint_angles_to_vectors(spec, qa), joint_angles_to_vectors(spec, qb)
    prov = {"kind": "reach-pose", "relaxations": {3: 1.5}, "note": np.float64(2.5), "idx": np.arange(3)}
    return PathPlan(np.array([a.joints[3], b.joints[3]]), [a, b], [a], [1.0], prov, b.joints[3])


def _config(spec):
    from gapms.planner import PathParams
    from gapms.quiver import quiver_from_degrees
    from gapms.reach import ReachParams

    return io.make_config(spec, quiver_from_degrees(10), ReachParams(), PathParams())


def test_plan_round_trip_and_reload():
    spec = ArmSpec((1.0, 1.0, 1.0), arm_radius=0.02)
    plan = _toy_plan(spec)
    text = io.emit_plan(io.plan_document(spec, plan, _config(spec)))
    doc = io.parse_plan(text)
    assert io.emit_plan(doc) == text
    assert "workers" not in doc["config"]["reach"]
    spec2, plan2 = io.plan_from_document(doc)
    for p, r in zip(plan2.poses, plan.poses):
        np.testing.assert_array_equal(p.segments, r.segments)
    assert doc["provenance"]["relaxations"] == {"3": 1.5}


def test_plan_pose_shape_checked():
    spec = ArmSpec((1.0, 1.0, 1.0))
    doc = io.plan_document(spec, _toy_plan(spec), _config(spec))
    doc["poses"][1]["joint_angles_deg"] = [0.0, 1.0]
    with pytest.raises(ParseError) as exc:
        io.parse_plan(io.emit_plan(doc))
    assert exc.value.field == "poses[1]"


def test_trace_round_trip():
    spec = ArmSpec((1.0, 1.0, 1.0))
    plan = _toy_plan(spec)
    params = MotionParams(v_w=0.5)
    tr = simulate_execution(spec, plan, params)
    text = io.emit_trace(io.trace_document(spec, tr, params))
    doc = io.parse_trace(text)
    assert io.emit_trace(doc) == text
    assert len(doc["ticks"]) == len(tr.times)
    assert doc["params"]["max_joint_rate_deg"] == pytest.approx(30.0)


# -- independent validator ------------------------------------------------------------

def test_occupied_lookup_matches_cells():
    scene = io.parse_scene(_text(dict(MINIMAL, obstacles=[{"id": "b", "box_min": [0, 0, 0],
                                                           "box_max": [0.25, 0.25, 0.25]}])))
    g = scene.build_grid()
    assert occupied(g, [[0.1, 0.1, 0.1]])[0]
    assert not occupied(g, [[-0.5, 0.1, 0.1]])[0]
    # outside the grid is free
    assert not occupied(g, [[5.0, 5.0, 5.0]])[0]


def test_link_samples_count_and_ends():
    spec = ArmSpec((1.0, 1.0, 1.0), offsets=(0.0, 0.1, 0.0))
    pose = joint_angles_to_vectors(spec, np.array([0.0, 0.5, 0.3, 1.0, 0.0, 1.0]))
    s = link_samples(pose, 4)
    assert len(s) == 4 * 4
    np.testing.assert_allclose(s[-1], pose.joints[-1])


def test_validator_flags_each_defect():
    spec = ArmSpec((1.0, 1.0, 1.0), arm_radius=0.05)
    pose = joint_angles_to_vectors(spec, np.array([0.0, 0.5, 0.0, 1.0, 0.0, 1.0]))
    assert check_pose(spec, None, pose, 8) == []
    stretched = pose.copy(segments=pose.segments * np.array([[1.01], [1], [1]]))
    assert "segment-length" in check_pose(spec, None, stretched, 8)
    folded = joint_angles_to_vectors(spec, np.array([0.0, 0.5, 0.0, math.pi - 0.01, 0.0, 0.3]))
    assert "self-collision" in check_pose(spec, None, folded, 8)
    lim = ArmSpec((1.0, 1.0, 1.0), joint_limits=(JointLimit((0, 0.3)), JointLimit(), JointLimit()))
    assert "joint-limit" in check_pose(lim, None, pose, 8)
    assert "angle-consistency" in check_pose(spec, None, pose, 8, [0, 0, 0, 0, 0, 0])
    # a rescaled closing segment passes only within the given slack
    assert check_pose(spec, None, stretched, 8, length_slack=[0.011, 0, 0]) == []
    assert "segment-length" in check_pose(spec, None, stretched, 8, length_slack=[0.009, 0, 0])


def test_validator_on_plan_document():
    spec = ArmSpec((1.0, 1.0, 1.0), arm_radius=0.02)
    plan = _toy_plan(spec)
    doc = io.parse_plan(io.emit_plan(io.plan_document(spec, plan, _config(spec))))
    scene = io.parse_scene(_text(dict(MINIMAL, grid=dict(MINIMAL["grid"], bounds_min=[-3, -3, -3],
                                                         bounds_max=[3, 3, 3]))))
    assert validate_plan(doc, scene) == []
    # a box on the last pose's tip
    tip = plan.poses[-1].joints[-1]
    bad = io.parse_scene(_text(dict(MINIMAL, obstacles=[{"id": "b", "box_min": list(tip - 0.1),
                                                         "box_max": list(tip + 0.1)}],
                                    grid=dict(MINIMAL["grid"], bounds_min=[-3, -3, -3], bounds_max=[3, 3, 3]))))
    checks = {v["check"] for v in validate_plan(doc, bad)}
    assert "collision" in checks
    # a target far from the tip
    doc["target"] = [9.0, 9.0, 9.0]
    assert any(v["check"] == "target" for v in validate_plan(doc, scene))
