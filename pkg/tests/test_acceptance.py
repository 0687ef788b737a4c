"""Acceptance suite: one test per criterion, at the contract tolerances.

Shared corpora are built once per module:

* reach corpus: 24 seeded two-box scenes, 10 degree quiver, alternating
  6DOF and 8DOF (10 degree approach cone);
* path corpus: open-space targets and corner scenes for a 3- and a
  4-segment arm, planned through the command line at 5 degrees.
"""

import json
import math
import time

import numpy as np
import pytest

from gapms import io
from gapms.cli import EXIT_OK, main
from gapms.errors import InfeasibleTiming
from gapms.motion import MotionParams, joint_velocities, simulate_execution, waypoint_interval
from gapms.oracle import enumerate_solutions
from gapms.planner import (PathParams, ReplanTiming, augment_grid, plan_arbitrary, plan_reach_path, replan_dynamic,
                           virtual_paths)
from gapms.quiver import quiver_from_degrees
from gapms.reach import ReachParams, ShortcutPath, refine_solution, select_solution, solve_reach
from gapms.validate import check_pose, validate_plan, validate_trace
from gapms.voxgrid import point_clear

from scenes import BOUNDS, CORNER_SCENES, OPEN_TARGETS, arm6, arm8, grid_with, obstacle_hitting, random_box_scene

DEG = math.pi / 180
N_REACH_SCENES = 24
# a relaxed transition counts as corner-adjacent when one of its waypoints is this close to an obstacle box
CORNER_RADIUS = 0.5
GRID = {"bounds_min": list(BOUNDS[0]), "bounds_max": list(BOUNDS[1]), "voxel_size": 0.05, "dilation_radius": 0.08}


def _run(*argv):
    return main([str(a) for a in argv])


def _write_scene(path, boxes, target, approach=None):
    d = {"grid": GRID, "root": [0.0, 0.0, 0.0], "target": list(map(float, target)),
         "obstacles": [{"id": f"b{k}", "box_min": list(lo), "box_max": list(hi)} for k, (lo, hi) in enumerate(boxes)]}
    if approach is not None:
        d["approach"] = approach
    path.write_text(json.dumps(d))
    return path


def _write_arm(path, spec):
    path.write_text(io.emit_arm(spec))
    return path


def _box_distance(p, boxes):
    d = [np.linalg.norm(np.maximum(0, np.maximum(np.subtract(lo, p), np.subtract(p, hi)))) for lo, hi in boxes]
    return min(d) if d else math.inf


# -- corpora ---------------------------------------------------------------------------------

@pytest.fixture(scope="module")
def q10():
    return quiver_from_degrees(10.0)


@pytest.fixture(scope="module")
def q5():
    return quiver_from_degrees(5.0)


@pytest.fixture(scope="module")
def reach_corpus():
    out = []
    for s in range(N_REACH_SCENES):
        rng = np.random.default_rng(1000 + s)
        boxes = random_box_scene(rng, 2)
        grid = grid_with(boxes)
        while True:
            t = rng.uniform((-2.6, -2.6, -0.5), (2.6, 2.6, 2.6))
            if 1.2 <= np.linalg.norm(t) <= 2.6 and point_clear(grid, t):
                break
        spec = arm6() if s % 2 == 0 else arm8()
        params = ReachParams(approach_half_angle=10 * DEG)
        out.append({"seed": s, "boxes": boxes, "grid": grid, "target": t, "spec": spec, "params": params})
    return out


@pytest.fixture(scope="module")
def reach_files(reach_corpus, tmp_path_factory):
    tmp = tmp_path_factory.mktemp("reach")
    for sc in reach_corpus:
        k = sc["seed"]
        sc["scene_path"] = _write_scene(tmp / f"scene{k}.json", sc["boxes"], sc["target"],
                                        {"axis": list(sc["target"] / np.linalg.norm(sc["target"])),
                                         "half_angle_deg": 10.0})
        sc["arm_path"] = _write_arm(tmp / f"arm{k}.json", sc["spec"])
    return tmp, reach_corpus


@pytest.fixture(scope="module")
def path_corpus(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("paths")
    cases = [("open", [], t) for t in OPEN_TARGETS] + [("corner", boxes, t) for boxes, t in CORNER_SCENES]
    out = []
    for mk in (arm6, arm8):
        for k, (kind, boxes, target) in enumerate(cases):
            name = f"{mk.__name__}_{kind}{k}"
            scene = _write_scene(tmp / f"{name}_scene.json", boxes, target)
            arm = _write_arm(tmp / f"{name}_arm.json", mk())
            plan = tmp / f"{name}_plan.json"
            assert _run("plan-path", "--scene", scene, "--arm", arm, "--quiver-deg", 5, "--out", plan) == EXIT_OK
            out.append({"name": name, "kind": kind, "boxes": boxes, "scene": scene, "arm": arm, "plan": plan,
                        "doc": io.parse_plan(plan.read_text())})
    return tmp, out


@pytest.fixture(scope="module")
def extra_plans(path_corpus, q5):
    """Replanned and arbitrary-start plans, as documents with the obstacles they must avoid."""
    tmp, corpus = path_corpus
    out = []
    for case in corpus:
        if not case["name"].startswith("arm6_open"):
            continue
        spec, plan = io.plan_from_document(case["doc"])
        scene = io.parse_scene(case["scene"].read_text())
        ob = obstacle_hitting(spec, scene.build_grid(), plan, 10, 7)
        ob_path = tmp / f"{case['name']}_dyn.json"
        ob_path.write_text(io.dumps(io.obstacle_to_dict(ob)))
        res = tmp / f"{case['name']}_replan.json"
        assert _run("replan", "--scene", case["scene"], "--plan", case["plan"], "--obstacle", ob_path,
                    "--at-index", 7, "--out", res) == EXIT_OK
        out.append({"name": case["name"] + "_replan", "scene": case["scene"], "obstacle": ob_path, "plan": res,
                    "doc": io.parse_plan(res.read_text()), "extra": [ob]})
    # arbitrary start: the end pose of one corner plan, retargeted to the next corner scene
    boxes, target = CORNER_SCENES[0]
    scene = _write_scene(tmp / "arb_scene.json", boxes, (1.5, -0.8, 0.9))
    first = next(c for c in corpus if c["name"] == "arm6_corner4")
    spec, plan = io.plan_from_document(first["doc"])
    arb = plan_arbitrary(spec, q5, io.parse_scene(scene.read_text()).build_grid(), plan.poses[-1], (1.5, -0.8, 0.9))
    cfg = first["doc"]["config"]
    doc = io.parse_plan(io.emit_plan(io.plan_document(spec, arb, cfg)))
    out.append({"name": "arbitrary", "scene": scene, "obstacle": None, "plan": None, "doc": doc, "extra": []})
    return out


# -- 1. oracle equivalence ---------------------------------------------------------------------

def test_c1_reach_sets_equal_exhaustive_oracle(reach_files, q10):
    tmp, corpus = reach_files
    assert len(corpus) >= 20
    assert {sc["spec"].n_segments for sc in corpus} == {3, 4}
    total = 0.0
    for sc in corpus:
        out = tmp / f"reach{sc['seed']}.json"
        t0 = time.perf_counter()
        code = _run("plan-reach", "--scene", sc["scene_path"], "--arm", sc["arm_path"], "--quiver-deg", 10,
                    "--out", out)
        total += time.perf_counter() - t0
        got = [tuple(r) for r in io.parse_reach(out.read_text())["solution_indices"]] if code == EXIT_OK else []
        want = enumerate_solutions(sc["spec"], q10, sc["grid"], sc["target"], sc["params"])
        assert got == want, sc["seed"]
        sc["n_solutions"] = len(want)
    assert total < 60.0
    assert sum(sc["n_solutions"] > 0 for sc in corpus) >= 20


# -- 2. pruning soundness -----------------------------------------------------------------------

def test_c2_pruning_never_changes_the_set(reach_corpus, q10):
    for sc in reach_corpus:
        on = solve_reach(sc["spec"], q10, sc["grid"], sc["target"], sc["params"], allow_empty=True)
        off = solve_reach(sc["spec"], q10, sc["grid"], sc["target"],
                          ReachParams(**{**sc["params"].__dict__, "prune": False}), allow_empty=True)
        assert on.index_set() == off.index_set(), sc["seed"]
        assert off.stats["seg2_reach_pruned"] == 0


# -- 3. refinement exactness ----------------------------------------------------------------------

def test_c3_refinement_is_exact(reach_corpus, q10):
    checked = {3: 0, 4: 0}
    for sc in reach_corpus:
        spec, t = sc["spec"], sc["target"]
        sset = solve_reach(spec, q10, sc["grid"], t, sc["params"], allow_empty=True)
        if not len(sset):
            continue
        approx = select_solution(sset)
        if isinstance(approx, ShortcutPath):
            continue
        pose = refine_solution(spec, approx, t, sset.params)
        L = spec.lengths
        if spec.n_segments == 4:
            assert np.linalg.norm(pose.joints[4] - t) <= 1e-12 * sum(L)
            assert abs(np.linalg.norm(pose.segments[2]) - L[2]) <= 1e-12 * L[2]
        else:
            p1, p2, p3 = pose.joints[1:4]
            assert abs(np.linalg.norm(p2 - p1) - L[1]) <= 1e-12 * L[1]
            assert abs(np.linalg.norm(t - p2) - L[2]) <= 1e-12 * L[2]
            assert np.linalg.norm(p3 - t) <= 1e-12 * sum(L)
            n = np.cross(approx.joints[2] - p1, t - p1)
            n /= np.linalg.norm(n)
            assert abs(np.dot(p2 - p1, n)) <= 1e-9
        checked[spec.n_segments] += 1
    assert checked[3] >= 10 and checked[4] >= 10


# -- 4. collision invariants ---------------------------------------------------------------------

def test_c4_validator_finds_no_collisions(reach_corpus, q10, path_corpus, extra_plans):
    # reach poses
    for sc in reach_corpus:
        sset = solve_reach(sc["spec"], q10, sc["grid"], sc["target"], sc["params"], allow_empty=True)
        for pose in list(sset.solutions)[:: max(1, len(sset) // 200)]:
            # raw solutions carry the free vector, within the gap band of L3 by construction
            assert "collision" not in check_pose(sc["spec"], sc["grid"], pose, sset.params.n_samples_per_segment)
        chosen = select_solution(sset) if len(sset) else None
        if chosen is not None and not isinstance(chosen, ShortcutPath):
            pose = refine_solution(sc["spec"], chosen, sc["target"], sset.params)
            # 8DOF closure leaves the last segment within the gap band of its length
            slack = [0.0, 0.0, 0.0, sset.params.epsilon_gap] if sc["spec"].n_segments == 4 else None
            assert check_pose(sc["spec"], sc["grid"], pose, sset.params.n_samples_per_segment,
                              length_slack=slack) == []
    # path, unfold prefix, replan and arbitrary-start plans
    _, corpus = path_corpus
    n_poses = 0
    for case in corpus + extra_plans:
        scene = io.parse_scene(case["scene"].read_text())
        assert validate_plan(case["doc"], scene, extra_obstacles=case.get("extra", [])) == [], case["name"]
        n_poses += len(case["doc"]["poses"]) + len(case["doc"]["unfold_prefix"])
    assert n_poses > 500
    # every simulation tick; a dynamic obstacle only counts once the arm is at the insertion waypoint
    for case in corpus + extra_plans:
        scene = io.parse_scene(case["scene"].read_text())
        grid = scene.build_grid()
        spec, plan = io.plan_from_document(case["doc"])
        params = MotionParams(v_w=0.5, max_joint_rate=180 * DEG)
        trace = simulate_execution(spec, plan, params, grid=grid)
        doc = io.parse_trace(io.emit_trace(io.trace_document(spec, trace, params)))
        assert validate_trace(doc, grid=grid) == [], case["name"]
        if case.get("extra"):
            appear = trace.waypoint_offset + case["doc"]["provenance"]["replan"]["current_index"]
            late = dict(doc, ticks=[t for t in doc["ticks"] if t["active_waypoint_index"] > appear])
            assert late["ticks"]
            assert validate_trace(late, grid=scene.build_grid(case["extra"])) == [], case["name"]


# -- 5. smoothness ---------------------------------------------------------------------------------

def _transitions(doc):
    """(joint-1 move, joint-2 move, recorded factor) per consecutive pose pair."""
    spec, plan = io.plan_from_document(doc)
    seq = plan.sequence()
    factors = plan.transition_factors()
    j = np.array([p.joints for p in seq])
    d = np.linalg.norm(np.diff(j, axis=0), axis=-1)
    return spec, d[:, 1], d[:, 2], np.asarray(factors)


def test_c5_smoothness_and_relaxation_placement(path_corpus, extra_plans):
    _, corpus = path_corpus
    for case in corpus + extra_plans:
        doc = case["doc"]
        spec, m1, m2, f = _transitions(doc)
        p = io.path_from_config(doc["config"]["path"]).resolved(spec)
        tol = 1e-9
        assert np.all(m1 <= p.joint1_max_move * f + tol), case["name"]
        assert np.all(m2 <= p.joint2_max_move * f + tol), case["name"]
    failures = []
    for case in corpus:
        doc = case["doc"]
        relax = {int(k): v for k, v in doc["provenance"].get("relaxations", {}).items()}
        assert all(r == 1.0 for k, r in enumerate(doc["relax"]) if k not in relax and k < len(doc["poses"]) - 1)
        if case["kind"] == "open":
            if relax:
                failures.append((case["name"], relax))
            continue
        wps = np.asarray(doc["waypoints"])
        for k in relax:
            near = min(_box_distance(wps[k], case["boxes"]), _box_distance(wps[min(k + 1, len(wps) - 1)],
                                                                             case["boxes"]))
            if near > CORNER_RADIUS:
                failures.append((case["name"], k, near))
    assert failures == []


# -- 6. dynamic replan -------------------------------------------------------------------------------

def _segment_point_distances(points, polyline):
    """Exact distance from every point (..., 3) to the polyline, brute force over its segments."""
    a, b = polyline[:-1], polyline[1:]
    ab = b - a
    rel = points[..., None, :] - a
    t = np.clip(np.einsum("...sk,sk->...s", rel, ab) / np.einsum("sk,sk->s", ab, ab), 0.0, 1.0)
    closest = a + t[..., None] * ab
    return np.linalg.norm(points[..., None, :] - closest, axis=-1).min(axis=-1)


def test_c6_dynamic_replan(q5):
    spec = arm6()
    grid = grid_with([])
    _, _, plan = plan_reach_path(spec, q5, grid, (1.5, 0.6, 0.9))
    assert len(plan.poses) == 24
    timing = ReplanTiming(0.083, 0.0082)
    ob = obstacle_hitting(spec, grid, plan, 10, 7)
    out = replan_dynamic(spec, q5, grid, plan, 7, ob, timing)
    info = out.provenance["replan"]
    s = info["switch_index"]
    assert 7 < s < 10
    assert out.poses[: s + 1] == plan.poses[: s + 1]
    g2 = augment_grid(grid, ob)
    doc = io.parse_plan(io.emit_plan(io.plan_document(spec, out, io.make_config(spec, q5, ReachParams(),
                                                                                  PathParams()))))
    assert validate_plan(doc, grid=g2) == []
    # every candidate's deviation recomputed by brute force; the pick is the minimum of the admissible ones
    vspec = spec.__class__(tuple(info["virtual_lengths"]), root=info["virtual_root"])
    vsset = solve_reach(vspec, q5, g2, info["virtual_goal"],
                        ReachParams(n_samples_per_segment=info["virtual_samples"], mode="6DOF"), allow_empty=True)
    paths = virtual_paths(vspec, q5, vsset, info["virtual_samples"])
    original = np.vstack([spec.root, plan.waypoints])
    devs = np.concatenate([_segment_point_distances(paths[a:a + 256], original).mean(axis=1)
                           for a in range(0, len(paths), 256)])
    rows = [list(r) for r in vsset.index_set()]
    sel = rows.index(info["selected"])
    rejected = set(info["candidates_rejected"])
    admissible = [k for k in range(len(devs)) if k not in rejected]
    assert sel in admissible
    assert devs[sel] <= min(devs[k] for k in admissible) + 1e-12
    assert info["selected_deviation"] == pytest.approx(devs[sel], abs=1e-12)
    # insertions fewer than three waypoints ahead are refused even when solving is instant
    instant = ReplanTiming(0.083, 1e-9)
    assert replan_dynamic(spec, q5, grid, plan, 7, ob, instant).provenance["replan"]["switch_index"] == 8
    for current in (8, 9):
        with pytest.raises(InfeasibleTiming):
            replan_dynamic(spec, q5, grid, plan, current, obstacle_hitting(spec, grid, plan, 10, current), instant)
    # and with the default timing the switch lands on the collision
    with pytest.raises(InfeasibleTiming):
        replan_dynamic(spec, q5, grid, plan, 7, obstacle_hitting(spec, grid, plan, 9, 7), timing)


# -- 7. velocity arithmetic ------------------------------------------------------------------------

def test_c7_velocity_arithmetic(q5):
    rng = np.random.default_rng(7)
    for _ in range(10_000):
        q_c = rng.uniform(-math.pi, math.pi, 8)
        q_w = rng.uniform(-math.pi, math.pi, 8)
        t_w = rng.uniform(1e-3, 5.0)
        r = joint_velocities(q_w, q_c, t_w)
        want = q_w - q_c
        want[0::2] = (want[0::2] + math.pi) % (2 * math.pi) - math.pi
        np.testing.assert_allclose(r.rates * t_w, want, rtol=1e-13, atol=1e-14)
    # straight two-waypoint plan
    spec = arm6()
    from gapms.arm import joint_angles_to_vectors
    from gapms.planner import PathPlan

    qa = np.array([0.0, 0.5, 0.0, 1.0, 0.0, 1.0])
    qb = qa.copy()
    qb[0] = 15 * DEG
    a, b = joint_angles_to_vectors(spec, qa), joint_angles_to_vectors(spec, qb)
    plan = PathPlan(np.array([a.joints[3], b.joints[3]]), [a, b], [], [1.0, 1.0], {}, b.joints[3])
    v = 0.2
    tr = simulate_execution(spec, plan, MotionParams(v_w=v, max_joint_rate=math.pi))
    assert tr.arrivals[1] == pytest.approx(np.linalg.norm(b.joints[3] - a.joints[3]) / v, rel=0.10)
    # 36 waypoints covering a 3 s traversal
    grid = grid_with([])
    _, _, plan = plan_reach_path(spec, q5, grid, (1.5, 0.6, 0.9), path_params=PathParams(n_samples=12))
    assert len(plan.poses) == 36
    w = np.asarray([p.joints[3] for p in plan.poses])
    length = np.linalg.norm(np.diff(w, axis=0), axis=1).sum()
    tr = simulate_execution(spec, plan, MotionParams(v_w=length / 3.0, max_joint_rate=1000 * DEG), grid=grid)
    assert tr.waypoint_times().mean() == pytest.approx(0.083, rel=0.15)


# -- 8. desk-scale performance -----------------------------------------------------------------------

@pytest.mark.parametrize("make", [arm6, arm8], ids=["6dof", "8dof"])
def test_c8_reach_and_path_under_five_seconds(make):
    boxes, target = CORNER_SCENES[0]
    grid = grid_with(boxes)
    q = quiver_from_degrees(5.0)
    t0 = time.perf_counter()
    _, _, plan = plan_reach_path(make(), q, grid, target, ReachParams(workers=4))
    elapsed = time.perf_counter() - t0
    assert len(plan.poses) == 24
    assert elapsed < 5.0


# -- 9. determinism -----------------------------------------------------------------------------------

def test_c9_plan_files_identical_across_workers(path_corpus, reach_files):
    tmp, corpus = path_corpus
    for case in corpus:
        for w in ("4", "max"):
            other = tmp / f"{case['name']}_w{w}.json"
            assert _run("--workers", w, "plan-path", "--scene", case["scene"], "--arm", case["arm"],
                        "--quiver-deg", 5, "--out", other) == EXIT_OK
            assert other.read_bytes() == case["plan"].read_bytes(), (case["name"], w)
    rtmp, rcorpus = reach_files
    for sc in rcorpus:
        files = []
        for w in ("1", "4", "max"):
            out = rtmp / f"det{sc['seed']}_{w}.json"
            code = _run("--workers", w, "plan-reach", "--scene", sc["scene_path"], "--arm", sc["arm_path"],
                        "--quiver-deg", 10, "--out", out)
            files.append(out.read_bytes() if code == EXIT_OK else code)
        assert files[0] == files[1] == files[2], sc["seed"]
