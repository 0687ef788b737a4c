"""Scene, arm, plan and trace files.

Every file is JSON checked against a strict schema (unknown fields are
rejected). Angles are degrees in files and radians everywhere else; the
conversion happens only in this module. Floats are written with Python's
shortest round-trip repr and keys are sorted, so emit -> parse -> emit is
byte-identical.
"""

import json
import math
from dataclasses import dataclass, field

import jsonschema
import numpy as np

from .arm import ArmSpec, JointLimit, PoseChain, vectors_to_joint_angles
from .errors import InvalidParameter, ParseError
from .planner import PathParams, PathPlan
from .quiver import generate_quiver
from .reach import ReachParams, ShortcutPath
from .voxgrid import SceneObstacle, build_grid, dilate, mark_obstacles

FORMAT_VERSION = 1

_num = {"type": "number"}
_vec3 = {"type": "array", "items": _num, "minItems": 3, "maxItems": 3}
_vec3s = {"type": "array", "items": _vec3}
_range = {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}
_int = {"type": "integer"}
_free = {"type": "object"}


def _obj(props, required=(), **extra):
    return {"type": "object", "properties": props, "required": list(required), "additionalProperties": False,
            **extra}


OBSTACLE_SCHEMA = _obj({
    "id": {"type": "string"},
    "box_min": _vec3,
    "box_max": _vec3,
    "points": {"type": "array", "items": _vec3, "minItems": 1},
    "dynamic": {"type": "boolean"},
}, ["id"])

SCENE_SCHEMA = _obj({
    "name": {"type": "string"},
    "grid": _obj({
        "bounds_min": _vec3,
        "bounds_max": _vec3,
        "voxel_size": {"type": "number", "exclusiveMinimum": 0},
        "dilation_radius": {"type": "number", "minimum": 0},
    }, ["bounds_min", "bounds_max", "voxel_size", "dilation_radius"]),
    "obstacles": {"type": "array", "items": OBSTACLE_SCHEMA},
    "root": _vec3,
    "target": _vec3,
    "approach": _obj({
        "axis": {"oneOf": [_vec3, {"type": "null"}]},
        "half_angle_deg": {"type": "number", "minimum": 0, "maximum": 180},
    }),
}, ["grid", "obstacles", "root", "target"])

ARM_SCHEMA = _obj({
    "lengths": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 2},
    "arm_radius": {"type": "number", "minimum": 0},
    "joint_limits_deg": {"type": "array", "items": _obj({"elevation": _range, "azimuth": _range})},
    "offsets": {"type": "array", "items": {"type": "number", "minimum": 0}},
    "base_axis": _vec3,
    "base_reference": _vec3,
    "fold_plane_normal": _vec3,
    "fold_flexion_deg": _num,
}, ["lengths"])

START_POSE_SCHEMA = {
    "oneOf": [
        _obj({"joint_angles_deg": {"type": "array", "items": _num}}, ["joint_angles_deg"]),
        _obj({"segments": _vec3s}, ["segments"]),
    ]
}

_POSE = _obj({"segments": _vec3s, "offsets": _vec3s, "joint_angles_deg": {"type": "array", "items": _num}},
             ["segments", "offsets", "joint_angles_deg"])

_CONFIG = _obj({
    "quiver": _obj({"elev_step_deg": _num, "equator_azim_step_deg": _num, "min_per_ring": _int},
                   ["elev_step_deg", "equator_azim_step_deg", "min_per_ring"]),
    "reach": _obj({
        "epsilon_gap": _num, "n_samples_per_segment": _int, "approach_axis": {"oneOf": [_vec3, {"type": "null"}]},
        "approach_half_angle_deg": _num, "near_target_radius": _num, "mode": {"enum": ["6DOF", "8DOF"]},
        "prune": {"type": "boolean"}, "cone_precheck": {"type": "boolean"}, "refine_variant": {"type": "string"},
    }, ["epsilon_gap", "n_samples_per_segment", "mode"]),
    "path": _obj({
        "n_samples": _int, "d_w": _num, "epsilon_waypoint": _num, "slack": _num, "joint1_max_move": _num,
        "joint2_max_move": _num, "relax_schedule": {"type": "array", "items": _num}, "unfold_steps": _int,
        "ring_points": _int, "max_alternates": _int, "backtrack": _int, "backtrack_depth": _int, "sweep_step": _num,
        "max_candidates": _int,
        "virtual_length_factor": _num, "fallbacks": {"type": "boolean"},
    }),
}, ["quiver", "reach"])

PLAN_SCHEMA = _obj({
    "format": {"const": "gapms-plan"},
    "version": {"const": FORMAT_VERSION},
    "arm": ARM_SCHEMA,
    "root": _vec3,
    "config": _CONFIG,
    "target": _vec3,
    "chosen": _free,
    "waypoints": _vec3s,
    "poses": {"type": "array", "items": _POSE, "minItems": 1},
    "unfold_prefix": {"type": "array", "items": _POSE},
    "relax": {"type": "array", "items": _num},
    "provenance": _free,
    "stats": _free,
}, ["format", "version", "arm", "root", "config", "target", "waypoints", "poses", "unfold_prefix", "relax",
    "provenance", "stats"])

REACH_SCHEMA = _obj({
    "format": {"enum": ["gapms-reach", "gapms-oracle"]},
    "version": {"const": FORMAT_VERSION},
    "arm": ARM_SCHEMA,
    "root": _vec3,
    "config": _CONFIG,
    "target": _vec3,
    "solution_indices": {"type": "array", "items": {"type": "array", "items": _int, "minItems": 3, "maxItems": 3}},
    "shortcuts": {"type": "array", "items": _free},
    "chosen": _free,
    "stats": _free,
}, ["format", "version", "arm", "root", "config", "target", "solution_indices"])

_TICK = _obj({"time": _num, "q_deg": {"type": "array", "items": _num}, "tracked_point": _vec3,
              "active_waypoint_index": _int, "commanded_rates_deg": {"type": "array", "items": _num}},
             ["time", "q_deg", "tracked_point", "active_waypoint_index", "commanded_rates_deg"])

TRACE_SCHEMA = _obj({
    "format": {"const": "gapms-trace"},
    "version": {"const": FORMAT_VERSION},
    "arm": ARM_SCHEMA,
    "root": _vec3,
    "params": _obj({"v_w": _num, "sample_rate": _num, "max_joint_rate_deg": _num, "arrival_tolerance": _num,
                    "control_objective": {"type": "string"}, "max_ticks": _int}),
    "ticks": {"type": "array", "items": _TICK},
    "overshoot_events": {"type": "array", "items": _int},
    "clamp_events": {"type": "array", "items": _int},
    "self_contact_events": {"type": "array", "items": _int},
    "arrivals": {"type": "array", "items": _obj({"index": _int, "time": _num}, ["index", "time"])},
    "waypoint_offset": _int,
}, ["format", "version", "arm", "root", "params", "ticks", "overshoot_events", "arrivals"])


# -- generic text handling ----------------------------------------------------------

def to_jsonable(obj):
    """Plain JSON types from numpy scalars/arrays, tuples and non-string keys."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        raise InvalidParameter("non-finite number cannot be written")
    return obj


def dumps(doc):
    return json.dumps(to_jsonable(doc), indent=1, sort_keys=True, allow_nan=False) + "\n"


def _line_of(text, path):
    """Best-effort line number of a JSON path in ``text`` (keys searched in order)."""
    pos = 0
    found = False
    for part in path:
        if isinstance(part, str):
            k = text.find(json.dumps(part), pos)
            if k < 0:
                break
            pos, found = k, True
    return text.count("\n", 0, pos) + 1 if found else None


def _field_name(path):
    out = ""
    for part in path:
        out += f"[{part}]" if isinstance(part, int) else (f".{part}" if out else str(part))
    return out or None


def loads(text, schema, what="document"):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{what}: {exc.msg}", line=exc.lineno) from None
    errors = sorted(jsonschema.Draft202012Validator(schema).iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        path = list(err.absolute_path)
        raise ParseError(f"{what}: {err.message}", field=_field_name(path), line=_line_of(text, path))
    return doc


def _semantic(text, path, message, what):
    raise ParseError(f"{what}: {message}", field=_field_name(path), line=_line_of(text, path))


# -- arm -----------------------------------------------------------------------------

def arm_to_dict(spec):
    d = {
        "lengths": list(spec.lengths),
        "arm_radius": spec.arm_radius,
        "joint_limits_deg": [{"elevation": [math.degrees(x) for x in lim.elevation],
                              "azimuth": [math.degrees(x) for x in lim.azimuth]} for lim in spec.joint_limits],
        "offsets": list(spec.offsets),
        "base_axis": spec.base_axis.tolist(),
        "base_reference": spec.base_reference.tolist(),
        "fold_plane_normal": spec.fold_plane_normal.tolist(),
        "fold_flexion_deg": math.degrees(spec.fold_flexion),
    }
    return d


def arm_from_dict(d, root=(0.0, 0.0, 0.0)):
    kw = {"lengths": tuple(d["lengths"]), "root": np.asarray(root, dtype=float),
          "arm_radius": d.get("arm_radius", 0.0)}
    if "joint_limits_deg" in d:
        kw["joint_limits"] = tuple(JointLimit(tuple(math.radians(x) for x in lim.get("elevation", (0, 180))),
                                              tuple(math.radians(x) for x in lim.get("azimuth", (-180, 180))))
                                   for lim in d["joint_limits_deg"])
    if "offsets" in d:
        kw["offsets"] = tuple(d["offsets"])
    for name in ("base_axis", "base_reference", "fold_plane_normal"):
        if name in d:
            kw[name] = np.asarray(d[name], dtype=float)
    if "fold_flexion_deg" in d:
        kw["fold_flexion"] = math.radians(d["fold_flexion_deg"])
    return ArmSpec(**kw)


def parse_arm(text, root=(0.0, 0.0, 0.0)):
    d = loads(text, ARM_SCHEMA, "arm")
    try:
        return arm_from_dict(d, root)
    except InvalidParameter as exc:
        raise ParseError(f"arm: {exc}") from None


def emit_arm(spec):
    return dumps(arm_to_dict(spec))


# -- scene ---------------------------------------------------------------------------

@dataclass
class Scene:
    bounds_min: np.ndarray
    bounds_max: np.ndarray
    voxel_size: float
    dilation_radius: float
    obstacles: list = field(default_factory=list)
    root: np.ndarray = None
    target: np.ndarray = None
    approach_axis: np.ndarray = None
    approach_half_angle: float = 0.0  # radians
    name: str = None

    def build_grid(self, extra_obstacles=()):
        g = build_grid(self.bounds_min, self.bounds_max, self.voxel_size)
        obs = list(self.obstacles) + list(extra_obstacles)
        if obs:
            g = mark_obstacles(g, obs)
        return dilate(g, self.dilation_radius)

    def reach_params(self, **kw):
        return ReachParams(approach_axis=self.approach_axis, approach_half_angle=self.approach_half_angle, **kw)


def obstacle_to_dict(ob):
    d = {"id": ob.id}
    if ob.kind == "box":
        d["box_min"] = ob.box_min.tolist()
        d["box_max"] = ob.box_max.tolist()
    else:
        d["points"] = ob.points.tolist()
    if ob.dynamic:
        d["dynamic"] = True
    return d


def _obstacle_from_dict(d, text, path, what):
    has_box = "box_min" in d or "box_max" in d
    if has_box == ("points" in d):
        _semantic(text, path, "obstacle needs either box_min/box_max or points", what)
    if has_box:
        for name in ("box_min", "box_max"):
            if name not in d:
                _semantic(text, path + [name], f"missing {name}", what)
        lo, hi = np.asarray(d["box_min"], float), np.asarray(d["box_max"], float)
        if np.any(lo > hi):
            _semantic(text, path + ["box_min"], "box_min exceeds box_max", what)
        return SceneObstacle(d["id"], lo, hi, dynamic=d.get("dynamic", False))
    return SceneObstacle(d["id"], points=np.asarray(d["points"], float), dynamic=d.get("dynamic", False))


def parse_scene(text):
    d = loads(text, SCENE_SCHEMA, "scene")
    g = d["grid"]
    lo, hi = np.asarray(g["bounds_min"], float), np.asarray(g["bounds_max"], float)
    if np.any(lo >= hi):
        _semantic(text, ["grid", "bounds_min"], "bounds_min must be below bounds_max", "scene")
    obstacles = [_obstacle_from_dict(o, text, ["obstacles", k], "scene") for k, o in enumerate(d["obstacles"])]
    ap = d.get("approach", {})
    axis = ap.get("axis")
    if axis is not None and np.linalg.norm(axis) < 1e-12:
        _semantic(text, ["approach", "axis"], "approach axis must be non-zero", "scene")
    return Scene(lo, hi, float(g["voxel_size"]), float(g["dilation_radius"]), obstacles,
                 np.asarray(d["root"], float), np.asarray(d["target"], float),
                 None if axis is None else np.asarray(axis, float) / np.linalg.norm(axis),
                 math.radians(ap.get("half_angle_deg", 0.0)), d.get("name"))


def scene_to_dict(scene):
    d = {
        "grid": {"bounds_min": np.asarray(scene.bounds_min).tolist(), "bounds_max": np.asarray(scene.bounds_max).tolist(),
                 "voxel_size": scene.voxel_size, "dilation_radius": scene.dilation_radius},
        "obstacles": [obstacle_to_dict(o) for o in scene.obstacles],
        "root": np.asarray(scene.root).tolist(),
        "target": np.asarray(scene.target).tolist(),
        "approach": {"axis": None if scene.approach_axis is None else np.asarray(scene.approach_axis).tolist(),
                     "half_angle_deg": math.degrees(scene.approach_half_angle)},
    }
    if scene.name is not None:
        d["name"] = scene.name
    return d


def emit_scene(scene):
    return dumps(scene_to_dict(scene))


def parse_obstacle(text):
    d = loads(text, OBSTACLE_SCHEMA, "obstacle")
    return _obstacle_from_dict(d, text, [], "obstacle")


def parse_start_pose(text, spec):
    from .arm import joint_angles_to_vectors, make_pose

    d = loads(text, START_POSE_SCHEMA, "start pose")
    try:
        if "joint_angles_deg" in d:
            q = np.radians(np.asarray(d["joint_angles_deg"], float))
            return joint_angles_to_vectors(spec, q, check_limits=True)
        segs = np.asarray(d["segments"], float)
        if len(segs) != spec.n_segments:
            raise InvalidParameter(f"expected {spec.n_segments} segments")
        return make_pose(spec, segs)
    except InvalidParameter as exc:
        raise ParseError(f"start pose: {exc}") from None


# -- poses and configuration -------------------------------------------------------------

def pose_to_dict(spec, pose):
    q = vectors_to_joint_angles(spec, pose).q
    return {"segments": pose.segments.tolist(), "offsets": pose.offsets.tolist(),
            "joint_angles_deg": np.degrees(q).tolist()}


def pose_from_dict(d, root):
    return PoseChain(np.asarray(d["segments"], float), np.asarray(root, float), np.asarray(d["offsets"], float))


def quiver_config(q):
    # steps come from degree inputs; rounding recovers the value that was typed
    d = q.params()
    d["elev_step_deg"] = round(d["elev_step_deg"], 12)
    d["equator_azim_step_deg"] = round(d["equator_azim_step_deg"], 12)
    return d


def quiver_from_config(d):
    return generate_quiver(math.radians(d["elev_step_deg"]), math.radians(d["equator_azim_step_deg"]),
                           int(d["min_per_ring"]))


def reach_config(params):
    """Echo of resolved reach parameters; the worker count is deliberately left out."""
    return {
        "epsilon_gap": params.epsilon_gap,
        "n_samples_per_segment": params.n_samples_per_segment,
        "approach_axis": None if params.approach_axis is None else np.asarray(params.approach_axis).tolist(),
        "approach_half_angle_deg": math.degrees(params.approach_half_angle),
        "near_target_radius": params.near_target_radius,
        "mode": params.mode,
        "prune": params.prune,
        "cone_precheck": params.cone_precheck,
        "refine_variant": params.refine_variant,
    }


def reach_from_config(d, workers=1):
    axis = d.get("approach_axis")
    return ReachParams(epsilon_gap=d["epsilon_gap"], n_samples_per_segment=d["n_samples_per_segment"],
                       approach_axis=None if axis is None else np.asarray(axis, float),
                       approach_half_angle=math.radians(d.get("approach_half_angle_deg", 0.0)),
                       near_target_radius=d.get("near_target_radius", 0.0), mode=d["mode"],
                       prune=d.get("prune", True), cone_precheck=d.get("cone_precheck", False),
                       refine_variant=d.get("refine_variant", "rescale"), workers=workers)


def path_config(params):
    return {
        "n_samples": params.n_samples, "d_w": params.d_w, "epsilon_waypoint": params.epsilon_waypoint,
        "slack": params.slack, "joint1_max_move": params.joint1_max_move, "joint2_max_move": params.joint2_max_move,
        "relax_schedule": list(params.relax_schedule), "unfold_steps": params.unfold_steps,
        "ring_points": params.ring_points, "max_alternates": params.max_alternates, "backtrack": params.backtrack,
        "backtrack_depth": params.backtrack_depth, "sweep_step": params.sweep_step,
        "max_candidates": params.max_candidates, "virtual_length_factor": params.virtual_length_factor,
        "fallbacks": params.fallbacks,
    }


def path_from_config(d):
    d = dict(d)
    if "relax_schedule" in d:
        d["relax_schedule"] = tuple(d["relax_schedule"])
    return PathParams(**d)


def make_config(spec, q, reach_params, path_params=None, target=None):
    cfg = {"quiver": quiver_config(q), "reach": reach_config(reach_params.resolved(spec, target))}
    if path_params is not None:
        cfg["path"] = path_config(path_params.resolved(spec))
    return cfg


def chosen_to_dict(spec, chosen):
    if chosen is None:
        return {}
    if isinstance(chosen, ShortcutPath):
        return {"kind": "shortcut", "segment_index": chosen.segment_index, "hypothesis": list(chosen.hypothesis),
                "hit_sample_index": chosen.hit_sample_index, "target_index": chosen.target_index,
                "direct": chosen.direct, "length": chosen.length, "points": np.asarray(chosen.points).tolist()}
    d = {"kind": "solution", "pose": pose_to_dict(spec, chosen)}
    if chosen.quiver_indices is not None:
        d["indices"] = [None if x is None else int(x) for x in chosen.quiver_indices]
    return d


# -- plan files ------------------------------------------------------------------------

def plan_document(spec, plan, config, chosen=None, reach_stats=None):
    stats = {
        "waypoints": len(plan.poses),
        "prefix_poses": len(plan.unfold_prefix),
        "relaxed_transitions": int(sum(1 for r in plan.relax[: max(0, len(plan.poses) - 1)] if r > 1.0)),
        "path_length": float(np.linalg.norm(np.diff(np.asarray(plan.waypoints), axis=0), axis=1).sum())
        if len(plan.waypoints) > 1 else 0.0,
    }
    if reach_stats:
        stats["reach"] = {k: v for k, v in reach_stats.items() if not k.endswith("_s")}
    return {
        "format": "gapms-plan",
        "version": FORMAT_VERSION,
        "arm": arm_to_dict(spec),
        "root": spec.root.tolist(),
        "config": config,
        "target": np.asarray(plan.target if plan.target is not None else plan.poses[-1].joints[-1]).tolist(),
        "chosen": to_jsonable(chosen) if isinstance(chosen, dict) else chosen_to_dict(spec, chosen),
        "waypoints": np.asarray(plan.waypoints).tolist(),
        "poses": [pose_to_dict(spec, p) for p in plan.poses],
        "unfold_prefix": [pose_to_dict(spec, p) for p in plan.unfold_prefix],
        "relax": [float(r) for r in plan.relax],
        "provenance": to_jsonable(plan.provenance),
        "stats": stats,
    }


def emit_plan(doc):
    return dumps(doc)


def parse_plan(text):
    doc = loads(text, PLAN_SCHEMA, "plan")
    n = len(doc["arm"]["lengths"])
    for k, p in enumerate(doc["poses"]):
        if len(p["segments"]) != n or len(p["offsets"]) != n or len(p["joint_angles_deg"]) != 2 * n:
            _semantic(text, ["poses", k], f"pose does not match the {n}-segment arm", "plan")
    return doc


def plan_from_document(doc):
    """(spec, PathPlan) rebuilt from a parsed plan document."""
    spec = arm_from_dict(doc["arm"], doc["root"])
    poses = [pose_from_dict(p, spec.root) for p in doc["poses"]]
    prefix = [pose_from_dict(p, spec.root) for p in doc["unfold_prefix"]]
    plan = PathPlan(np.asarray(doc["waypoints"], float), poses, prefix, list(doc["relax"]),
                    dict(doc["provenance"]), np.asarray(doc["target"], float))
    return spec, plan


# -- reach / oracle files ---------------------------------------------------------------

def reach_document(spec, sset, config, chosen=None, fmt="gapms-reach"):
    doc = {
        "format": fmt,
        "version": FORMAT_VERSION,
        "arm": arm_to_dict(spec),
        "root": spec.root.tolist(),
        "config": config,
        "target": np.asarray(sset.target).tolist(),
        "solution_indices": [list(t) for t in sset.index_set()],
        "shortcuts": [{"segment_index": s.segment_index, "hypothesis": list(s.hypothesis),
                       "hit_sample_index": s.hit_sample_index, "target_index": s.target_index, "direct": s.direct,
                       "length": s.length} for s in sset.shortcut_paths],
        "stats": {k: v for k, v in sset.stats.items() if not k.endswith("_s")},
    }
    if chosen is not None:
        doc["chosen"] = chosen_to_dict(spec, chosen)
    return doc


def oracle_document(spec, target, indices, config):
    return {
        "format": "gapms-oracle",
        "version": FORMAT_VERSION,
        "arm": arm_to_dict(spec),
        "root": spec.root.tolist(),
        "config": config,
        "target": np.asarray(target, float).tolist(),
        "solution_indices": [list(t) for t in indices],
    }


def parse_reach(text):
    return loads(text, REACH_SCHEMA, "reach")


# -- trace files ----------------------------------------------------------------------

def trace_document(spec, trace, params):
    return {
        "format": "gapms-trace",
        "version": FORMAT_VERSION,
        "arm": arm_to_dict(spec),
        "root": spec.root.tolist(),
        "params": {"v_w": params.v_w, "sample_rate": params.sample_rate,
                   "max_joint_rate_deg": math.degrees(params.max_joint_rate),
                   "arrival_tolerance": params.arrival_tolerance, "control_objective": params.control_objective,
                   "max_ticks": params.max_ticks},
        "ticks": [{"time": float(t), "q_deg": np.degrees(q).tolist(), "tracked_point": p.tolist(),
                   "active_waypoint_index": int(a), "commanded_rates_deg": np.degrees(r).tolist()}
                  for t, q, p, a, r in zip(trace.times, trace.q, trace.tracked, trace.active, trace.rates)],
        "overshoot_events": [int(k) for k in trace.overshoot_events],
        "clamp_events": [int(k) for k in trace.clamp_events],
        "self_contact_events": [int(k) for k in trace.self_contact_events],
        "arrivals": [{"index": int(k), "time": float(v)} for k, v in sorted(trace.arrivals.items())],
        "waypoint_offset": int(trace.waypoint_offset),
    }


def emit_trace(doc):
    return dumps(doc)


def parse_trace(text):
    return loads(text, TRACE_SCHEMA, "trace")


# -- frame tables ---------------------------------------------------------------------

def write_frames(path, joints, times=None):
    """One row per pose: optional time, then x, y, z of every joint locus p_0..p_n."""
    joints = np.asarray(joints, dtype=float)
    n = joints.shape[1]
    cols = [f"{c}{k}" for k in range(n) for c in "xyz"]
    data = joints.reshape(len(joints), -1)
    index = np.arange(len(joints), dtype=float)[:, None]
    if times is not None:
        data = np.hstack([np.asarray(times, float)[:, None], data])
        cols = ["time"] + cols
    data = np.hstack([index, data])
    header = ",".join(["index"] + cols)
    fmt = ["%d"] + ["%.17g"] * (data.shape[1] - 1)
    np.savetxt(path, data, delimiter=",", header=header, comments="", fmt=fmt)
