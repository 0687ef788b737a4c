"""Independent re-check of plan and trace files against a scene.

Nothing here trusts flags written by the planner: poses are rebuilt from the
stored segment vectors, link samples are looked up in the occupancy array
directly, and joint angles, lengths, smoothness and the terminal error are
recomputed from the file contents.
"""

import math

import numpy as np

from ._utils import segment_distance
from .arm import LIMIT_SLACK, joint_angles_to_vectors, vectors_to_joint_angles
from .io import arm_from_dict, path_from_config, pose_from_dict
from .planner import PathParams

LENGTH_RTOL = 1e-9
ANGLE_TOL = 1e-9


def occupied(grid, points):
    """True where a point falls in an occupied cell; points outside the grid are free."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    idx = np.floor((pts - grid.origin) / grid.voxel_size).astype(np.int64)
    dims = np.asarray(grid.dims)
    inside = np.all((idx >= 0) & (idx < dims), axis=1)
    out = np.zeros(len(pts), dtype=bool)
    k = idx[inside]
    out[inside] = grid.occupancy[k[:, 0], k[:, 1], k[:, 2]]
    return out


def link_samples(pose, n):
    """n samples per physical link at fractions k/n, k = 1..n."""
    f = np.arange(1, n + 1, dtype=float) / n
    j = pose.joints
    pts = []
    for k, o in enumerate(pose.offsets):
        start = j[k]
        if o.any():
            pts.append(start + f[:, None] * o)
            start = start + o
        pts.append(start + f[:, None] * (j[k + 1] - start))
    return np.concatenate(pts)


def check_pose(spec, grid, pose, n, stored_angles_deg=None, length_slack=None):
    """List of failed check names for one pose.

    ``length_slack`` (per segment, meters) widens the length check, for the
    closing segment of a 4-segment reach pose refined by rescaling.
    """
    bad = []
    lens = np.linalg.norm(pose.segments, axis=1)
    L = np.asarray(spec.lengths)
    slack = np.zeros(len(L)) if length_slack is None else np.asarray(length_slack, float)
    if np.any(np.abs(lens - L) > LENGTH_RTOL * L + slack):
        bad.append("segment-length")
    if grid is not None and occupied(grid, link_samples(pose, n)).any():
        bad.append("collision")
    q = vectors_to_joint_angles(spec, pose).q
    for j, lim in enumerate(spec.joint_limits):
        th, ph = q[2 * j], q[2 * j + 1]
        if not (lim.elevation[0] - LIMIT_SLACK <= ph <= lim.elevation[1] + LIMIT_SLACK
                and lim.azimuth[0] - LIMIT_SLACK <= th <= lim.azimuth[1] + LIMIT_SLACK):
            bad.append("joint-limit")
            break
    if stored_angles_deg is not None:
        back = joint_angles_to_vectors(spec, np.radians(np.asarray(stored_angles_deg, float)))
        u = back.segments / np.linalg.norm(back.segments, axis=1)[:, None]
        if np.abs(u - pose.segments / lens[:, None]).max() > ANGLE_TOL:
            bad.append("angle-consistency")
    if spec.arm_radius > 0:
        clearance = 2.0 * spec.arm_radius
        j, starts = pose.joints, pose.elbows
        m = pose.n_segments
        if any(segment_distance(starts[a], j[a + 1], starts[b], j[b + 1]) < clearance
               for a in range(m) for b in range(a + 2, m)):
            bad.append("self-collision")
    return bad


def validate_plan(doc, scene=None, grid=None, extra_obstacles=()):
    """Violations of a parsed plan document: a list of {phase, pose, check, ...} dicts."""
    spec = arm_from_dict(doc["arm"], doc["root"])
    if grid is None and scene is not None:
        grid = scene.build_grid(extra_obstacles)
    cfg = doc["config"]
    params = path_from_config(cfg.get("path", {})).resolved(spec) if cfg.get("path") else PathParams().resolved(spec)
    n = params.n_samples
    prefix = [pose_from_dict(p, spec.root) for p in doc["unfold_prefix"]]
    poses = [pose_from_dict(p, spec.root) for p in doc["poses"]]
    out = []
    first = 0
    rp = doc["provenance"].get("replan") or {}
    if extra_obstacles and rp.get("current_index") is not None:
        # poses behind the arm at insertion time were already executed
        first = int(rp["current_index"])
    reach = cfg["reach"]
    closing = None
    if reach.get("mode") == "8DOF" and reach.get("refine_variant", "rescale") == "rescale":
        # rescaled closure: segment 4 absorbs the free vector's length error, at most epsilon_gap
        closing = np.zeros(spec.n_segments)
        closing[-1] = reach["epsilon_gap"]
    for phase, items, raw in (("prefix", prefix, doc["unfold_prefix"]), ("path", poses, doc["poses"])):
        for k, (pose, d) in enumerate(zip(items, raw)):
            g = grid if (phase == "path" and k >= first) or (phase == "prefix" and first == 0) else None
            last = phase == "path" and k == len(poses) - 1
            for check in check_pose(spec, g, pose, n, d["joint_angles_deg"], closing if last else None):
                out.append({"phase": phase, "pose": k, "check": check})
    # smoothness between consecutive poses of the execution sequence
    seq = prefix[:-1] + poses
    factors = [1.0] * max(0, len(prefix) - 1) + list(doc["relax"][: max(0, len(poses) - 1)])
    for k in range(len(seq) - 1):
        a, b = seq[k].joints, seq[k + 1].joints
        f = factors[k] * (1 + 1e-9)
        if (np.linalg.norm(b[1] - a[1]) > params.joint1_max_move * f
                or np.linalg.norm(b[2] - a[2]) > params.joint2_max_move * f):
            out.append({"phase": "sequence", "pose": k, "check": "smoothness"})
    # tracked points on their waypoints, within the band of the adjacent transitions
    wps = np.asarray(doc["waypoints"], float)
    relax = list(doc["relax"])
    for k, (pose, w) in enumerate(zip(poses, wps)):
        near = [r for r in relax[max(0, k - 1): k + 1]] + [1.0]
        if np.linalg.norm(pose.joints[3] - w) > params.epsilon_waypoint * max(near) * (1 + 1e-9):
            out.append({"phase": "path", "pose": k, "check": "waypoint"})
    target = np.asarray(doc["target"], float)
    tip = poses[-1].joints[-1]
    tol = reach["epsilon_gap"] + reach.get("near_target_radius", 0.0) + 1e-9 * sum(spec.lengths)
    err = float(np.linalg.norm(tip - target))
    if err > tol:
        out.append({"phase": "path", "pose": len(poses) - 1, "check": "target", "error": err})
    return out


def validate_trace(doc, scene=None, grid=None, n_samples=8):
    """Collision and limit violations of every tick of a parsed trace document."""
    spec = arm_from_dict(doc["arm"], doc["root"])
    if grid is None and scene is not None:
        grid = scene.build_grid()
    out = []
    for k, tick in enumerate(doc["ticks"]):
        pose = joint_angles_to_vectors(spec, np.radians(np.asarray(tick["q_deg"], float)))
        bad = [c for c in check_pose(spec, grid, pose, n_samples) if c != "self-collision"]
        for check in bad:
            out.append({"phase": "trace", "pose": k, "check": check})
        if not math.isfinite(tick["time"]):
            out.append({"phase": "trace", "pose": k, "check": "time"})
    t = np.array([tick["time"] for tick in doc["ticks"]])
    if len(t) > 1 and np.any(np.diff(t) <= 0):
        out.append({"phase": "trace", "pose": None, "check": "time-order"})
    return out
