"""Exhaustive reference enumeration for the reach search.

No pruning: every (segment-1, segment-2, cone) triple whose free vector lies
near the admissible length band is rebuilt as a pose and checked through the
public arm and grid functions. ``batched=False`` checks them one at a time;
the default runs the same checks over arrays for arms without offset links.
Meant for coarse quivers.
"""

import math

import numpy as np

from ._utils import norm3, segment_distance
from .arm import forward_points, joint_limits_ok, make_pose, self_collision_free
from .reach import ReachParams, backward_endpoints, cone_vectors
from .voxgrid import points_clear, segment_clear, segment_samples


def enumerate_solutions(spec, q, grid, target, params=None, batched=True):
    """Sorted list of (i, j, l) index triples of every valid composition."""
    p = (params or ReachParams()).resolved(spec, target)
    target = np.asarray(target, dtype=float)
    eightdof = p.mode == "8DOF"
    if eightdof:
        back, cidx = backward_endpoints(target, spec.lengths[3], q, p.approach_axis, p.approach_half_angle)
        cvecs = cone_vectors(q, cidx, p.approach_axis)
    else:
        back = target[None, :]
        cvecs = None
    V = q.vectors
    L1, L2, L3 = spec.lengths[:3]
    eps = p.epsilon_gap
    slack = spec.offsets[0] + spec.offsets[1] + 1e-9

    # loose band screen over all triples, then exact checks per candidate
    p2_all = spec.root + L1 * V[:, None, :] + L2 * V[None, :, :]
    batched = batched and not any(spec.offsets)
    found = []
    for l, b in enumerate(back):
        d = np.linalg.norm(b - p2_all, axis=-1)
        c = None if cvecs is None else cvecs[l]
        I, J = np.nonzero(np.abs(d - L3) <= eps + slack)
        if batched:
            ok = _valid_batch(spec, grid, p, V[I], V[J], b, c)
            found.extend((int(i), int(j), l) for i, j in zip(I[ok], J[ok]))
            continue
        for i, j in zip(I, J):
            if _valid(spec, grid, p, V[i], V[j], b, c):
                found.append((int(i), int(j), int(l)))
    return sorted(found)


def _unlimited(lim):
    return (lim.elevation[0] <= 0.0 and lim.elevation[1] >= math.pi
            and lim.azimuth[0] <= -math.pi and lim.azimuth[1] >= math.pi)


def _valid_batch(spec, grid, p, u1, u2, b, c):
    """:func:`_valid` over candidate arrays; offset-free arms only."""
    m = len(u1)
    if m == 0:
        return np.zeros(0, dtype=bool)
    root = spec.root
    s1 = spec.lengths[0] * u1
    s2 = spec.lengths[1] * u2
    j1 = root + s1
    j2 = j1 + s2
    s3 = b - j2
    ok = norm3(s3) != 0
    ok &= np.abs(norm3(s3) - spec.lengths[2]) <= p.epsilon_gap
    joints = [np.broadcast_to(root, s1.shape), j1, j2, j2 + s3]
    if c is not None:
        joints.append(joints[3] + spec.lengths[3] * c)
    for a, e in zip(joints[:-1], joints[1:]):
        ok &= points_clear(grid, segment_samples(a, e, p.n_samples_per_segment)).all(axis=-1)
    clearance = 2.0 * spec.arm_radius
    if clearance > 0:
        n = len(joints) - 1
        for x in range(n):
            for y in range(x + 2, n):
                ok &= segment_distance(joints[x], joints[x + 1], joints[y], joints[y + 1]) >= clearance
    if not all(_unlimited(lim) for lim in spec.joint_limits):
        segs = [np.stack([s1[k], s2[k], s3[k]] + ([spec.lengths[3] * c] if c is not None else []))
                for k in range(m)]
        for k in np.nonzero(ok)[0]:
            ok[k] = joint_limits_ok(spec, make_pose(spec, segs[k]))
    return ok


def _valid(spec, grid, p, u1, u2, b, c):
    s1 = spec.lengths[0] * u1
    s2 = spec.lengths[1] * u2
    if spec.offsets[0] or spec.offsets[1]:
        p2 = make_pose(spec, np.array([s1, s2] + [s2] * (spec.n_segments - 2))).joints[2]
    else:
        p2 = forward_points(spec, np.array([s1, s2] + [s2] * (spec.n_segments - 2)))[2]
    segs = [s1, s2, b - p2]
    if c is not None:
        segs.append(spec.lengths[3] * c)
    if norm3(segs[2]) == 0:
        return False
    pose = make_pose(spec, np.array(segs))
    if abs(norm3(pose.segments[2]) - spec.lengths[2]) > p.epsilon_gap:
        return False
    if not joint_limits_ok(spec, pose):
        return False
    for start, end in pose.links():
        if not segment_clear(grid, start, end, p.n_samples_per_segment)[0]:
            return False
    return self_collision_free(spec, pose)
