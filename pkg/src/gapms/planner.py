"""Path planning from a reach solution (or an arbitrary start pose) to the target.

The tracked point is the distal end of segment 3. Its path is the chain of
collision-test samples of the chosen solution; a backward pass finds, at each
waypoint, the valid 6DOF pose closest to the one already found at the next
waypoint (joint-1 plus joint-2 displacement). The unfold prefix takes the arm
from its folded start pose to the pose at the first waypoint. When the pass
blocks, relaxation, substitute targets, alternate solutions and finally the
arbitrary-pose planner are tried in turn.

For 4-segment arms the traversal poses carry segment 4 pointed along the path
ahead; only the final pose is the full reach pose.
"""

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial.transform import Rotation, Slerp

from ._utils import any_perpendicular, as_point3, cross3, norm3, segment_distance, wrap_angle
from .arm import (
    ArmSpec,
    PoseChain,
    angles_near,
    azimuth_axis,
    exact_refine_6dof,
    folded_pose,
    frame_step,
    joint_angles_to_vectors,
    joint_limits_ok,
    joint_ok,
    make_pose,
    rotate_about,
    rotate_frame,
    self_collision_free,
    triangle_apex,
    vectors_to_joint_angles,
)
from .errors import InfeasibleTiming, InvalidParameter, NoPath, NoSolution, UnreachableTarget
from .reach import (
    ReachParams,
    ShortcutPath,
    _full_limits,
    _proximal_joints,
    rank_solutions,
    refine_solution,
    select_solution,
    solve_reach,
)
from .voxgrid import dilate, mark_obstacles, points_clear, sample_fractions, segment_clear

PAIR_BUDGET = 400_000


@dataclass(frozen=True)
class PathParams:
    n_samples: int = 8
    d_w: float = None  # default: mean of the first three segment lengths / n_samples
    epsilon_waypoint: float = None  # default 0.5 * d_w
    slack: float = None  # default 0.5 * d_w
    joint1_max_move: float = None  # default 0.5 * d_w + slack
    joint2_max_move: float = None  # default d_w + slack
    relax_schedule: tuple = (1.5, 2.0, 3.0)
    unfold_steps: int = 8
    ring_points: int = 8
    max_alternates: int = 6
    backtrack: int = 12  # runners-up tried per waypoint when backtracking before relaxing
    backtrack_depth: int = 6  # how many waypoints back a dead end is unwound
    sweep_step: float = 0.05  # joint travel between motion checks, in voxels (0 disables)
    max_candidates: int = 40
    virtual_length_factor: float = 1.5
    fallbacks: bool = True

    def resolved(self, spec):
        n = int(self.n_samples)
        if n < 1:
            raise InvalidParameter("n_samples must be >= 1")
        d_w = self.d_w or sum(spec.lengths[:3]) / 3.0 / n
        slack = 0.5 * d_w if self.slack is None else self.slack
        out = replace(
            self,
            n_samples=n,
            d_w=d_w,
            slack=slack,
            epsilon_waypoint=0.5 * d_w if self.epsilon_waypoint is None else self.epsilon_waypoint,
            joint1_max_move=0.5 * d_w + slack if self.joint1_max_move is None else self.joint1_max_move,
            joint2_max_move=d_w + slack if self.joint2_max_move is None else self.joint2_max_move,
            relax_schedule=tuple(float(r) for r in self.relax_schedule),
        )
        for name in ("d_w", "epsilon_waypoint", "slack", "joint1_max_move", "joint2_max_move"):
            if not getattr(out, name) > 0:
                raise InvalidParameter(f"{name} must be positive")
        if any(r <= 0 for r in out.relax_schedule) or out.unfold_steps < 1:
            raise InvalidParameter("relax factors and unfold_steps must be positive")
        return out


@dataclass
class PathPlan:
    waypoints: np.ndarray  # (W, 3) tracked-point targets, root-to-target order
    poses: list  # one PoseChain per waypoint
    unfold_prefix: list = field(default_factory=list)  # folded pose ... pose at waypoint 0
    relax: list = field(default_factory=list)  # factor applied between pose k and pose k+1
    provenance: dict = field(default_factory=dict)
    target: np.ndarray = None

    def sequence(self):
        """Every pose in execution order (the prefix's last pose is poses[0])."""
        return list(self.unfold_prefix[:-1]) + list(self.poses)

    def transition_factors(self):
        """Relaxation factor for each consecutive pair of ``sequence()``."""
        pre = [1.0] * max(0, len(self.unfold_prefix) - 1)
        return pre + list(self.relax[: max(0, len(self.poses) - 1)])


# -- checks ---------------------------------------------------------------------------

def smoothness_ok(prev, cand, params, relax=1.0):
    """Joint-1 and joint-2 loci each move no more than their (scaled) bounds."""
    a, b = prev.joints, cand.joints
    return bool(norm3(b[1] - a[1]) <= params.joint1_max_move * relax
                and norm3(b[2] - a[2]) <= params.joint2_max_move * relax)


def pose_clear(grid, pose, n):
    return all(segment_clear(grid, s, e, n)[0] for s, e in pose.links())


def pose_valid(spec, grid, pose, n):
    return pose_clear(grid, pose, n) and joint_limits_ok(spec, pose) and self_collision_free(spec, pose)


def sweep_clear(spec, grid, a, b, n, step, qa=None):
    """Grid and limit check of the joint-angle line from ``a`` to ``b``.

    This is the line a rate controller follows between the two poses, so a
    pair that passes is safe to execute, not only to stand in. Checks are
    spaced so no joint travels more than ``step`` voxels between two of them.
    ``qa`` is the angle reading of ``a``, when the caller already has it.
    """
    if not step > 0 or grid is None:
        return True
    if qa is None:
        qa = angles_near(spec, a, vectors_to_joint_angles(spec, a))
    qb = angles_near(spec, b, qa)
    travel = float(norm3(b.joints - a.joints).max())
    m = max(1, math.ceil(travel / (step * grid.voxel_size)) - 1)
    Q = qa + (np.arange(1, m + 1) / (m + 1))[:, None] * (qb - qa)
    # batched forward kinematics, one grid lookup for every link sample
    f = sample_fractions(n)
    frame = np.broadcast_to(spec.base_frame, (m, 3, 3))
    start = np.broadcast_to(spec.root, (m, 3))
    ok = np.ones(m, dtype=bool)
    for j, (L, off) in enumerate(zip(spec.lengths, spec.offsets)):
        th, ph = Q[:, 2 * j], Q[:, 2 * j + 1]
        if off:
            end = start + off * azimuth_axis(frame, th)
            ok &= _clear(grid, start, end, f)
            start = end
        frame = rotate_frame(frame, th, ph)
        end = start + L * frame[:, 2]
        ok &= _clear(grid, start, end, f)
        start = end
    if not ok.all():
        return False
    if not all(_full_limits(spec, j) for j in range(spec.n_segments)):
        return all(joint_limits_ok(spec, joint_angles_to_vectors(spec, x)) for x in Q)
    return True


def first_blocked(spec, grid, poses, start, n, step):
    """First index from ``start`` whose pose, or the motion into it, is blocked; None if clear."""
    for k in range(start, len(poses)):
        if not pose_clear(grid, poses[k], n):
            return k
        if k > start and not sweep_clear(spec, grid, poses[k - 1], poses[k], n, step):
            return k
    return None


def _samples(start, end, f):
    return start[..., None, :] + f[:, None] * (end - start)[..., None, :]


def _clear(grid, start, end, f):
    return points_clear(grid, _samples(start, end, f)).all(axis=-1)


# -- waypoint IK ------------------------------------------------------------------------

class IKContext:
    """Dense segment-1 data shared by every waypoint solve of one planning job."""

    def __init__(self, spec, q, grid, params):
        self.spec, self.q, self.grid = spec, q, grid
        self.p = params
        self.f = sample_fractions(params.n_samples)
        V = q.vectors
        s1 = spec.lengths[0] * V
        d1 = s1 / norm3(s1)[:, None]
        base = spec.base_frame
        theta1, phi1, frame1, _ = frame_step(base, d1)
        ok = joint_ok(spec, 0, theta1, phi1)
        root = spec.root
        if spec.offsets[0]:
            start1 = root + spec.offsets[0] * azimuth_axis(base, theta1)
            ok &= _clear(grid, np.broadcast_to(root, start1.shape), start1, self.f)
        else:
            start1 = np.broadcast_to(root, s1.shape)
        p1 = start1 + s1
        ok &= _clear(grid, start1, p1, self.f)
        self.s1, self.start1, self.p1, self.frame1, self.ok1 = s1, start1, p1, frame1, ok
        self.need_angles = bool(spec.offsets[1]) or not all(_full_limits(spec, j) for j in range(1, spec.n_segments))
        self.arm3 = spec if spec.n_segments == 3 else replace(
            spec, lengths=spec.lengths[:3], joint_limits=spec.joint_limits[:3], offsets=spec.offsets[:3])
        self.solves = 0
        self.solve_time = 0.0

    def solve(self, w, prev, relax=1.0, s4=None, smooth=True, max_tries=50, exact=False):
        """Best valid pose with tracked point within the band of ``w``, or None.

        ``exact`` keeps only triangle placements (tracked point exactly on ``w``).
        """
        found = self.solve_many(w, prev, relax, s4, smooth, max_tries, 1, exact)
        return found[0] if found else None

    def solve_many(self, w, prev, relax=1.0, s4=None, smooth=True, max_tries=50, limit=1, exact=False):
        """Up to ``limit`` valid poses at ``w`` in preference order."""
        t0 = time.perf_counter()
        try:
            return self._solve(as_point3(w, "waypoint"), prev, relax, s4, smooth, max_tries + limit, limit, exact)
        finally:
            self.solves += 1
            self.solve_time += time.perf_counter() - t0

    def _solve(self, w, prev, relax, s4, smooth, max_tries, limit=1, exact=False):
        spec, p, grid = self.spec, self.p, self.grid
        if spec.n_segments == 4:
            if s4 is None:
                raise InvalidParameter("4-segment arms need the segment-4 vector at every waypoint")
            s4 = as_point3(s4, "s4")
        m1, m2 = p.joint1_max_move * relax, p.joint2_max_move * relax
        eps = p.epsilon_waypoint * relax
        prev_p = None if prev is None else prev.joints[1:3]
        ok1 = self.ok1.copy()
        if smooth and prev is not None:
            ok1 &= norm3(self.p1 - prev_p[0]) <= m1
        I = np.nonzero(ok1)[0]
        if len(I) == 0:
            return []
        per = max(1, PAIR_BUDGET // len(self.q))
        rows = [self._screen(I[a:a + per], w, prev_p, smooth, m2, eps, s4) for a in range(0, len(I), per)]
        cand = np.concatenate(rows)
        if exact:
            cand = cand[cand[:, 3] == 0]
        # score, then quiver indices, exact placement before band placement
        order = np.lexsort((cand[:, 3], cand[:, 2], cand[:, 1], cand[:, 0]))
        found = []
        q_prev = None
        for k in order[:max_tries]:
            pose = self._build(int(cand[k, 1]), int(cand[k, 2]), int(cand[k, 3]), w, s4)
            if pose is None or norm3(pose.joints[3] - w) > eps * (1 + 1e-9):
                continue
            if smooth and prev is not None and not smoothness_ok(prev, pose, p, relax):
                continue
            if not pose_valid(spec, grid, pose, p.n_samples):
                continue
            if smooth and prev is not None:
                if q_prev is None:
                    q_prev = angles_near(spec, prev, vectors_to_joint_angles(spec, prev))
                if not sweep_clear(spec, grid, prev, pose, p.n_samples, p.sweep_step, q_prev):
                    continue
            found.append(pose)
            if len(found) >= limit:
                break
        return found

    def _screen(self, I, w, prev_p, smooth, m2, eps, s4):
        """Vectorised candidate screen; rows of (score, i, j, placement).

        Placement 0 solves the segment 2/3 triangle so the tracked point sits
        exactly on ``w``; placement 1 keeps the quiver p2 and points a
        full-length segment 3 at ``w``, landing within the band.
        """
        spec, grid, f = self.spec, self.grid, self.f
        V = self.q.vectors
        N = len(V)
        L2, L3 = spec.lengths[1], spec.lengths[2]
        ii = np.repeat(I, N)
        jj = np.tile(np.arange(N), len(I))
        s2 = L2 * V[jj]
        if spec.offsets[1]:
            theta2, _, _, _ = frame_step(self.frame1[ii], s2 / norm3(s2)[:, None])
            start2 = self.p1[ii] + spec.offsets[1] * azimuth_axis(self.frame1[ii], theta2)
        else:
            start2 = self.p1[ii]
        p2q = start2 + s2
        gap = w - p2q
        glen = norm3(gap)
        ok = np.abs(glen - L3) <= eps
        ii, jj, s2, start2, p2q, gap, glen = ii[ok], jj[ok], s2[ok], start2[ok], p2q[ok], gap[ok], glen[ok]
        if len(ii) == 0:
            return np.zeros((0, 4))
        apex, ok, _ = triangle_apex(start2, np.broadcast_to(w, start2.shape), L2, L3, p2q, cross3(s2, gap))
        tip_band = p2q + gap * (L3 / glen)[:, None]
        wb = np.broadcast_to(w, apex.shape)
        ii = np.concatenate([ii[ok], ii])
        jj = np.concatenate([jj[ok], jj])
        kind = np.concatenate([np.zeros(ok.sum()), np.ones(len(ok))])
        start2 = np.concatenate([start2[ok], start2])
        elbow = np.concatenate([apex[ok], p2q])
        tip = np.concatenate([wb[ok], tip_band])
        if prev_p is not None:
            d1 = norm3(self.p1[ii] - prev_p[0])
            d2 = norm3(elbow - prev_p[1])
            keep = d2 <= m2 if smooth else np.ones(len(ii), dtype=bool)
            score = (d1 + d2)[keep]
            ii, jj, kind, start2, elbow, tip = ii[keep], jj[keep], kind[keep], start2[keep], elbow[keep], tip[keep]
        else:
            score = np.zeros(len(ii))

        def keep(mask):
            nonlocal ii, jj, kind, start2, elbow, tip, score
            ii, jj, kind, start2, elbow, tip, score = (x[mask] for x in (ii, jj, kind, start2, elbow, tip, score))

        if self.need_angles and len(ii):
            s2r, s3 = elbow - start2, tip - elbow
            th2, ph2, fr2, _ = frame_step(self.frame1[ii], s2r / norm3(s2r)[:, None])
            th3, ph3, fr3, _ = frame_step(fr2, s3 / norm3(s3)[:, None])
            mask = joint_ok(spec, 1, th2, ph2) & joint_ok(spec, 2, th3, ph3)
            if s4 is not None:
                th4, ph4, _, _ = frame_step(fr3, np.broadcast_to(s4 / norm3(s4), s3.shape))
                mask &= joint_ok(spec, 3, th4, ph4)
            keep(mask)
        if spec.offsets[1] and len(ii):
            keep(_clear(grid, self.p1[ii], start2, f))
        if len(ii):
            mask = _clear(grid, start2, elbow, f) & _clear(grid, elbow, tip, f)
            if s4 is not None:
                mask &= _clear(grid, tip, tip + s4, f)
            keep(mask)
        if spec.arm_radius > 0 and len(ii):
            clr = 2 * spec.arm_radius
            a0, a1 = self.start1[ii], self.p1[ii]
            mask = segment_distance(a0, a1, elbow, tip) >= clr
            if s4 is not None:
                e = tip + s4
                mask &= segment_distance(a0, a1, tip, e) >= clr
                mask &= segment_distance(start2, elbow, tip, e) >= clr
            keep(mask)
        return np.stack([score, ii.astype(float), jj.astype(float), kind], axis=1)

    def _build(self, i, j, kind, w, s4):
        spec = self.spec
        s1 = spec.lengths[0] * self.q.vectors[i]
        s2 = spec.lengths[1] * self.q.vectors[j]
        p2 = _proximal_joints(spec, s1, s2)[1]
        gap = w - p2
        if kind == 1:
            segs = np.array([s1, s2, gap * (spec.lengths[2] / norm3(gap))])
        else:
            approx = make_pose(self.arm3, np.array([s1, s2, gap]))
            try:
                segs = exact_refine_6dof(self.arm3, approx, w).segments
            except UnreachableTarget:
                return None
        if s4 is not None:
            segs = np.vstack([segs, s4])
        pose = make_pose(spec, segs, meta={"quiver": (i, j), "placement": "exact" if kind == 0 else "band"})
        pose.quiver_indices = (i, j, None) + ((None,) if s4 is not None else ())
        return pose


_CTX_CACHE = {}


def _context(spec, q, grid, params):
    key = (id(spec), id(q), id(grid), params)
    ctx = _CTX_CACHE.get(key)
    if ctx is None:
        _CTX_CACHE.clear()
        ctx = _CTX_CACHE[key] = IKContext(spec, q, grid, params)
    return ctx


def waypoint_ik(spec, q, grid, waypoint, prev, params=None, relax_factor=1.0, s4=None):
    """Valid pose at ``waypoint`` closest to ``prev`` within the scaled smoothness bounds."""
    params = (params or PathParams()).resolved(spec)
    pose = _context(spec, q, grid, params).solve(waypoint, prev, relax_factor, s4)
    if pose is None:
        raise NoSolution(f"no smooth valid pose at waypoint {np.round(waypoint, 6).tolist()}")
    return pose


# -- path helpers ------------------------------------------------------------------------

def _lookahead_s4(spec, path, k, end_point):
    """Segment-4 vector at waypoint k: pointed at the path point L4 further on."""
    L4 = spec.lengths[3]
    pts = np.vstack([path[k:], end_point[None, :]])
    remaining = L4
    here = pts[0]
    for a, b in zip(pts[:-1], pts[1:]):
        seg = norm3(b - a)
        if seg >= remaining and seg > 0:
            here = a + (b - a) * (remaining / seg)
            remaining = 0.0
            break
        remaining -= seg
        here = b
    d = here - pts[0]
    if norm3(d) < 1e-9:
        d = end_point - pts[0]
    if norm3(d) < 1e-9:
        return None
    return L4 * d / norm3(d)


def _ring(w, direction, radius, count):
    u = direction / norm3(direction) if norm3(direction) > 1e-12 else np.array([0.0, 0.0, 1.0])
    e1 = any_perpendicular(u)
    e2 = cross3(u, e1)
    ang = 2 * math.pi * np.arange(count) / count
    return w + radius * (np.cos(ang)[:, None] * e1 + np.sin(ang)[:, None] * e2)


class _Blocked(Exception):
    def __init__(self, index, reason):
        super().__init__(f"blocked at waypoint {index}: {reason}")
        self.index = index
        self.reason = reason


def _backtrack(ctx, waypoints, poses, relax, s4s, k, events):
    """Re-solve waypoints k+d .. k+1 from runners-up at k+d until k has a pose.

    Greedy picks can paint the chain into a corner several waypoints before
    the failure shows, so depths 1 .. backtrack_depth are tried in turn.
    """
    p, W = ctx.p, len(waypoints)
    for d in range(1, p.backtrack_depth + 1):
        top = k + d
        if top + 1 >= W:
            break
        alts = ctx.solve_many(waypoints[top], poses[top + 1], relax[top], s4s[top], limit=1 + p.backtrack)
        for alt in alts[1:]:
            chain = {top: alt}
            prev = alt
            for j in range(top - 1, k - 1, -1):
                prev = ctx.solve(waypoints[j], prev, relax[j] if j > k else 1.0, s4s[j])
                if prev is None:
                    break
                chain[j] = prev
            if prev is not None:
                pose = chain.pop(k)
                for j, c in chain.items():
                    poses[j] = c
                events["backtracks"].append(top)
                return pose
    return None


def _backward_pass(ctx, waypoints, terminal, end_point, allow_ring=True):
    """Poses from the last waypoint back to the first; returns (poses, relax, events)."""
    spec, p = ctx.spec, ctx.p
    W = len(waypoints)
    waypoints = waypoints.copy()
    poses = [None] * W
    poses[-1] = terminal
    relax = [1.0] * W
    events = {"relaxations": {}, "substitutions": {}, "backtracks": []}
    s4s = [None] * W
    for k in range(W - 2, -1, -1):
        s4 = _lookahead_s4(spec, waypoints, k, end_point) if spec.n_segments == 4 else None
        if spec.n_segments == 4 and s4 is None:
            s4 = poses[k + 1].segments[3]
        s4s[k] = s4
        pose = ctx.solve(waypoints[k], poses[k + 1], 1.0, s4)
        used = 1.0
        if pose is None and p.backtrack > 0:
            pose = _backtrack(ctx, waypoints, poses, relax, s4s, k, events)
        if pose is None:
            for r in p.relax_schedule:
                pose = ctx.solve(waypoints[k], poses[k + 1], r, s4)
                if pose is not None:
                    used = r
                    events["relaxations"][k] = r
                    break
        if pose is None and allow_ring and p.ring_points > 0:
            direction = waypoints[k + 1] - waypoints[k]
            for pt in _ring(waypoints[k], direction, 2 * p.epsilon_waypoint, p.ring_points):
                for r in (1.0,) + p.relax_schedule:
                    pose = ctx.solve(pt, poses[k + 1], r, s4)
                    if pose is not None:
                        used = r
                        waypoints[k] = pt
                        events["substitutions"][k] = pt.tolist()
                        if r != 1.0:
                            events["relaxations"][k] = r
                        break
                if pose is not None:
                    break
        if pose is None:
            raise _Blocked(k, "no smooth valid pose")
        poses[k] = pose
        relax[k] = used
    return waypoints, poses, relax, events


# -- unfold ------------------------------------------------------------------------------

def rotated_fold(spec, pose):
    """Folded zig-zag sharing segment 1 and the bend plane/side of ``pose``."""
    s1, s2 = pose.segments[0], pose.segments[1]
    d1 = s1 / norm3(s1)
    n = cross3(d1, s2)
    if norm3(n) < 1e-9:
        n = cross3(d1, spec.fold_plane_normal)
        if norm3(n) < 1e-9:
            n = any_perpendicular(d1)
        n = cross3(n, d1)
    n = n / norm3(n)
    dirs = [d1]
    for k in range(1, spec.n_segments):
        sign = 1.0 if k % 2 else -1.0
        dirs.append(rotate_about(dirs[-1], n, sign * spec.fold_flexion))
    return make_pose(spec, np.array([L * d for L, d in zip(spec.lengths, dirs)]), meta={"kind": "folded"})


def _angle_plan(spec, a, b):
    qa = vectors_to_joint_angles(spec, a).q.copy()
    qb = vectors_to_joint_angles(spec, b).q
    for j in range(spec.n_segments):
        ta, pa = qa[2 * j], qa[2 * j + 1]
        d = wrap_angle(qb[2 * j] - ta)
        if abs(d) > math.pi / 2 and not spec.offsets[j]:
            # same direction read as (theta + pi, -phi): the flexion passes through zero instead
            # (not at offset joints, whose link would swing to the other side)
            ta, pa = ta + math.pi, -pa
            d = wrap_angle(qb[2 * j] - ta)
        qa[2 * j], qa[2 * j + 1] = ta, pa
    delta = qb - qa
    delta[0::2] = wrap_angle(delta[0::2])
    return qa, delta


def interpolate_pose(spec, qa, delta, t):
    """Pose at fraction ``t`` along linear (azimuth, signed flexion) interpolation."""
    qt = qa + t * delta
    frame = spec.base_frame
    segs = []
    for j in range(spec.n_segments):
        th, ph = qt[2 * j], qt[2 * j + 1]
        d = (math.sin(ph) * math.cos(th)) * frame[0] + (math.sin(ph) * math.sin(th)) * frame[1] + math.cos(ph) * frame[2]
        d = d / norm3(d)
        _, _, frame, _ = frame_step(frame, d)
        segs.append(spec.lengths[j] * d)
    return make_pose(spec, np.array(segs))


def _max_moves(a, b):
    return norm3(b.joints - a.joints)


def interpolate_sequence(spec, a, b, params, min_steps=1):
    """Angle interpolation from ``a`` to ``b`` fine enough for the smoothness bounds."""
    qa, delta = _angle_plan(spec, a, b)
    steps = max(1, int(min_steps))
    for _ in range(12):
        seq = [a] + [interpolate_pose(spec, qa, delta, k / steps) for k in range(1, steps)] + [b]
        ok = True
        for x, y in zip(seq[:-1], seq[1:]):
            m = _max_moves(x, y)
            if m[1] > params.joint1_max_move or np.any(m[2:] > params.joint2_max_move):
                ok = False
                break
        if ok:
            return seq
        steps *= 2
    raise NoPath("interpolation did not converge")


def unfold_prefix(spec, grid, pose, params):
    """Rotated folded pose, interpolated poses, then ``pose`` itself."""
    params = params.resolved(spec)
    start = rotated_fold(spec, pose)
    seq = interpolate_sequence(spec, start, pose, params, params.unfold_steps)
    for k, x in enumerate(seq[:-1]):
        if not pose_valid(spec, grid, x, params.n_samples):
            raise _Blocked(-1, f"unfold pose {k} collides or violates limits")
        if not sweep_clear(spec, grid, x, seq[k + 1], params.n_samples, params.sweep_step):
            raise _Blocked(-1, f"unfold motion {k} collides or violates limits")
    return seq


# -- plans from a reach solution -----------------------------------------------------------

def _reach_waypoints(pose, n):
    f = sample_fractions(n)
    j = pose.joints
    starts = pose.elbows
    return np.concatenate([_samples(starts[k], j[k + 1], f) for k in range(3)])


def _single_plan(ctx, reach, target, allow_ring=True):
    """Backward pass plus unfold prefix for one reach solution or shortcut."""
    spec, p = ctx.spec, ctx.p
    if isinstance(reach, ShortcutPath):
        wps = np.asarray(reach.points, dtype=float)
        end_point = np.asarray(target, dtype=float)
        s4 = None
        if spec.n_segments == 4:
            d = end_point - wps[-1]
            s4 = spec.lengths[3] * d / norm3(d) if norm3(d) > 1e-12 else None
        terminal = ctx.solve(wps[-1], reach.basis_pose, 1.0, s4, smooth=False, exact=True)
        if terminal is None:
            raise _Blocked(len(wps) - 1, "no valid pose at the shortcut end")
        kind = "shortcut"
    else:
        terminal = reach
        wps = _reach_waypoints(reach, p.n_samples)
        wps[-1] = terminal.joints[3]
        end_point = terminal.joints[-1]
        kind = "reach-pose"
    wps, poses, relax, events = _backward_pass(ctx, wps, terminal, end_point, allow_ring)
    prefix = unfold_prefix(spec, ctx.grid, poses[0], p)
    prov = {"kind": kind, "strategy": "direct", **events}
    if events["relaxations"]:
        prov["strategy"] = "1a"
    if events["substitutions"]:
        prov["strategy"] = "1b"
    return PathPlan(wps, poses, prefix, relax, prov, np.asarray(target, dtype=float))


def plan_from_reach(spec, q, grid, reach, params=None, solution_set=None, target=None, reach_params=None):
    """Smooth pose sequence from the folded pose to ``reach``, with the fallback cascade."""
    params = (params or PathParams()).resolved(spec)
    if target is None:
        target = solution_set.target if solution_set is not None else reach.joints[-1]
    ctx = IKContext(spec, q, grid, params)
    try:
        plan = _single_plan(ctx, reach, target)
    except _Blocked as blocked:
        if not params.fallbacks:
            raise NoPath(str(blocked)) from None
        plan = fallback_cascade(spec, q, grid, (reach, blocked), solution_set, params, target=target,
                                reach_params=reach_params, ctx=ctx)
    plan.provenance["ik_solves"] = ctx.solves
    return plan


def fallback_cascade(spec, q, grid, failed_plan_state, solution_set, params, target=None, reach_params=None,
                     ctx=None):
    """Strategies after the backward pass blocks: alternates, then the arbitrary-pose planner.

    Relaxation (1a) and substitute targets (1b) already run inside every
    backward pass; this adds alternate reach solutions (2) and a virtual-arm
    plan from the folded pose (3).
    """
    params = params.resolved(spec)
    ctx = ctx or IKContext(spec, q, grid, params)
    failed, blocked = failed_plan_state
    tried = []
    if solution_set is not None and len(solution_set):
        for k in _alternate_order(solution_set, failed, params):
            alt = refine_solution(spec, solution_set.solutions[k], solution_set.target, solution_set.params)
            tried.append(k)
            try:
                plan = _single_plan(ctx, alt, solution_set.target)
            except (_Blocked, UnreachableTarget):
                continue
            plan.provenance.update(strategy="2", alternate_index=int(k), blocked_at=blocked.index,
                                   alternates_tried=len(tried))
            return plan
    if target is not None:
        try:
            plan = plan_arbitrary(spec, q, grid, folded_pose(spec), target, params, reach_params,
                                  allow_out_and_back=False)
        except (NoPath, NoSolution, InvalidParameter):
            plan = None
        if plan is not None:
            plan.provenance.update(strategy="3", blocked_at=blocked.index, alternates_tried=len(tried))
            return plan
    raise NoPath(f"all strategies exhausted ({blocked}; {len(tried)} alternates tried)")


def _alternate_order(sset, failed, params):
    """Nearest solutions to the failed one by waypoint distance, then the farthest."""
    if isinstance(failed, ShortcutPath) or failed is None:
        return rank_solutions(sset)[: params.max_alternates]
    ref = _reach_waypoints(failed, params.n_samples)
    dist = []
    for k in range(len(sset)):
        w = _reach_waypoints(sset.solutions[k], params.n_samples)
        dist.append(float(np.mean(norm3(w - ref))))
    dist = np.array(dist)
    order = [int(k) for k in np.lexsort((np.arange(len(dist)), dist)) if dist[k] > 0]
    half = max(1, params.max_alternates // 2)
    picks = order[:half] + [k for k in reversed(order[half:]) if k not in order[:half]][: params.max_alternates - half]
    return picks


def plan_reach_path(spec, q, grid, target, reach_params=None, path_params=None):
    """Solve, select, refine and plan: the whole reach-and-path pipeline."""
    reach_params = reach_params or ReachParams()
    sset = solve_reach(spec, q, grid, target, reach_params)
    chosen = select_solution(sset)
    if not isinstance(chosen, ShortcutPath):
        chosen = refine_solution(spec, chosen, target, sset.params)
    plan = plan_from_reach(spec, q, grid, chosen, path_params, sset, target, reach_params)
    return sset, chosen, plan


# -- arbitrary start pose ------------------------------------------------------------------

def _goal(spec, target, reach_params):
    target = as_point3(target, "target")
    if spec.n_segments == 3:
        return target, None
    p = (reach_params or ReachParams()).resolved(spec, target)
    s4 = spec.lengths[3] * p.approach_axis
    return target - s4, s4


def _virtual_candidates(spec, q, grid, start_pt, goal, params, reach_params):
    D = norm3(goal - start_pt)
    Lv = min(params.virtual_length_factor * D / 3.0, sum(spec.lengths[:3]) / 3.0)
    Lv = max(Lv, D / 3.0 * (1 + 1e-9))
    n_v = max(1, int(round(Lv / params.d_w)))
    vspec = ArmSpec((Lv, Lv, Lv), root=start_pt)
    rp = ReachParams(n_samples_per_segment=n_v, mode="6DOF",
                     workers=(reach_params.workers if reach_params else 1))
    sset = solve_reach(vspec, q, grid, goal, rp, allow_empty=True)
    return vspec, sset, n_v


def _screen_virtual(spec, grid, pts):
    """Cheap real-arm reachability at end and mid waypoints of each virtual segment."""
    reach = sum(spec.lengths[:3]) + spec.offsets[0] + spec.offsets[1]
    return bool(np.all(norm3(pts - spec.root) <= reach) and points_clear(grid, pts).all())


def _forward_pass(ctx, start_pose, waypoints, end_point, final_s4):
    spec, p = ctx.spec, ctx.p
    poses, relax = [], []
    prev = start_pose
    events = {"relaxations": {}}
    for k, w in enumerate(waypoints):
        last = k == len(waypoints) - 1
        s4 = None
        if spec.n_segments == 4:
            s4 = final_s4 if last else _lookahead_s4(spec, waypoints, k, end_point)
            if s4 is None:
                s4 = final_s4
        pose, used = None, 1.0
        for r in (1.0,) + p.relax_schedule:
            pose = ctx.solve(w, prev, r, s4, exact=last)
            if pose is not None:
                used = r
                break
        if pose is None:
            return None
        if used != 1.0:
            events["relaxations"][k] = used
        poses.append(pose)
        relax.append(used)
        prev = pose
    return poses, relax, events


def virtual_paths(vspec, q, vsset, n_v, rows=None):
    """Waypoint paths (S, 3 n_v, 3) of virtual-arm solutions, built from their indices."""
    idx = vsset.indices if rows is None else vsset.indices[rows]
    V = q.vectors
    f = sample_fractions(n_v)
    root = np.broadcast_to(vspec.root, (len(idx), 3))
    p1 = root + vspec.lengths[0] * V[idx[:, 0]]
    p2 = p1 + vspec.lengths[1] * V[idx[:, 1]]
    p3 = p2 + (vsset.backward_points[idx[:, 2]] - p2)
    return np.concatenate([_samples(root, p1, f), _samples(p1, p2, f), _samples(p2, p3, f)], axis=1)


def _try_virtual(ctx, vspec, start_pose, goal, final_s4, end_point, vsset, order, n_v, max_candidates):
    spec, grid = ctx.spec, ctx.grid
    rejected = []
    for k in order[:max_candidates]:
        pts = virtual_paths(vspec, ctx.q, vsset, n_v, [k])[0]
        checks = pts[[n_v // 2 - 1 if n_v > 1 else 0, n_v - 1, n_v + n_v // 2 - 1, 2 * n_v - 1,
                      2 * n_v + n_v // 2 - 1, 3 * n_v - 1]]
        if not _screen_virtual(spec, grid, checks):
            rejected.append(int(k))
            continue
        pts = pts.copy()
        pts[-1] = goal
        res = _forward_pass(ctx, start_pose, pts, end_point, final_s4)
        if res is None:
            rejected.append(int(k))
            continue
        poses, relax, events = res
        return k, pts, poses, relax, events, rejected
    return None, None, None, None, None, rejected


def plan_arbitrary(spec, q, grid, start_pose, target, params=None, reach_params=None, allow_out_and_back=True):
    """Plan from any valid pose to ``target`` via a virtual arm rooted at its tracked point."""
    params = (params or PathParams()).resolved(spec)
    goal, final_s4 = _goal(spec, target, reach_params)
    target = as_point3(target, "target")
    if not pose_valid(spec, grid, start_pose, params.n_samples):
        raise InvalidParameter("start pose collides or violates joint limits")
    ctx = IKContext(spec, q, grid, params)
    start_pt = start_pose.joints[3]
    if norm3(goal - start_pt) <= params.epsilon_waypoint and (final_s4 is None or
                                                                 np.allclose(start_pose.segments[3], final_s4)):
        return PathPlan(start_pt[None, :], [start_pose], [], [1.0], {"kind": "virtual-arm", "strategy": "trivial"},
                        target)
    vspec, vsset, n_v = _virtual_candidates(spec, q, grid, start_pt, goal, params, reach_params)
    order = rank_solutions(vsset)
    k, pts, poses, relax, events, rejected = _try_virtual(ctx, vspec, start_pose, goal, final_s4, target, vsset, order,
                                                          n_v, params.max_candidates)
    if k is not None:
        wps = np.vstack([start_pt, pts])
        prov = {"kind": "virtual-arm", "strategy": "direct", "virtual_lengths": list(vspec.lengths),
                "virtual_samples": n_v, "candidate": [int(x) for x in vsset.indices[k]],
                "candidates_rejected": len(rejected), **events}
        return PathPlan(wps, [start_pose] + poses, [], relax + [1.0], prov, target)
    if not allow_out_and_back:
        raise NoPath("no virtual-arm path is feasible")
    return out_and_back(spec, q, grid, start_pose, target, params, reach_params, ctx)


def _fold_rotation(spec, a, b, params):
    """Rigid rotation about the root taking folded pose ``a`` onto folded pose ``b``."""
    def frame(p):
        d1 = p.segments[0] / norm3(p.segments[0])
        d2 = p.segments[1] / norm3(p.segments[1])
        n = cross3(d1, d2)
        n = n / norm3(n)
        return np.stack([d1, n, cross3(d1, n)], axis=1)

    R = Rotation.from_matrix(frame(b) @ frame(a).T)
    slerp = Slerp([0.0, 1.0], Rotation.concatenate([Rotation.identity(), R]))
    steps = max(1, params.unfold_steps)
    for _ in range(12):
        seq = [a]
        for t in np.arange(1, steps) / steps:
            seq.append(make_pose(spec, slerp([t])[0].apply(a.segments)))
        seq.append(b)
        if all(np.all(_max_moves(x, y)[1:] <= params.joint1_max_move) for x, y in zip(seq[:-1], seq[1:])):
            return seq
        steps *= 2
    raise NoPath("fold rotation did not converge")


def out_and_back(spec, q, grid, start_pose, target, params, reach_params=None, ctx=None):
    """Retract along the start pose's own path to the fold, turn, and plan outward."""
    params = params.resolved(spec)
    ctx = ctx or IKContext(spec, q, grid, params)
    try:
        back = _single_plan(ctx, start_pose, start_pose.joints[-1])
        _, _, outward = plan_reach_path(spec, q, grid, target, reach_params, replace(params, fallbacks=False))
    except (_Blocked, NoSolution, NoPath) as exc:
        raise NoPath(f"out-and-back failed: {exc}") from None
    back_seq = back.sequence()[::-1]
    back_relax = back.transition_factors()[::-1]
    # turn through the starting folded pose (fold A -> start fold -> fold B), or rotate
    # fold A straight onto fold B when that detour collides
    a, b = back_seq[-1], outward.sequence()[0]
    home = folded_pose(spec)
    turns = (_fold_rotation(spec, a, home, params) + _fold_rotation(spec, home, b, params)[1:],
             _fold_rotation(spec, a, b, params))
    for via, turn in zip(("start-fold", "direct"), turns):
        if (all(pose_valid(spec, grid, x, params.n_samples) for x in turn[1:-1])
                and all(sweep_clear(spec, grid, x, y, params.n_samples, params.sweep_step)
                        for x, y in zip(turn[:-1], turn[1:]))):
            break
    else:
        raise NoPath("out-and-back fold rotation collides")
    out_seq = outward.sequence()
    poses = back_seq + turn[1:-1] + out_seq
    relax = back_relax + [1.0] * (len(turn) - 1) + outward.transition_factors() + [1.0]
    wps = np.array([x.joints[3] for x in poses])
    prov = {"kind": "out-and-back", "strategy": "out-and-back", "back_poses": len(back_seq),
            "turn_poses": len(turn) - 2, "turn": via, "outward_poses": len(out_seq), "relaxations": {}}
    return PathPlan(wps, poses, [], relax, prov, as_point3(target, "target"))


# -- dynamic replanning ---------------------------------------------------------------------

def augment_grid(grid, obstacle):
    """Static grid plus a new obstacle dilated by the grid's own radius."""
    empty = replace(grid, occupancy=np.zeros_like(grid.occupancy), dilation_radius=0.0)
    overlay = mark_obstacles(empty, [obstacle])
    if grid.dilation_radius > 0:
        overlay = dilate(overlay, grid.dilation_radius)
    return replace(grid, occupancy=grid.occupancy | overlay.occupancy)


def polyline_distance(points, polyline):
    """Distance from each point to the nearest segment of ``polyline``; leading dims broadcast."""
    pts = np.asarray(points, dtype=float)[..., None, :]
    a, b = polyline[:-1], polyline[1:]
    return segment_distance(pts, pts, a, b).min(axis=-1)


def mean_deviation(points, polyline):
    """Mean over the points of their distance to the polyline (batched over leading dims)."""
    d = polyline_distance(points, polyline).mean(axis=-1)
    return float(d) if np.ndim(d) == 0 else d


@dataclass
class ReplanTiming:
    waypoint_period: float = 0.083  # seconds between waypoints during execution
    replan_per_waypoint: float = None  # seconds of solve time per remaining waypoint; None = measure

    def lead(self, remaining, measured):
        per = self.replan_per_waypoint if self.replan_per_waypoint is not None else measured
        t_est = (remaining + 1) * per
        return int(math.ceil(t_est / self.waypoint_period - 1e-12)), t_est


def replan_dynamic(spec, q, grid_static, active, current_index, new_obstacle, timing=None, params=None,
                   reach_params=None):
    """Replacement plan avoiding ``new_obstacle``; prefix identical through the switch index."""
    params = (params or PathParams()).resolved(spec)
    timing = timing or ReplanTiming()
    if not 0 <= current_index < len(active.poses):
        raise InvalidParameter("current_index outside the active plan")
    grid = augment_grid(grid_static, new_obstacle)
    hit = first_blocked(spec, grid, active.poses, current_index, params.n_samples, params.sweep_step)
    base_prov = dict(active.provenance)
    if hit is None:
        out = replace(active, provenance={**base_prov, "replan": {"collision_index": None, "unchanged": True}})
        return out
    ctx = IKContext(spec, q, grid, params)
    measured = _measure_solve_time(ctx, active, current_index)
    remaining = len(active.poses) - 1 - current_index
    lead, t_est = timing.lead(remaining, measured)
    switch = current_index + lead
    info = {"collision_index": hit, "current_index": current_index, "switch_index": switch,
            "estimated_replan_s": t_est, "lead_waypoints": lead}
    if hit - current_index < 3 or switch >= hit:
        err = InfeasibleTiming(f"collision at waypoint {hit} is too close to waypoint {current_index} "
                               f"(switch would be {switch})")
        err.info = info
        raise err
    start_pose = active.poses[switch]
    # the replacement ends on the active plan's final pose placement
    goal = active.poses[-1].joints[3]
    final_s4 = active.poses[-1].segments[3] if spec.n_segments == 4 else None
    vspec, vsset, n_v = _virtual_candidates(spec, q, grid, start_pose.joints[3], goal, params, reach_params)
    original = np.vstack([spec.root, active.waypoints])
    devs = np.zeros(len(vsset))
    for a in range(0, len(vsset), 2000):
        rows = np.arange(a, min(a + 2000, len(vsset)))
        devs[rows] = mean_deviation(virtual_paths(vspec, q, vsset, n_v, rows), original)
    idx = vsset.indices
    order = [int(k) for k in np.lexsort((idx[:, 2], idx[:, 1], idx[:, 0], devs))] if len(devs) else []
    end_point = active.poses[-1].joints[-1]
    k, pts, poses, relax, events, rejected = _try_virtual(ctx, vspec, start_pose, goal, final_s4, end_point, vsset, order,
                                                          n_v, len(order))
    info.update(candidates=len(order), candidates_rejected=rejected, virtual_lengths=list(vspec.lengths),
                virtual_root=vspec.root.tolist(), virtual_goal=np.asarray(goal).tolist(), virtual_samples=n_v)
    if k is None:
        err = NoPath("the dynamic obstacle blocks every replacement path")
        err.info = info
        raise err
    info.update(selected=[int(x) for x in idx[k]], selected_deviation=float(devs[k]))
    wps = np.vstack([active.waypoints[: switch + 1], pts])
    new_poses = list(active.poses[: switch + 1]) + poses
    new_relax = list(active.relax[:switch]) + relax + [1.0]
    prov = {**base_prov, "kind": "replan", "replan": info, "relaxations_after_switch": events["relaxations"]}
    return PathPlan(wps, new_poses, list(active.unfold_prefix), new_relax, prov, active.target)


def _measure_solve_time(ctx, active, current_index):
    """Seconds per waypoint solve, timed on the active plan's next waypoint."""
    k = min(current_index + 1, len(active.poses) - 1)
    s4 = active.poses[k].segments[3] if ctx.spec.n_segments == 4 else None
    t0 = time.perf_counter()
    ctx.solve(active.waypoints[k], active.poses[current_index], 1.0, s4)
    return time.perf_counter() - t0
