"""Reach-pose search: quiver hypotheses for segments 1, 2 (and 4), free vector
for segment 3, pruned by reachability, obstacles, joint limits and self
collision.

The search is exhaustive over the discretized mappings. Segment-1 hypotheses
are tested first and the survivors stored densely; segment-2 hypotheses are
then generated from every survivor and tested in chunks of segment-2 indices,
which is also the unit handed to worker threads. Surviving (i, j, l) index
triples are merged and sorted, and the returned poses are rebuilt one at a
time from those indices so that the output does not depend on how the work
was split.
"""

import math
import os
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from ._utils import as_point3, as_unit, dot3, norm3, segment_distance
from .arm import exact_refine_6dof, exact_refine_8dof, _chain_frames, azimuth_axis, frame_step, full_azimuth, joint_ok, make_pose
from .errors import EmptyCone, InvalidParameter, NoSolution
from .quiver import cone_subset
from .voxgrid import points_clear, sample_fractions, segment_clear

# pair budget per chunk; bounds temporary memory to a few hundred MB
CHUNK_PAIRS = 200_000


@dataclass
class ReachParams:
    epsilon_gap: float = None  # default 0.5 * L3 / n_samples
    n_samples_per_segment: int = 8
    approach_axis: np.ndarray = None  # default: direction from root to target
    approach_half_angle: float = 0.0
    near_target_radius: float = 0.0
    mode: str = None  # "6DOF" | "8DOF"; default from the segment count
    prune: bool = True
    cone_precheck: bool = False
    refine_variant: str = "rescale"
    workers: int = 1

    def resolved(self, spec, target=None):
        """Copy with every default filled in for ``spec``."""
        n = int(self.n_samples_per_segment)
        if n < 1 or n != self.n_samples_per_segment:
            raise InvalidParameter("n_samples_per_segment must be an integer >= 1")
        mode = self.mode or ("8DOF" if spec.n_segments == 4 else "6DOF")
        if mode not in ("6DOF", "8DOF"):
            raise InvalidParameter(f"unknown mode {mode!r}")
        if spec.n_segments != (4 if mode == "8DOF" else 3):
            raise InvalidParameter(f"{mode} needs {4 if mode == '8DOF' else 3} segments")
        eps = 0.5 * spec.lengths[2] / n if self.epsilon_gap is None else float(self.epsilon_gap)
        if eps < 0:
            raise InvalidParameter("epsilon_gap must be >= 0")
        if self.near_target_radius < 0:
            raise InvalidParameter("near_target_radius must be >= 0")
        if not 0 <= self.approach_half_angle <= math.pi:
            raise InvalidParameter("approach_half_angle must lie in [0, pi]")
        axis = self.approach_axis
        if axis is None and mode == "8DOF":
            if target is None:
                raise InvalidParameter("approach_axis needed")
            d = as_point3(target) - spec.root
            if norm3(d) < 1e-12:
                raise InvalidParameter("target coincides with root; give approach_axis")
            axis = d / norm3(d)
        elif axis is not None:
            axis = as_unit(axis, "approach_axis")
        workers = resolve_workers(self.workers)
        return ReachParams(eps, n, axis, float(self.approach_half_angle), float(self.near_target_radius), mode,
                           bool(self.prune), bool(self.cone_precheck), self.refine_variant, workers)


def resolve_workers(workers):
    if workers in (None, "max", 0):
        return os.cpu_count() or 1
    workers = int(workers)
    if workers < 1:
        raise InvalidParameter("workers must be >= 1")
    return workers


@dataclass
class ShortcutPath:
    segment_index: int  # 1 or 2
    hypothesis: tuple  # (i,) or (i, j) quiver indices
    hit_sample_index: int  # 1-based sample index on the hit segment
    sublength_samples: np.ndarray  # hit-segment samples 1..k (or the direct vector's samples)
    bridge: np.ndarray = None  # sublength end -> target, if needed
    direct: bool = False  # completed by a direct vector from the hypothesis origin
    target_index: int = 0  # which backward point was met
    points: np.ndarray = None  # whole path polyline, root excluded
    length: float = 0.0
    basis_pose: object = None

    @property
    def key(self):
        return (self.length, self.segment_index) + tuple(self.hypothesis) + (self.target_index,)


@dataclass
class SolutionSet:
    solutions: list
    indices: np.ndarray  # (S, 3) canonical (i, j, l)
    shortcut_paths: list = field(default_factory=list)
    stats: dict = field(default_factory=dict)
    backward_points: np.ndarray = None
    cone_indices: np.ndarray = None
    params: ReachParams = None
    target: np.ndarray = None

    def __len__(self):
        return len(self.solutions)

    def index_set(self):
        return [tuple(int(x) for x in row) for row in self.indices]


# -- small public pieces --------------------------------------------------------

def backward_endpoints(target, L4, q, approach_axis, half_angle, mode="8DOF"):
    """Segment-3 distal points ``target - L4 * v`` for every ``v`` in the approach cone.

    Returns ``(points, cone_indices)``; 6DOF returns the target alone with
    index 0. ``v`` is the travel direction of the end effector.
    """
    target = as_point3(target, "target")
    if mode == "6DOF":
        return target[None, :].copy(), np.zeros(1, dtype=np.int64)
    axis = as_unit(approach_axis, "approach_axis")
    if half_angle < 0:
        raise InvalidParameter("half_angle must be >= 0")
    if half_angle == 0:
        # single attack vector; carried as index -1 (not a quiver member)
        return (target - L4 * axis)[None, :], np.array([-1], dtype=np.int64)
    idx = np.asarray(cone_subset(q, axis, half_angle), dtype=np.int64)
    if len(idx) == 0:
        raise EmptyCone(f"no quiver vector within {math.degrees(half_angle):.3g} deg of the approach axis")
    return target - L4 * q.vectors[idx], idx


def cone_vectors(q, cone_indices, approach_axis):
    v = np.empty((len(cone_indices), 3))
    for k, c in enumerate(cone_indices):
        v[k] = approach_axis if c < 0 else q.vectors[c]
    return v


def span_gap(p2, backward_pts, L3, epsilon):
    """Free vectors ``b - p2`` whose length is within ``epsilon`` of ``L3``.

    Returns a list of ``(v3, backward_index)``. The coarse reach test
    ``|p2 - b| <= L3 + epsilon`` runs first.
    """
    if epsilon < 0:
        raise InvalidParameter("epsilon must be >= 0")
    p2 = as_point3(p2, "p2")
    out = []
    for k, b in enumerate(np.asarray(backward_pts, dtype=float).reshape(-1, 3)):
        v3 = b - p2
        n = norm3(v3)
        if n > L3 + epsilon:
            continue
        if abs(n - L3) <= epsilon:
            out.append((v3, k))
    return out


def _samples(start, end, f):
    return start[..., None, :] + f[:, None] * (end - start)[..., None, :]


def _clear(grid, start, end, f):
    return points_clear(grid, _samples(start, end, f)).all(axis=-1)


# -- segment 1 ------------------------------------------------------------------

@dataclass
class Segment1:
    """Dense per-hypothesis data for every segment-1 quiver mapping."""

    s1: np.ndarray
    start: np.ndarray  # root, or elbow of an offset joint 1
    p1: np.ndarray
    frame: np.ndarray  # (N, 3, 3) joint-1 frames
    limits_ok: np.ndarray
    reach_ok: np.ndarray
    sample_clear: np.ndarray  # (N, n) per-sample verdicts of segment 1 (offset link excluded)
    offset_clear: np.ndarray
    survivors: np.ndarray  # indices passing limits, reach and collision

    @property
    def clear(self):
        return self.sample_clear.all(axis=1) & self.offset_clear


def _segment1(spec, q, grid, target, p, reach_targets):
    V = q.vectors
    L1 = spec.lengths[0]
    s1 = L1 * V
    d1 = s1 / norm3(s1)[:, None]
    base = spec.base_frame
    theta, phi, frame, _ = frame_step(base, d1)
    limits_ok = joint_ok(spec, 0, theta, phi)
    root = spec.root
    if spec.offsets[0]:
        o1 = spec.offsets[0] * azimuth_axis(base, theta)
        start = root + o1
        offset_clear = _clear(grid, np.broadcast_to(root, start.shape), start, p.f)
    else:
        start = np.broadcast_to(root, s1.shape)
        offset_clear = np.ones(len(V), dtype=bool)
    p1 = start + s1
    if p.params.prune:
        reach = sum(spec.lengths[1:]) + spec.offsets[1] + p.params.epsilon_gap
        dist = np.min(norm3(p1[:, None, :] - reach_targets[None, :, :]), axis=1)
        reach_ok = dist <= reach
    else:
        reach_ok = np.ones(len(V), dtype=bool)
    sample_clear = points_clear(grid, _samples(start, p1, p.f))
    keep = limits_ok & reach_ok & sample_clear.all(axis=1) & offset_clear
    return Segment1(s1, start, p1, frame, limits_ok, reach_ok, sample_clear, offset_clear,
                    np.nonzero(keep)[0])


def prune_segment1(spec, q, grid, target, params):
    """Indices of segment-1 mappings passing joint-1 limits, reach and collision."""
    p = _Prepared.build(spec, q, grid, target, params)
    return p.seg1.survivors


# -- search context ---------------------------------------------------------------

@dataclass
class _Prepared:
    spec: object
    q: object
    grid: object
    target: np.ndarray
    params: ReachParams
    f: np.ndarray
    backward: np.ndarray
    cone_idx: np.ndarray
    cone_vecs: np.ndarray
    seg1: Segment1 = None

    @classmethod
    def build(cls, spec, q, grid, target, params):
        target = as_point3(target, "target")
        p = params.resolved(spec, target)
        for j in range(2, spec.n_segments):
            if spec.offsets[j]:
                raise InvalidParameter("offsets are supported at joints 1 and 2 only")
        f = sample_fractions(p.n_samples_per_segment)
        if p.mode == "8DOF":
            L4 = spec.lengths[3]
            back, cidx = backward_endpoints(target, L4, q, p.approach_axis, p.approach_half_angle)
            cvecs = cone_vectors(q, cidx, p.approach_axis)
        else:
            back, cidx = backward_endpoints(target, 0.0, q, None, 0.0, mode="6DOF")
            cvecs = np.zeros((1, 3))
        prep = cls(spec, q, grid, target, p, f, back, cidx, cvecs)
        prep.seg1 = _segment1(spec, q, grid, target, prep, target[None, :])
        return prep


def _chunk_search(prep, j_idx, stats):
    """Search all (segment-1 survivor, j in ``j_idx``) pairs; returns (i, j, l) rows."""
    spec, p, grid, f = prep.spec, prep.params, prep.grid, prep.f
    seg1 = prep.seg1
    I = seg1.survivors
    V = prep.q.vectors
    L2, L3 = spec.lengths[1], spec.lengths[2]
    eps = p.epsilon_gap
    eightdof = p.mode == "8DOF"

    ii = np.repeat(I, len(j_idx))
    jj = np.tile(j_idx, len(I))
    stats["seg2_generated"] += len(ii)
    s2 = L2 * V[jj]
    offset2 = spec.offsets[1]

    # remaining reach from the segment-2 end must cover the target distance (offset adds slack)
    if p.prune:
        p2_est = seg1.p1[ii] + s2
        reach = L3 + (spec.lengths[3] if eightdof else 0.0) + eps + offset2
        ok = norm3(p2_est - prep.target) <= reach
        stats["seg2_reach_pruned"] += int((~ok).sum())
        ii, jj, s2 = ii[ok], jj[ok], s2[ok]

    d2 = s2 / norm3(s2)[:, None]
    need_angles = offset2 or not _full_limits(spec, 1) or not _full_limits(spec, 2) or \
        (eightdof and not _full_limits(spec, 3)) or p.cone_precheck
    if need_angles:
        theta2, phi2, frame2, _ = frame_step(seg1.frame[ii], d2)
        ok = joint_ok(spec, 1, theta2, phi2)
        stats["seg2_limits_pruned"] += int((~ok).sum())
        ii, jj, s2, frame2 = ii[ok], jj[ok], s2[ok], frame2[ok]
        theta2 = theta2[ok]
    else:
        frame2 = theta2 = None

    p1 = seg1.p1[ii]
    if offset2:
        o2 = offset2 * azimuth_axis(seg1.frame[ii], theta2)
        start2 = p1 + o2
        ok = _clear(grid, p1, start2, f)
        stats["seg2_collision_pruned"] += int((~ok).sum())
        ii, jj, s2, start2, p1 = ii[ok], jj[ok], s2[ok], start2[ok], p1[ok]
        if frame2 is not None:
            frame2 = frame2[ok]
    else:
        start2 = p1
    p2 = start2 + s2

    if p.prune and p.cone_precheck and eightdof:
        ok = _cone_precheck(prep, p2)
        stats["seg2_cone_pruned"] += int((~ok).sum())
        ii, jj, start2, p1, p2 = ii[ok], jj[ok], start2[ok], p1[ok], p2[ok]
        if frame2 is not None:
            frame2 = frame2[ok]

    ok = _clear(grid, start2, p2, f)
    stats["seg2_collision_pruned"] += int((~ok).sum())
    ii, jj, start2, p1, p2 = ii[ok], jj[ok], start2[ok], p1[ok], p2[ok]
    if frame2 is not None:
        frame2 = frame2[ok]
    stats["seg2_survivors"] += len(ii)
    if len(ii) == 0:
        return np.zeros((0, 3), dtype=np.int64)

    # gap: every surviving pair against every backward point
    m = len(prep.backward)
    pi = np.repeat(np.arange(len(ii)), m)
    ll = np.tile(np.arange(m), len(ii))
    b = prep.backward[ll]
    v3 = b - p2[pi]
    n3 = norm3(v3)
    stats["gap_tested"] += len(pi)
    if p.prune:
        ok = n3 <= L3 + eps  # coarse test first
        stats["gap_coarse_pruned"] += int((~ok).sum())
        pi, ll, v3, n3 = pi[ok], ll[ok], v3[ok], n3[ok]
    ok = np.abs(n3 - L3) <= eps
    stats["gap_band_rejected"] += int((~ok).sum())
    pi, ll, v3, n3 = pi[ok], ll[ok], v3[ok], n3[ok]
    stats["gap_spanned"] += len(pi)

    if frame2 is not None and (not _full_limits(spec, 2) or (eightdof and not _full_limits(spec, 3))):
        d3 = v3 / n3[:, None]
        theta3, phi3, frame3, _ = frame_step(frame2[pi], d3)
        ok = joint_ok(spec, 2, theta3, phi3)
        if eightdof:
            c = prep.cone_vecs[ll]
            s4 = spec.lengths[3] * c
            theta4, phi4, _, _ = frame_step(frame3, s4 / norm3(s4)[:, None])
            ok &= joint_ok(spec, 3, theta4, phi4)
        stats["joint34_limits_pruned"] += int((~ok).sum())
        pi, ll, v3 = pi[ok], ll[ok], v3[ok]

    p2s = p2[pi]
    p3 = p2s + v3
    ok = _clear(grid, p2s, p3, f)
    stats["seg3_collision_pruned"] += int((~ok).sum())
    pi, ll, p2s, p3 = pi[ok], ll[ok], p2s[ok], p3[ok]

    if eightdof:
        p4 = p3 + spec.lengths[3] * prep.cone_vecs[ll]
        ok = _clear(grid, p3, p4, f)
        stats["seg4_collision_pruned"] += int((~ok).sum())
        pi, ll, p2s, p3, p4 = pi[ok], ll[ok], p2s[ok], p3[ok], p4[ok]

    if spec.arm_radius > 0 and len(pi):
        clr = 2.0 * spec.arm_radius
        s1a, s1b = seg1.start[ii[pi]], p1[pi]
        ok = segment_distance(s1a, s1b, p2s, p3) >= clr
        if eightdof:
            ok &= segment_distance(s1a, s1b, p3, p4) >= clr
            ok &= segment_distance(start2[pi], p2s, p3, p4) >= clr
        stats["self_collision_pruned"] += int((~ok).sum())
        pi, ll = pi[ok], ll[ok]

    return np.stack([ii[pi], jj[pi], ll], axis=1).astype(np.int64)


def _full_limits(spec, j):
    lim = spec.joint_limits[j]
    return full_azimuth(lim) and lim.elevation[0] <= 0.0 and lim.elevation[1] >= math.pi


def _cone_precheck(prep, p2):
    """Sound pair-level reject from the angle between the gap and the cone axis.

    Any admissible free vector must meet some cone member within the joint-4
    flexion limit; the cone's backward points lie within a known distance of
    the central one, which bounds the angle spread.
    """
    spec, p = prep.spec, prep.params
    axis = p.approach_axis
    L4 = spec.lengths[3]
    h = p.approach_half_angle
    b0 = prep.target - L4 * axis
    d = b0 - p2
    dn = norm3(d)
    spread = 2.0 * L4 * math.sin(0.5 * h)
    with np.errstate(divide="ignore", invalid="ignore"):
        delta = np.where(dn > spread, np.arcsin(np.clip(spread / dn, 0.0, 1.0)), math.pi)
        ang = np.arctan2(norm3(np.cross(d, axis)), dot3(d, axis))
    phi_max = spec.joint_limits[3].elevation[1]
    return ang <= phi_max + h + delta + 1e-9


def _chunks(q_len, n_first, workers):
    per = max(1, CHUNK_PAIRS // max(1, n_first))
    n_chunks = max(workers, math.ceil(q_len / per))
    bounds = np.linspace(0, q_len, n_chunks + 1).astype(int)
    return [np.arange(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


STAT_KEYS = (
    "seg1_generated", "seg1_limits_pruned", "seg1_reach_pruned", "seg1_collision_pruned", "seg1_survivors",
    "seg2_generated", "seg2_reach_pruned", "seg2_limits_pruned", "seg2_cone_pruned", "seg2_collision_pruned",
    "seg2_survivors", "gap_tested", "gap_coarse_pruned", "gap_band_rejected", "gap_spanned",
    "seg4_collision_pruned", "joint34_limits_pruned", "seg3_collision_pruned", "self_collision_pruned",
    "solutions", "shortcuts",
)


def search_indices(prep):
    """All surviving (i, j, l) triples in canonical order plus counters."""
    seg1 = prep.seg1
    N = len(prep.q)
    stats = dict.fromkeys(STAT_KEYS, 0)
    stats["seg1_generated"] = N
    lim = seg1.limits_ok
    stats["seg1_limits_pruned"] = int((~lim).sum())
    stats["seg1_reach_pruned"] = int((lim & ~seg1.reach_ok).sum())
    stats["seg1_collision_pruned"] = int((lim & seg1.reach_ok & ~seg1.clear).sum())
    stats["seg1_survivors"] = len(seg1.survivors)
    if len(seg1.survivors) == 0:
        return np.zeros((0, 3), dtype=np.int64), stats

    chunks = _chunks(N, len(seg1.survivors), prep.params.workers)
    local = [dict.fromkeys(STAT_KEYS, 0) for _ in chunks]
    if prep.params.workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=prep.params.workers) as ex:
            parts = list(ex.map(lambda a: _chunk_search(prep, a[0], a[1]), zip(chunks, local)))
    else:
        parts = [_chunk_search(prep, c, s) for c, s in zip(chunks, local)]
    for s in local:
        for k, v in s.items():
            stats[k] += v
    rows = np.concatenate(parts) if parts else np.zeros((0, 3), dtype=np.int64)
    order = np.lexsort((rows[:, 2], rows[:, 1], rows[:, 0]))
    return rows[order], stats


# -- pose construction --------------------------------------------------------------

def build_solution(prep, i, j, l):
    """Rebuild one solution pose from its indices with scalar arithmetic."""
    spec, q = prep.spec, prep.q
    s1 = spec.lengths[0] * q.vectors[i]
    s2 = spec.lengths[1] * q.vectors[j]
    p1, p2 = _proximal_joints(spec, s1, s2)
    segs = [s1, s2, prep.backward[l] - p2]
    if prep.params.mode == "8DOF":
        segs.append(spec.lengths[3] * prep.cone_vecs[l])
    pose = make_pose(spec, np.array(segs))
    cone = int(prep.cone_idx[l])
    qi = [int(i), int(j), None]
    if prep.params.mode == "8DOF":
        qi.append(None if cone < 0 else cone)
    pose.quiver_indices = tuple(qi)
    pose.waypoints = pose_waypoints(pose, prep.params.n_samples_per_segment)
    pose.meta.update(index=(int(i), int(j), int(l)), gap_error=float(norm3(segs[2]) - spec.lengths[2]))
    return pose


def _proximal_joints(spec, s1, s2):
    """p1 and p2 as the search computes them, offset links included."""
    if not (spec.offsets[0] or spec.offsets[1]):
        p1 = spec.root + s1
        return [p1, p1 + s2]
    thetas, _, _, frames = _chain_frames(spec, [s1 / norm3(s1), s2 / norm3(s2)])
    p = spec.root
    pts = []
    for k, s in enumerate((s1, s2)):
        if spec.offsets[k]:
            p = p + spec.offsets[k] * azimuth_axis(frames[k], np.float64(thetas[k]))
        p = p + s
        pts.append(p)
    return pts


class PoseList(Sequence):
    """Solutions built on first access from their index triples."""

    def __init__(self, prep, rows):
        self._prep = prep
        self._rows = rows
        self._cache = {}
        self._lengths = None

    def __len__(self):
        return len(self._rows)

    def __getitem__(self, k):
        if isinstance(k, slice):
            return [self[x] for x in range(*k.indices(len(self)))]
        k = range(len(self))[k]
        if k not in self._cache:
            self._cache[k] = build_solution(self._prep, *self._rows[k])
        return self._cache[k]

    def path_lengths(self):
        """Waypoint-path length of every solution, without building poses."""
        if self._lengths is None:
            prep, rows = self._prep, self._rows
            spec = prep.spec
            L = np.zeros(len(rows))
            if len(rows):
                V = prep.q.vectors
                s1 = spec.lengths[0] * V[rows[:, 0]]
                s2 = spec.lengths[1] * V[rows[:, 1]]
                p2 = np.array([_proximal_joints(spec, a, b)[1] for a, b in zip(s1, s2)]) \
                    if spec.offsets[0] or spec.offsets[1] else (spec.root + s1) + s2
                v3 = prep.backward[rows[:, 2]] - p2
                L = (spec.lengths[0] + spec.offsets[0]) + (spec.lengths[1] + spec.offsets[1]) + norm3(v3)
                if prep.params.mode == "8DOF":
                    L = L + norm3(spec.lengths[3] * prep.cone_vecs[rows[:, 2]])
            self._lengths = L
        return self._lengths


def pose_waypoints(pose, n):
    """n samples per segment (offset links excluded), proximal to distal."""
    f = sample_fractions(n)
    j = pose.joints
    starts = pose.elbows
    return np.concatenate([_samples(starts[k], j[k + 1], f) for k in range(pose.n_segments)])


def path_length(pose):
    """Length of the waypoint path traced through the pose's segments."""
    return float(sum(norm3(a - b) for a, b in pose.links()))


# -- short reaches ---------------------------------------------------------------------

def short_reach_scan(samples, sample_clear, targets, radius):
    """First sample within ``radius`` of any target with every sample up to it clear.

    ``samples`` (n, 3) and ``sample_clear`` (n,) describe one hypothesis.
    Returns ``(hit_index_1based, target_index)`` or None.
    """
    samples = np.asarray(samples, dtype=float)
    targets = np.asarray(targets, dtype=float).reshape(-1, 3)
    dist = norm3(samples[:, None, :] - targets[None, :, :])
    near = dist <= radius
    hit = np.nonzero(near.any(axis=1))[0]
    if len(hit) == 0:
        return None
    k = int(hit[0])
    if not np.all(sample_clear[: k + 1]):
        return None
    t = int(np.argmin(np.where(near[k], dist[k], np.inf)))
    return k + 1, t


def _complete_shortcut(prep, origin, prefix_points, samples, k, t_idx, seg_index, hyp):
    grid, f, n = prep.grid, prep.f, prep.params.n_samples_per_segment
    tgt = prep.backward[t_idx]
    sub = samples[:k]
    end = sub[-1]
    if np.array_equal(end, tgt):
        pts, bridge, direct = sub, None, False
    else:
        clear, bs = segment_clear(grid, end, tgt, n)
        if clear:
            pts, bridge, direct = np.vstack([sub, bs]), tgt - end, False
        else:
            clear, ds = segment_clear(grid, origin, tgt, n)
            if not clear:
                return None
            pts, bridge, direct, sub = ds, None, True, ds
    full = np.vstack([prefix_points, pts]) if len(prefix_points) else pts
    poly = np.vstack([prep.spec.root, full])
    length = float(norm3(np.diff(poly, axis=0)).sum())
    return ShortcutPath(seg_index, hyp, k, sub, bridge, direct, int(t_idx), full, length)


def find_shortcuts(prep):
    """Short-reach shortcuts of segment-1 and segment-2 hypotheses.

    Independent of pruning: every hypothesis within joint limits is scanned.
    """
    p = prep.params
    r = p.near_target_radius
    spec, seg1, grid, f = prep.spec, prep.seg1, prep.grid, prep.f
    targets = prep.backward
    out = []
    samples1 = _samples(seg1.start, seg1.p1, f)
    # a sample within r of a target requires the segment to pass that close
    d_line = np.min(norm3(seg1.p1[:, None, :] - targets[None]), axis=1)
    cand = np.nonzero(seg1.limits_ok & seg1.offset_clear & (d_line <= spec.lengths[0] + r))[0]
    for i in cand:
        hit = short_reach_scan(samples1[i], seg1.sample_clear[i], targets, r)
        if hit:
            sc = _complete_shortcut(prep, seg1.start[i], np.zeros((0, 3)), samples1[i], hit[0], hit[1], 1, (int(i),))
            if sc:
                out.append(sc)
    # segment 2 from every clear segment-1 hypothesis that can come close enough
    V = prep.q.vectors
    L2 = spec.lengths[1]
    reach2 = L2 + spec.offsets[1] + r
    dist1 = np.min(norm3(seg1.p1[:, None, :] - targets[None]), axis=1)
    base = np.nonzero(seg1.limits_ok & seg1.clear & (dist1 <= reach2))[0]
    for i in base:
        s2 = L2 * V
        d2 = s2 / norm3(s2)[:, None]
        theta2, phi2, _, _ = frame_step(seg1.frame[i], d2)
        lim = joint_ok(spec, 1, theta2, phi2)
        if spec.offsets[1]:
            start2 = seg1.p1[i] + spec.offsets[1] * azimuth_axis(seg1.frame[i], theta2)
            lim &= _clear(grid, np.broadcast_to(seg1.p1[i], start2.shape), start2, f)
        else:
            start2 = np.broadcast_to(seg1.p1[i], s2.shape)
        p2 = start2 + s2
        s = _samples(start2, p2, f)
        dist = np.min(norm3(s[:, :, None, :] - targets[None, None]), axis=2)
        js = np.nonzero(lim & (dist <= r).any(axis=1))[0]
        for j in js:
            sc_clear = points_clear(grid, s[j])
            hit = short_reach_scan(s[j], sc_clear, targets, r)
            if hit:
                sc = _complete_shortcut(prep, start2[j], samples1[i], s[j], hit[0], hit[1], 2, (int(i), int(j)))
                if sc:
                    out.append(sc)
    out.sort(key=lambda s: (s.segment_index,) + s.hypothesis + (s.target_index,))
    return out


# -- top level ------------------------------------------------------------------------------

def solve_reach(spec, q, grid, target, params=None, allow_empty=False):
    """Exhaustive gMS reach search; see the module docstring."""
    t0 = time.perf_counter()
    params = params or ReachParams()
    prep = _Prepared.build(spec, q, grid, target, params)
    if np.any(prep.target < grid.origin) or np.any(prep.target > grid.bounds_max):
        warnings.warn("target lies outside the obstacle grid", stacklevel=2)
    rows, stats = search_indices(prep)
    solutions = PoseList(prep, rows)
    shortcuts = find_shortcuts(prep)
    stats["solutions"] = len(solutions)
    stats["shortcuts"] = len(shortcuts)
    _attach_basis_poses(shortcuts, solutions, rows)
    stats["wall_time_s"] = time.perf_counter() - t0
    out = SolutionSet(solutions, rows, shortcuts, stats, prep.backward, prep.cone_idx, prep.params, prep.target)
    if not solutions and not shortcuts and not allow_empty:
        err = NoSolution("no reach pose satisfies the constraints")
        err.solution_set = out
        raise err
    return out


def _attach_basis_poses(shortcuts, solutions, rows):
    """Give each shortcut the first solution (canonical order) sharing its hypothesis."""
    first = {}
    for k in range(len(rows) - 1, -1, -1):
        i, j = int(rows[k, 0]), int(rows[k, 1])
        first[(i,)] = k
        first[(i, j)] = k
    for sc in shortcuts:
        k = first.get(tuple(sc.hypothesis))
        sc.basis_pose = None if k is None else solutions[k]


def select_solution(sset, policy="shortest"):
    """Shortest shortcut if any, else the shortest solution with index tie-break."""
    if policy != "shortest":
        raise InvalidParameter(f"unknown selection policy {policy!r}")
    if sset.shortcut_paths:
        return min(sset.shortcut_paths, key=lambda s: s.key)
    if not sset.solutions:
        raise NoSolution("empty solution set")
    return sset.solutions[rank_solutions(sset)[0]]


def rank_solutions(sset):
    """Solution order used by the planner's fallbacks: selection order."""
    sols = sset.solutions
    if hasattr(sols, "path_lengths"):
        L = sols.path_lengths()
    else:
        L = np.array([path_length(s) for s in sols])
    idx = sset.indices
    if len(L) == 0:
        return []
    return [int(k) for k in np.lexsort((idx[:, 2], idx[:, 1], idx[:, 0], L))]


def refine_solution(spec, pose, target, params):
    """Exact closure of a selected solution on ``target``."""
    mode = params.mode or ("8DOF" if spec.n_segments == 4 else "6DOF")
    if mode == "6DOF":
        out = exact_refine_6dof(spec, pose, target)
    else:
        out = exact_refine_8dof(spec, pose, target, variant=params.refine_variant)
    out.waypoints = pose_waypoints(out, params.n_samples_per_segment or 8)
    return out
