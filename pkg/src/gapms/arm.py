"""Arm description, global-frame pose chains and joint-angle conversion.

A pose is a chain of segment vectors in the global frame. Joint ``j`` carries
two angles: the flexion ``phi_j`` (angle between the proximal direction and
segment ``j``, in [0, pi]) and the azimuth ``theta_j`` (rotation of segment
``j`` about the proximal axis, in (-pi, pi]). The proximal direction for joint
1 is ``ArmSpec.base_axis``. Each joint owns a frame whose z axis is the
segment direction; frame ``j`` is frame ``j-1`` rotated by ``Rz(theta_j)``
then ``Ry(phi_j)``, which is how the azimuth reference propagates up the
chain.

Offset joints: after the azimuth rotation the flexion axis is displaced by
``offsets[j]`` along the rotated x axis, so segment ``j`` starts at an elbow
point ``p_{j-1} + offsets[j] * x'`` instead of at ``p_{j-1}``.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from ._utils import any_perpendicular, as_point3, cross3, dot3, norm3, normalized, segment_distance, wrap_angle
from .errors import DegenerateInput, InvalidParameter, UnreachableTarget

LIMIT_SLACK = 1e-9
DEGENERATE_TOL = 1e-12


@dataclass(frozen=True)
class JointLimit:
    elevation: tuple = (0.0, math.pi)
    azimuth: tuple = (-math.pi, math.pi)

    def __post_init__(self):
        lo, hi = self.elevation
        if not (0.0 <= lo <= hi <= math.pi):
            raise InvalidParameter(f"elevation range {self.elevation} must lie within [0, pi]")
        lo, hi = self.azimuth
        if not (-math.pi <= lo <= hi <= math.pi):
            raise InvalidParameter(f"azimuth range {self.azimuth} must lie within [-pi, pi]")


@dataclass(frozen=True, eq=False)
class ArmSpec:
    lengths: tuple
    root: np.ndarray = field(default_factory=lambda: np.zeros(3))
    joint_limits: tuple = None
    arm_radius: float = 0.0
    offsets: tuple = None
    fold_plane_normal: np.ndarray = field(default_factory=lambda: np.array([0.0, 1.0, 0.0]))
    base_axis: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))
    base_reference: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0]))
    fold_flexion: float = math.radians(170.0)

    def __post_init__(self):
        lengths = tuple(float(x) for x in self.lengths)
        if len(lengths) < 2 or any(not x > 0 for x in lengths):
            raise InvalidParameter("an arm needs at least two segments of positive length")
        n = len(lengths)
        limits = self.joint_limits
        if limits is None:
            limits = tuple(JointLimit() for _ in range(n))
        limits = tuple(l if isinstance(l, JointLimit) else JointLimit(*l) for l in limits)
        if len(limits) != n:
            raise InvalidParameter(f"expected {n} joint limits, got {len(limits)}")
        offsets = tuple(float(x) for x in (self.offsets or (0.0,) * n))
        if len(offsets) != n or any(o < 0 for o in offsets):
            raise InvalidParameter(f"expected {n} non-negative offsets")
        if self.arm_radius < 0:
            raise InvalidParameter("arm_radius must be non-negative")
        base_axis = normalized(self.base_axis, "base_axis")
        ref = as_point3(self.base_reference, "base_reference")
        ref = ref - dot3(ref, base_axis) * base_axis
        if norm3(ref) < 1e-9:
            raise InvalidParameter("base_reference must not be parallel to base_axis")
        object.__setattr__(self, "lengths", lengths)
        object.__setattr__(self, "joint_limits", limits)
        object.__setattr__(self, "offsets", offsets)
        object.__setattr__(self, "root", as_point3(self.root, "root").copy())
        object.__setattr__(self, "base_axis", base_axis)
        object.__setattr__(self, "base_reference", ref / norm3(ref))
        object.__setattr__(self, "fold_plane_normal", normalized(self.fold_plane_normal, "fold_plane_normal"))

    @property
    def n_segments(self):
        return len(self.lengths)

    @property
    def total_length(self):
        return sum(self.lengths) + sum(self.offsets)

    @property
    def base_frame(self):
        z = self.base_axis
        x = self.base_reference
        return np.stack([x, cross3(z, x), z])

    def with_root(self, root):
        return replace(self, root=as_point3(root, "root"))


@dataclass(eq=False)
class PoseChain:
    """Segment vectors in the global frame plus the offset link of each joint."""

    segments: np.ndarray  # (n, 3)
    root: np.ndarray
    offsets: np.ndarray = None  # (n, 3); zeros for coaxial joints
    waypoints: np.ndarray = None
    quiver_indices: tuple = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.segments = np.asarray(self.segments, dtype=float).reshape(-1, 3)
        self.root = np.asarray(self.root, dtype=float)
        if self.offsets is None:
            self.offsets = np.zeros_like(self.segments)
        else:
            self.offsets = np.asarray(self.offsets, dtype=float).reshape(-1, 3)

    @property
    def n_segments(self):
        return len(self.segments)

    @property
    def joints(self):
        """p_0 .. p_n: root followed by the distal end of every segment."""
        pts = [self.root]
        p = self.root
        for o, s in zip(self.offsets, self.segments):
            p = (p + o) + s if o.any() else p + s
            pts.append(p)
        return np.array(pts)

    @property
    def elbows(self):
        """Proximal end of every segment (differs from p_{k-1} only at offset joints)."""
        j = self.joints
        return np.array([j[k] + o if o.any() else j[k] for k, o in enumerate(self.offsets)])

    def links(self):
        """(start, end) pairs for every physical link, offset links included."""
        j = self.joints
        out = []
        for k, o in enumerate(self.offsets):
            start = j[k]
            if o.any():
                out.append((start, start + o))
                start = start + o
            out.append((start, j[k + 1]))
        return out

    def point(self, k):
        return self.joints[k]

    def copy(self, **changes):
        base = dict(segments=self.segments.copy(), root=self.root.copy(), offsets=self.offsets.copy(),
                    waypoints=None if self.waypoints is None else self.waypoints.copy(),
                    quiver_indices=self.quiver_indices, meta=dict(self.meta))
        base.update(changes)
        return PoseChain(**base)


@dataclass(eq=False)
class JointAngles:
    q: np.ndarray  # (theta_1, phi_1, ..., theta_n, phi_n)
    degenerate: tuple = ()

    @property
    def theta(self):
        return self.q[0::2]

    @property
    def phi(self):
        return self.q[1::2]


# -- frames -----------------------------------------------------------------

def frame_step(frame, direction):
    """Angles of ``direction`` in ``frame`` and the frame of the next joint.

    Batched over leading dimensions. ``frame`` rows are the x, y, z axes.
    Returns ``(theta, phi, next_frame, degenerate)``.
    """
    x, y, z = frame[..., 0, :], frame[..., 1, :], frame[..., 2, :]
    lx, ly, lz = dot3(x, direction), dot3(y, direction), dot3(z, direction)
    r = np.sqrt(lx * lx + ly * ly)
    phi = np.arctan2(r, lz)
    degenerate = r <= DEGENERATE_TOL * np.maximum(np.abs(lz), 1e-300)
    theta = np.where(degenerate, 0.0, np.arctan2(ly, lx))
    return theta, phi, rotate_frame(frame, theta, phi), degenerate


def rotate_frame(frame, theta, phi):
    """``frame @ Rz(theta) @ Ry(phi)`` expressed as new row axes."""
    x, y, z = frame[..., 0, :], frame[..., 1, :], frame[..., 2, :]
    ct, st = np.cos(theta)[..., None], np.sin(theta)[..., None]
    cp, sp = np.cos(phi)[..., None], np.sin(phi)[..., None]
    nx = ct * cp * x + st * cp * y - sp * z
    ny = -st * x + ct * y
    nz = ct * sp * x + st * sp * y + cp * z
    return np.stack([nx, ny, nz], axis=-2)


def azimuth_axis(frame, theta):
    """Frame x axis after the azimuth rotation: direction of an offset link."""
    ct, st = np.cos(theta)[..., None], np.sin(theta)[..., None]
    return ct * frame[..., 0, :] + st * frame[..., 1, :]


# -- conversions ------------------------------------------------------------

def forward_points(spec, segments):
    """Joint loci p_0..p_n for a coaxial reading of ``segments``."""
    segs = np.asarray(segments, dtype=float)
    if segs.shape != (spec.n_segments, 3):
        raise InvalidParameter(f"expected {spec.n_segments} segment vectors")
    return PoseChain(segs, spec.root).joints


def _chain_frames(spec, directions):
    frame = spec.base_frame
    thetas, phis, degen, frames = [], [], [], [frame]
    for d in directions:
        t, p, frame, dg = frame_step(frame, d)
        thetas.append(float(t))
        phis.append(float(p))
        degen.append(bool(dg))
        frames.append(frame)
    return thetas, phis, degen, frames


def make_pose(spec, segments, **kw):
    """Pose from global segment vectors, filling offset links from the frames."""
    segs = np.asarray(segments, dtype=float).reshape(-1, 3)
    if len(segs) != spec.n_segments:
        raise InvalidParameter(f"expected {spec.n_segments} segments, got {len(segs)}")
    offsets = np.zeros_like(segs)
    if any(spec.offsets):
        lens = norm3(segs)
        if np.any(lens == 0):
            raise DegenerateInput("zero-length segment")
        thetas, _, _, frames = _chain_frames(spec, segs / lens[:, None])
        for j, off in enumerate(spec.offsets):
            if off:
                offsets[j] = off * azimuth_axis(frames[j], np.float64(thetas[j]))
    return PoseChain(segs, spec.root.copy(), offsets, **kw)


def vectors_to_joint_angles(spec, pose):
    lens = norm3(pose.segments)
    if np.any(lens == 0):
        raise DegenerateInput("zero-length segment has no direction")
    thetas, phis, degen, _ = _chain_frames(spec, pose.segments / lens[:, None])
    q = np.empty(2 * len(thetas))
    q[0::2] = thetas
    q[1::2] = phis
    return JointAngles(q, tuple(degen))


def angles_near(spec, pose, q_ref):
    """Joint angles of ``pose`` in the representation closest to ``q_ref``.

    A coaxial joint's direction reads the same as (theta, phi) or
    (theta + pi, -phi); picking the nearer reading keeps azimuth from flipping
    by pi when a joint passes through straight. Later joints are measured in
    the frame the chosen reading produces.
    """
    q_ref = np.asarray(getattr(q_ref, "q", q_ref), dtype=float)
    frame = spec.base_frame
    out = np.empty(2 * spec.n_segments)
    dirs = pose.segments / norm3(pose.segments)[:, None]
    for j, d in enumerate(dirs):
        th, ph, _, degen = frame_step(frame, d)
        th, ph = float(th), float(ph)
        tr, pr = q_ref[2 * j], q_ref[2 * j + 1]
        if degen:
            th = tr
        options = [(th, ph)]
        if not spec.offsets[j]:
            options.append((th + math.pi, -ph))
        th, ph = min(options, key=lambda o: abs(wrap_angle(o[0] - tr)) + abs(o[1] - pr))
        th = tr + wrap_angle(th - tr)
        out[2 * j], out[2 * j + 1] = th, ph
        frame = rotate_frame(frame, np.float64(th), np.float64(ph))
    return out


def joint_angles_to_vectors(spec, q, check_limits=False):
    q = np.asarray(getattr(q, "q", q), dtype=float)
    n = spec.n_segments
    if q.shape != (2 * n,):
        raise InvalidParameter(f"expected {2 * n} joint angles")
    if check_limits and not angles_within_limits(spec, q):
        raise InvalidParameter("joint angles violate the arm's limits")
    frame = spec.base_frame
    segs, offs = [], []
    for j in range(n):
        theta, phi = q[2 * j], q[2 * j + 1]
        off = spec.offsets[j]
        offs.append(off * azimuth_axis(frame, np.float64(theta)) if off else np.zeros(3))
        frame = rotate_frame(frame, np.float64(theta), np.float64(phi))
        segs.append(spec.lengths[j] * frame[2])
    return PoseChain(np.array(segs), spec.root.copy(), np.array(offs))


def angles_within_limits(spec, q):
    q = np.asarray(getattr(q, "q", q), dtype=float)
    for j, lim in enumerate(spec.joint_limits):
        if not within(q[2 * j + 1], lim.elevation) or not within(q[2 * j], lim.azimuth):
            return False
    return True


def within(value, rng):
    return (value >= rng[0] - LIMIT_SLACK) & (value <= rng[1] + LIMIT_SLACK)


def joint_ok(spec, j, theta, phi):
    """Vectorised limit test for joint ``j`` (0-based)."""
    lim = spec.joint_limits[j]
    return within(phi, lim.elevation) & within(theta, lim.azimuth)


def joint_limits_ok(spec, pose):
    return bool(angles_within_limits(spec, vectors_to_joint_angles(spec, pose)))


def full_azimuth(lim):
    return lim.azimuth[0] <= -math.pi + 1e-12 and lim.azimuth[1] >= math.pi - 1e-12


# -- self collision -----------------------------------------------------------

def self_collision_free(spec, pose, clearance=None):
    """True iff every pair of non-adjacent segments stays ``2 * arm_radius`` apart.

    Offset links are not tested against each other; they are covered by the
    obstacle grid instead.
    """
    clearance = 2.0 * spec.arm_radius if clearance is None else clearance
    if clearance <= 0:
        return True
    j = pose.joints
    starts = pose.elbows
    n = pose.n_segments
    for a in range(n):
        for b in range(a + 2, n):
            if segment_distance(starts[a], j[a + 1], starts[b], j[b + 1]) < clearance:
                return False
    return True


# -- exact refinement ---------------------------------------------------------

def triangle_apex(a, t, la, lb, hint, normal):
    """Apex p with |p - a| = la, |t - p| = lb, lying in the plane through ``a``
    with ``normal`` when possible (nearest of the two such points to ``hint``),
    otherwise in the plane through a, t and ``hint``.

    Batched over leading dimensions. Returns ``(apex, ok, in_plane)``.
    """
    a, t, hint, normal = (np.asarray(v, dtype=float) for v in (a, t, hint, normal))
    la = np.asarray(la, dtype=float)
    lb = np.asarray(lb, dtype=float)
    dv = t - a
    d = norm3(dv)
    tol = 1e-12 * np.maximum(la + lb, 1.0)
    ok = (d <= la + lb + tol) & (d >= np.abs(la - lb) - tol) & (d > 0)
    dsafe = np.where(d > 0, d, 1.0)
    u = dv / dsafe[..., None]
    x = (d * d + la * la - lb * lb) / (2 * dsafe)
    h = np.sqrt(np.maximum(la * la - x * x, 0.0))
    c = a + x[..., None] * u

    nlen = norm3(normal)
    n = normal / np.where(nlen > 0, nlen, 1.0)[..., None]
    nu = dot3(n, u)
    nperp = n - nu[..., None] * u
    nplen = norm3(nperp)
    good_plane = (nlen > 1e-12) & (nplen > 1e-9)
    e1 = nperp / np.where(nplen > 0, nplen, 1.0)[..., None]
    e2 = cross3(u, e1)
    with np.errstate(divide="ignore", invalid="ignore"):
        cos_a = -x * nu / (h * nplen)
    good_plane &= (h > 0) & (np.abs(cos_a) <= 1 + 1e-9)
    cos_a = np.clip(np.where(good_plane, cos_a, 0.0), -1.0, 1.0)
    sin_a = np.sqrt(1 - cos_a * cos_a)
    w1 = cos_a[..., None] * e1 + sin_a[..., None] * e2
    w2 = cos_a[..., None] * e1 - sin_a[..., None] * e2
    cand1 = c + h[..., None] * w1
    cand2 = c + h[..., None] * w2
    pick1 = norm3(cand1 - hint) <= norm3(cand2 - hint)
    plane_apex = np.where(pick1[..., None], cand1, cand2)

    # fallback plane through a, t, hint
    g = hint - c
    g = g - dot3(g, u)[..., None] * u
    glen = norm3(g)
    if np.ndim(glen) == 0:
        w = g / glen if glen > 1e-12 else any_perpendicular(u)
    else:
        w = np.where((glen > 1e-12)[..., None], g / np.where(glen > 0, glen, 1.0)[..., None], 0.0)
        bad = glen <= 1e-12
        if bad.any():
            w[bad] = np.array([any_perpendicular(v) for v in u[bad]])
    fallback_apex = c + h[..., None] * w
    apex = np.where((good_plane | (h == 0))[..., None], plane_apex, fallback_apex)
    return apex, ok, good_plane | (h == 0)


def exact_refine_6dof(spec, approx, target):
    """Exact 3-segment pose: keep segment 1, solve the 2/3 triangle to ``target``."""
    if approx.n_segments != 3:
        raise InvalidParameter("6DOF refinement needs a 3-segment pose")
    if spec.offsets[2]:
        raise InvalidParameter("6DOF refinement assumes a coaxial joint 3")
    target = as_point3(target, "target")
    joints = approx.joints
    vertex = joints[1] + approx.offsets[1]
    l2, l3 = spec.lengths[1], spec.lengths[2]
    normal = cross3(approx.segments[1], approx.segments[2])
    apex, ok, in_plane = triangle_apex(vertex, target, l2, l3, joints[2], normal)
    if not ok:
        raise UnreachableTarget(f"|p1 - target| = {norm3(target - vertex):.6g} outside [{abs(l2 - l3)}, {l2 + l3}]")
    segs = approx.segments.copy()
    segs[1] = apex - vertex
    segs[2] = target - apex
    offsets = approx.offsets
    if spec.offsets[1]:
        # the joint-2 offset link turns with segment 2's azimuth: iterate to a fixed point
        for _ in range(100):
            pose = make_pose(spec, segs)
            new_vertex = pose.joints[1] + pose.offsets[1]
            moved = norm3(new_vertex - vertex)
            vertex = new_vertex
            apex, ok, in_plane = triangle_apex(vertex, target, l2, l3, apex, normal)
            if not ok:
                raise UnreachableTarget("offset elbow leaves the target out of reach")
            segs[1] = apex - vertex
            segs[2] = target - apex
            if moved <= 1e-15 * spec.total_length:
                break
        offsets = make_pose(spec, segs).offsets
    meta = dict(approx.meta, refined="triangle", in_approx_plane=bool(in_plane))
    return approx.copy(segments=segs, offsets=offsets, meta=meta)


def exact_refine_8dof(spec, approx, target, variant="rescale"):
    """Exact closure for a 4-segment pose; segments 1 and 2 stay discretized.

    ``variant="rescale"`` rescales the free vector to exact length and lets the
    last segment absorb the remainder (its length may deviate from L4 by up
    to the gap tolerance, recorded in ``meta['s4_length_error']``).
    ``variant="triangle"`` solves the 3/4 triangle so both lengths are exact.
    """
    if approx.n_segments != 4:
        raise InvalidParameter("8DOF refinement needs a 4-segment pose")
    if spec.offsets[2] or spec.offsets[3]:
        raise InvalidParameter("8DOF refinement assumes coaxial joints 3 and 4")
    target = as_point3(target, "target")
    joints = approx.joints
    p2 = joints[2]
    v3 = approx.segments[2]
    n3 = norm3(v3)
    if n3 < 1e-9:
        raise DegenerateInput("free vector has (near) zero length")
    l3, l4 = spec.lengths[2], spec.lengths[3]
    segs = approx.segments.copy()
    if variant == "rescale":
        d3 = target - p2
        s3 = v3 * l3 / n3
        segs[2] = s3
        segs[3] = d3 - s3
    elif variant == "triangle":
        normal = cross3(v3, approx.segments[3])
        apex, ok, _ = triangle_apex(p2, target, l3, l4, joints[3], normal)
        if not ok:
            raise UnreachableTarget("segments 3 and 4 cannot close on the target")
        segs[2] = apex - p2
        segs[3] = target - apex
    else:
        raise InvalidParameter(f"unknown refinement variant {variant!r}")
    meta = dict(approx.meta, refined=f"8dof-{variant}", s4_length_error=float(norm3(segs[3]) - l4))
    return approx.copy(segments=segs, meta=meta)


# -- standard poses -------------------------------------------------------------

def rotate_about(v, axis, angle):
    axis = axis / norm3(axis)
    c, s = math.cos(angle), math.sin(angle)
    return v * c + cross3(axis, v) * s + axis * dot3(axis, v) * (1 - c)


def folded_pose(spec):
    """Zig-zag start pose in the plane normal to ``fold_plane_normal``."""
    n = spec.fold_plane_normal
    up = spec.base_axis - dot3(spec.base_axis, n) * n
    up = up / norm3(up) if norm3(up) > 1e-9 else any_perpendicular(n)
    dirs = [up]
    for k in range(1, spec.n_segments):
        sign = 1.0 if k % 2 else -1.0
        dirs.append(rotate_about(dirs[-1], n, sign * spec.fold_flexion))
    segs = np.array([L * d for L, d in zip(spec.lengths, dirs)])
    return make_pose(spec, segs, meta={"kind": "folded"})
