"""Joint angular velocities between waypoints and a fixed-rate execution simulator.

Rates are recomputed every tick from the actual configuration toward the
active waypoint's pose, so the arm is always steered by its real position
rather than by the previous command.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from ._utils import norm3, wrap_angle
from .arm import angles_near, joint_angles_to_vectors, joint_limits_ok, self_collision_free
from .errors import ExecutionCollision, ExecutionTimeout, InvalidParameter
from .planner import pose_clear


@dataclass(frozen=True)
class MotionParams:
    v_w: float = 0.5  # m/s, desired mean end-effector speed
    sample_rate: float = 100.0  # Hz
    max_joint_rate: float = math.radians(30.0)  # rad/s
    arrival_tolerance: float = 0.01  # m
    control_objective: str = "time-of-arrival"
    max_ticks: int = 200_000

    def __post_init__(self):
        for name in ("v_w", "sample_rate", "max_joint_rate", "arrival_tolerance", "max_ticks"):
            if not getattr(self, name) > 0:
                raise InvalidParameter(f"{name} must be positive")
        if self.control_objective not in ("time-of-arrival", "velocity-on-arrival"):
            raise InvalidParameter(f"unknown control objective {self.control_objective!r}")


def waypoint_interval(p_w, p_e, v_w):
    """Time to cover the end effector's distance to the waypoint at speed ``v_w``."""
    if not v_w > 0:
        raise InvalidParameter("v_w must be positive")
    return float(norm3(np.asarray(p_w, dtype=float) - np.asarray(p_e, dtype=float))) / v_w


@dataclass
class JointRates:
    rates: np.ndarray  # (2n,) interleaved azimuth/flexion rates, rad/s
    delta: np.ndarray  # wrapped angle deltas the rates were derived from
    clamped: np.ndarray  # bool per component


def angle_delta(q_w, q_c):
    """q_w - q_c with azimuth components wrapped to (-pi, pi]."""
    q_w = np.asarray(getattr(q_w, "q", q_w), dtype=float)
    q_c = np.asarray(getattr(q_c, "q", q_c), dtype=float)
    d = q_w - q_c
    d[0::2] = wrap_angle(d[0::2])
    return d


def joint_velocities(q_w, q_c, t_w, max_joint_rate=None):
    """Per-joint rates (q_w - q_c) / t_w, limited to +-max_joint_rate.

    When a component exceeds the limit the whole vector is scaled down, so
    the joints still move together along the straight joint-space line.
    ``clamped`` flags the components that were over the limit.
    """
    if not t_w > 0:
        raise InvalidParameter("t_w must be positive")
    d = angle_delta(q_w, q_c)
    rates = d / t_w
    clamped = np.zeros(len(d), dtype=bool)
    if max_joint_rate is not None:
        clamped = np.abs(rates) > max_joint_rate
        if clamped.any():
            rates = rates * (max_joint_rate / np.max(np.abs(rates)))
    return JointRates(rates, d, clamped)


@dataclass
class ExecutionTrace:
    times: np.ndarray
    q: np.ndarray  # (T, 2n)
    tracked: np.ndarray  # (T, 3) segment-3 distal end
    active: np.ndarray  # (T,) index into the plan's pose sequence
    rates: np.ndarray  # (T, 2n) commanded rates at each tick
    overshoot_events: list = field(default_factory=list)
    clamp_events: list = field(default_factory=list)
    arrivals: dict = field(default_factory=dict)  # pose index -> arrival time
    self_contact_events: list = field(default_factory=list)  # ticks closer than the self-collision clearance
    waypoint_offset: int = 0  # sequence index of the plan's first waypoint pose

    @property
    def ticks(self):
        return [
            {"time": float(t), "q": q.tolist(), "tracked_point": p.tolist(), "active_waypoint_index": int(a),
             "commanded_rates": r.tolist()}
            for t, q, p, a, r in zip(self.times, self.q, self.tracked, self.active, self.rates)
        ]

    @property
    def duration(self):
        return float(self.times[-1]) if len(self.times) else 0.0

    def waypoint_times(self):
        """Time spent on each plan waypoint (arrival minus previous arrival)."""
        idx = sorted(k for k in self.arrivals if k >= self.waypoint_offset)
        t = [self.arrivals[k] for k in idx]
        return np.diff(t) if len(t) > 1 else np.zeros(0)


def simulate_execution(spec, plan, params=None, grid=None, n_samples=8):
    """Fixed-rate rate-control replay of ``plan.sequence()``.

    Each tick: forward kinematics, waypoint advance (arrival within tolerance,
    or passing the waypoint, which is logged as an overshoot), fresh rates
    toward the active pose, integration by one period. With ``grid`` given,
    every ticked configuration is checked against the grid and the joint
    limits. Self-contact between validated poses is logged, not raised.
    """
    params = params or MotionParams()
    seq = plan.sequence()
    dt = 1.0 / params.sample_rate
    tol = params.arrival_tolerance
    q = angles_near(spec, seq[0], np.zeros(2 * spec.n_segments))
    start_q = [q.copy()]
    for pose in seq[1:]:
        start_q.append(angles_near(spec, pose, start_q[-1]))
    # arrival is judged on what the angles realize; a rescaled closing segment is not reproducible
    targets = [joint_angles_to_vectors(spec, x).joints for x in start_q]
    times, qs, tracked, active, rates_log = [], [], [], [], []
    overshoots, clamps, contacts = [], [], []
    arrivals = {0: 0.0}
    a = 1
    seg_from = start_q[0]
    t = 0.0
    for tick in range(params.max_ticks):
        pose = joint_angles_to_vectors(spec, q)
        joints = pose.joints
        if grid is not None and not (pose_clear(grid, pose, n_samples) and joint_limits_ok(spec, pose)):
            raise ExecutionCollision(f"configuration at t={t:.3f}s collides or violates limits")
        if not self_collision_free(spec, pose):
            contacts.append(tick)
        # advance past every waypoint already reached or passed
        while a < len(seq):
            goal = start_q[a]
            near = np.all(norm3(joints[1:] - targets[a][1:]) <= tol)
            span = angle_delta(goal, seg_from)
            denom = float(span @ span)
            progress = float(angle_delta(q, seg_from) @ span) / denom if denom > 0 else 1.0
            if near or progress >= 1.0:
                if not near:
                    overshoots.append(tick)
                arrivals[a] = t
                seg_from = goal
                a += 1
            else:
                break
        done = a >= len(seq)
        if done:
            r = JointRates(np.zeros_like(q), np.zeros_like(q), np.zeros(len(q), dtype=bool))
        else:
            goal = angles_near(spec, seq[a], q)
            dist = norm3(targets[a][3] - joints[3])
            if params.control_objective == "time-of-arrival":
                t_w = max(waypoint_interval(targets[a][3], joints[3], params.v_w), dt)
            else:
                # hold v_w through arrival: time to the waypoint plus one period of carry-over
                t_w = max(dist / params.v_w, dt) + dt
            r = joint_velocities(goal, q, t_w, params.max_joint_rate)
            if r.clamped.any():
                clamps.append(tick)
        times.append(t)
        qs.append(q.copy())
        tracked.append(joints[3])
        active.append(min(a, len(seq) - 1))
        rates_log.append(r.rates)
        if done:
            break
        q = q + r.rates * dt
        t = (tick + 1) * dt
    else:
        raise ExecutionTimeout(f"plan not completed within {params.max_ticks} ticks")
    return ExecutionTrace(np.array(times), np.array(qs), np.array(tracked), np.array(active), np.array(rates_log),
                          overshoots, clamps, arrivals,
                          waypoint_offset=max(0, len(plan.unfold_prefix) - 1), self_contact_events=contacts)
