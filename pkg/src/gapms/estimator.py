"""scikit-learn style wrapper: fit on an obstacle point cloud, predict reach poses.

``fit`` does no learning; it voxelizes and dilates the cloud once so that
many targets can then be solved against the same grid. ``predict`` returns
the joint loci of the selected (and refined) reach pose for every target,
NaN where no pose exists.
"""

import math

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .arm import ArmSpec
from .errors import NoSolution
from .planner import PathParams, plan_from_reach
from .quiver import quiver_from_degrees
from .reach import ReachParams, ShortcutPath, refine_solution, select_solution, solve_reach
from .voxgrid import SceneObstacle, build_grid, dilate, mark_obstacles


class GapMSReach(BaseEstimator):
    def __init__(self, lengths=(1.0, 1.0, 1.0), root=(0.0, 0.0, 0.0), arm_radius=0.03, quiver_deg=5.0,
                 voxel_size=0.025, dilation_radius=None, bounds=None, epsilon_gap=None, n_samples_per_segment=8,
                 approach_axis=None, approach_half_angle_deg=0.0, workers=1):
        self.lengths = lengths
        self.root = root
        self.arm_radius = arm_radius
        self.quiver_deg = quiver_deg
        self.voxel_size = voxel_size
        self.dilation_radius = dilation_radius
        self.bounds = bounds
        self.epsilon_gap = epsilon_gap
        self.n_samples_per_segment = n_samples_per_segment
        self.approach_axis = approach_axis
        self.approach_half_angle_deg = approach_half_angle_deg
        self.workers = workers

    def _reach_params(self):
        axis = None if self.approach_axis is None else np.asarray(self.approach_axis, float)
        return ReachParams(epsilon_gap=self.epsilon_gap, n_samples_per_segment=self.n_samples_per_segment,
                           approach_axis=axis, approach_half_angle=math.radians(self.approach_half_angle_deg),
                           workers=self.workers)

    def fit(self, X, y=None):
        """Voxelize the obstacle cloud ``X`` (n_points, 3); an empty cloud means free space."""
        X = np.asarray(X, dtype=float).reshape(-1, 3)
        if len(X):
            X = check_array(X)
        self.spec_ = ArmSpec(tuple(self.lengths), root=np.asarray(self.root, float), arm_radius=self.arm_radius)
        self.quiver_ = quiver_from_degrees(self.quiver_deg)
        if self.bounds is None:
            reach = self.spec_.total_length
            lo = self.spec_.root - reach
            hi = self.spec_.root + reach
            if len(X):
                lo, hi = np.minimum(lo, X.min(axis=0)), np.maximum(hi, X.max(axis=0))
        else:
            lo, hi = (np.asarray(b, float) for b in self.bounds)
        grid = build_grid(lo, hi, self.voxel_size)
        if len(X):
            grid = mark_obstacles(grid, [SceneObstacle("cloud", points=X)])
        if self.dilation_radius is None:
            # thicker than the collision sample spacing, so sparse samples cannot skip a voxel
            radius = self.arm_radius + 1.25 * max(self.lengths) / self.n_samples_per_segment
        else:
            radius = self.dilation_radius
        self.grid_ = dilate(grid, radius)
        self.n_obstacle_points_ = len(X)
        return self

    def solve(self, target):
        """(SolutionSet, chosen pose or shortcut) for one target; raises NoSolution."""
        check_is_fitted(self, "grid_")
        target = np.asarray(target, float)
        sset = solve_reach(self.spec_, self.quiver_, self.grid_, target, self._reach_params())
        chosen = select_solution(sset)
        if not isinstance(chosen, ShortcutPath):
            chosen = refine_solution(self.spec_, chosen, target, sset.params)
        return sset, chosen

    def predict(self, X):
        """Joint loci (n_targets, n_segments + 1, 3) of the chosen reach pose; NaN when unreachable.

        Shortcut selections have no full pose; their basis pose is reported.
        """
        check_is_fitted(self, "grid_")
        X = check_array(np.asarray(X, dtype=float).reshape(-1, 3))
        n = self.spec_.n_segments
        out = np.full((len(X), n + 1, 3), np.nan)
        for k, t in enumerate(X):
            try:
                _, chosen = self.solve(t)
            except NoSolution:
                continue
            pose = chosen.basis_pose if isinstance(chosen, ShortcutPath) else chosen
            if pose is not None:
                out[k] = pose.joints
        return out

    def score(self, X, y=None):
        """Fraction of targets with a reach pose."""
        joints = self.predict(X)
        return float(np.mean(~np.isnan(joints[:, 0, 0]))) if len(joints) else 0.0

    def plan(self, target, path_params=None):
        """Full path plan from the folded pose to ``target``."""
        sset, chosen = self.solve(target)
        return plan_from_reach(self.spec_, self.quiver_, self.grid_, chosen, path_params or PathParams(), sset,
                               np.asarray(target, float), self._reach_params())
