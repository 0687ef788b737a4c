"""Gap map-seeking inverse kinematics and path planning for arms amid voxel obstacles."""

from .arm import ArmSpec, JointLimit, PoseChain, folded_pose, joint_angles_to_vectors, vectors_to_joint_angles
from .errors import (ExecutionCollision, GapMSError, InfeasibleTiming, InvalidParameter, NoPath, NoSolution,
                     ParseError)
from .estimator import GapMSReach
from .motion import MotionParams, joint_velocities, simulate_execution, waypoint_interval
from .planner import (PathParams, PathPlan, ReplanTiming, plan_arbitrary, plan_from_reach, plan_reach_path,
                      replan_dynamic, waypoint_ik)
from .quiver import Quiver, generate_quiver, quiver_from_degrees
from .reach import ReachParams, SolutionSet, select_solution, solve_reach
from .voxgrid import SceneObstacle, VoxelGrid, build_grid, dilate, mark_obstacles

__version__ = "0.1.0"

__all__ = [
    "ArmSpec", "JointLimit", "PoseChain", "folded_pose", "joint_angles_to_vectors", "vectors_to_joint_angles",
    "ExecutionCollision", "GapMSError", "InfeasibleTiming", "InvalidParameter", "NoPath", "NoSolution", "ParseError",
    "GapMSReach", "MotionParams", "joint_velocities", "simulate_execution", "waypoint_interval",
    "PathParams", "PathPlan", "ReplanTiming", "plan_arbitrary", "plan_from_reach", "plan_reach_path",
    "replan_dynamic", "waypoint_ik", "Quiver", "generate_quiver", "quiver_from_degrees",
    "ReachParams", "SolutionSet", "select_solution", "solve_reach",
    "SceneObstacle", "VoxelGrid", "build_grid", "dilate", "mark_obstacles", "__version__",
]
