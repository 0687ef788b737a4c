"""Command line front end.

Angles on the command line and in files are degrees. Exit codes:

  0 ok, 1 other failure, 2 usage / bad arguments, 3 no reach solution,
  4 no collision-free path, 5 infeasible replan timing, 6 parse error,
  7 validation failure.

Errors are reported on stderr as one JSON object.
"""

import argparse
import json
import math
import os
import sys
import time

import numpy as np

from . import io
from .errors import InfeasibleTiming, InvalidParameter, NoPath, NoSolution, ParseError
from .motion import MotionParams, simulate_execution
from .oracle import enumerate_solutions
from .planner import (PathParams, ReplanTiming, plan_arbitrary, plan_from_reach, plan_reach_path,
                      replan_dynamic)
from .quiver import quiver_from_degrees
from .reach import ShortcutPath, _Prepared, refine_solution, search_indices, select_solution, solve_reach
from .validate import validate_plan, validate_trace

EXIT_OK, EXIT_OTHER, EXIT_USAGE = 0, 1, 2
EXIT_NO_SOLUTION, EXIT_NO_PATH, EXIT_TIMING, EXIT_PARSE, EXIT_INVALID = 3, 4, 5, 6, 7

# per-waypoint solve time assumed by `replan` unless --measure-time is given
DEFAULT_REPLAN_PER_WAYPOINT = 0.0082


class UsageError(Exception):
    pass


def _read(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None


def _write(path, text):
    if path in (None, "-"):
        sys.stdout.write(text)
        return
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _load_scene_arm(args):
    scene = io.parse_scene(_read(args.scene))
    spec = io.parse_arm(_read(args.arm), root=scene.root)
    reach = spec.total_length
    if np.any(spec.root - reach < scene.bounds_min) or np.any(spec.root + reach > scene.bounds_max):
        # cells outside the grid count as free, so obstacles there are invisible
        _warn("the arm can reach beyond the grid bounds; space outside the grid is treated as free")
    return scene, spec


def _warn(message):
    sys.stderr.write(json.dumps({"warning": message}) + "\n")


def _mode(spec, mode):
    if mode is None:
        return None
    mode = mode.upper()
    need = 4 if mode == "8DOF" else 3
    if spec.n_segments != need:
        raise UsageError(f"--mode {mode.lower()} needs a {need}-segment arm, got {spec.n_segments}")
    return mode


def _reach_params(args, scene, spec, n=None):
    kw = dict(mode=_mode(spec, getattr(args, "mode", None)), workers=args.workers)
    if getattr(args, "epsilon", None) is not None:
        kw["epsilon_gap"] = args.epsilon
    if n is not None:
        kw["n_samples_per_segment"] = n
    return scene.reach_params(**kw)


def _workers(value):
    if value == "max":
        return "max"
    try:
        n = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError("workers must be a positive integer or 'max'") from None
    if n < 1:
        raise argparse.ArgumentTypeError("workers must be >= 1")
    return n


# -- subcommands ------------------------------------------------------------------------

def cmd_plan_reach(args):
    scene, spec = _load_scene_arm(args)
    q = quiver_from_degrees(args.quiver_deg)
    rp = _reach_params(args, scene, spec)
    grid = scene.build_grid()
    sset = solve_reach(spec, q, grid, scene.target, rp)
    chosen = select_solution(sset)
    if not isinstance(chosen, ShortcutPath):
        chosen = refine_solution(spec, chosen, scene.target, sset.params)
    cfg = io.make_config(spec, q, rp, target=scene.target)
    _write(args.out, io.dumps(io.reach_document(spec, sset, cfg, chosen)))


def cmd_oracle(args):
    if args.quiver_deg < args.min_deg:
        raise UsageError(f"oracle refuses quivers finer than {args.min_deg} deg (got {args.quiver_deg})")
    scene, spec = _load_scene_arm(args)
    q = quiver_from_degrees(args.quiver_deg)
    rp = _reach_params(args, scene, spec)
    idx = enumerate_solutions(spec, q, scene.build_grid(), scene.target, rp)
    cfg = io.make_config(spec, q, rp, target=scene.target)
    _write(args.out, io.dumps(io.oracle_document(spec, scene.target, idx, cfg)))


def cmd_plan_path(args):
    scene, spec = _load_scene_arm(args)
    q = quiver_from_degrees(args.quiver_deg)
    n = args.waypoints_per_seg
    rp = _reach_params(args, scene, spec, n)
    pp = PathParams(n_samples=n)
    sset, chosen, plan = plan_reach_path(spec, q, scene.build_grid(), scene.target, rp, pp)
    cfg = io.make_config(spec, q, rp, pp, scene.target)
    _write(args.out, io.emit_plan(io.plan_document(spec, plan, cfg, chosen, sset.stats)))


def cmd_plan_arbitrary(args):
    scene, spec = _load_scene_arm(args)
    q = quiver_from_degrees(args.quiver_deg)
    start = io.parse_start_pose(_read(args.start_pose), spec)
    n = args.waypoints_per_seg
    rp = _reach_params(args, scene, spec, n)
    pp = PathParams(n_samples=n)
    plan = plan_arbitrary(spec, q, scene.build_grid(), start, scene.target, pp, rp)
    cfg = io.make_config(spec, q, rp, pp, scene.target)
    _write(args.out, io.emit_plan(io.plan_document(spec, plan, cfg)))


def cmd_replan(args):
    scene = io.parse_scene(_read(args.scene))
    doc = io.parse_plan(_read(args.plan))
    obstacle = io.parse_obstacle(_read(args.obstacle))
    spec, active = io.plan_from_document(doc)
    cfg = doc["config"]
    q = io.quiver_from_config(cfg["quiver"])
    rp = io.reach_from_config(cfg["reach"], workers=args.workers)
    pp = io.path_from_config(cfg.get("path", {}))
    per = None if args.measure_time else args.replan_per_waypoint
    timing = ReplanTiming(args.waypoint_period, per)
    plan = replan_dynamic(spec, q, scene.build_grid(), active, args.at_index, obstacle, timing, pp, rp)
    _write(args.out, io.emit_plan(io.plan_document(spec, plan, cfg, doc.get("chosen"))))


def cmd_simulate(args):
    doc = io.parse_plan(_read(args.plan))
    spec, plan = io.plan_from_document(doc)
    if args.arm:
        spec = io.parse_arm(_read(args.arm), root=doc["root"])
    params = MotionParams(v_w=args.vw, sample_rate=args.hz, max_joint_rate=math.radians(args.max_rate_deg),
                          arrival_tolerance=args.tolerance)
    grid = io.parse_scene(_read(args.scene)).build_grid() if args.scene else None
    n = doc["config"].get("path", {}).get("n_samples", 8)
    trace = simulate_execution(spec, plan, params, grid=grid, n_samples=n)
    _write(args.out, io.emit_trace(io.trace_document(spec, trace, params)))


def cmd_export_frames(args):
    os.makedirs(args.out, exist_ok=True)
    if args.plan:
        doc = io.parse_plan(_read(args.plan))
        spec, plan = io.plan_from_document(doc)
        io.write_frames(os.path.join(args.out, "frames.csv"), np.array([p.joints for p in plan.sequence()]))
        io.write_frames(os.path.join(args.out, "waypoints.csv"), np.asarray(plan.waypoints)[:, None, :])
    else:
        from .arm import joint_angles_to_vectors

        doc = io.parse_trace(_read(args.trace))
        spec = io.arm_from_dict(doc["arm"], doc["root"])
        joints = np.array([joint_angles_to_vectors(spec, np.radians(t["q_deg"])).joints for t in doc["ticks"]])
        io.write_frames(os.path.join(args.out, "frames.csv"), joints, [t["time"] for t in doc["ticks"]])


def cmd_validate(args):
    scene = io.parse_scene(_read(args.scene))
    extra = [io.parse_obstacle(_read(args.obstacle))] if args.obstacle else []
    if args.plan:
        doc = io.parse_plan(_read(args.plan))
        violations = validate_plan(doc, scene, extra_obstacles=extra)
        checked = len(doc["poses"]) + len(doc["unfold_prefix"])
    else:
        doc = io.parse_trace(_read(args.trace))
        violations = validate_trace(doc, grid=scene.build_grid(extra))
        checked = len(doc["ticks"])
    _write(args.out, io.dumps({"checked_poses": checked, "violations": violations, "ok": not violations}))
    return EXIT_INVALID if violations else EXIT_OK


def cmd_bench(args):
    scene, spec = _load_scene_arm(args)
    grid = scene.build_grid()
    rows = []
    for deg in args.quiver_deg_list:
        q = quiver_from_degrees(deg)
        rp = _reach_params(args, scene, spec)
        t0 = time.perf_counter()
        prep = _Prepared.build(spec, q, grid, scene.target, rp)
        t1 = time.perf_counter()
        found, stats = search_indices(prep)
        t2 = time.perf_counter()
        path_s = float("nan")
        status = "ok"
        try:
            sset = solve_reach(spec, q, grid, scene.target, rp)
            chosen = select_solution(sset)
            if not isinstance(chosen, ShortcutPath):
                chosen = refine_solution(spec, chosen, scene.target, sset.params)
            t3 = time.perf_counter()
            plan_from_reach(spec, q, grid, chosen, PathParams(), sset, scene.target, rp)
            path_s = time.perf_counter() - t3
        except NoSolution:
            status = "no-solution"
        except NoPath:
            status = "no-path"
        rows.append((deg, len(q), t1 - t0, t2 - t1, path_s, len(found), status))
    lines = ["quiver_deg\tvectors\tseg1_s\tseg2_gap_s\tpath_s\tsolutions\tstatus"]
    for r in rows:
        lines.append(f"{r[0]:g}\t{r[1]}\t{r[2]:.4f}\t{r[3]:.4f}\t{r[4]:.4f}\t{r[5]}\t{r[6]}")
    _write(args.out, "\n".join(lines) + "\n")


# -- parser ------------------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="gapms", description="Gap map-seeking reach and path planning.")
    p.add_argument("--workers", type=_workers, default=1, help="reach-search worker threads (integer or 'max')")
    sub = p.add_subparsers(dest="command", required=True)

    def scene_arm(sp):
        sp.add_argument("--scene", required=True)
        sp.add_argument("--arm", required=True)

    def reach_opts(sp, quiver_default=2.0):
        sp.add_argument("--mode", choices=["6dof", "8dof"])
        sp.add_argument("--quiver-deg", type=float, default=quiver_default)
        sp.add_argument("--epsilon", type=float, help="gap tolerance in meters")

    sp = sub.add_parser("plan-reach", help="reach-pose search")
    scene_arm(sp)
    reach_opts(sp)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_plan_reach)

    sp = sub.add_parser("plan-path", help="reach pose plus the path to it")
    scene_arm(sp)
    reach_opts(sp)
    sp.add_argument("--waypoints-per-seg", type=int, default=8)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_plan_path)

    sp = sub.add_parser("plan-arbitrary", help="path from an arbitrary start pose")
    scene_arm(sp)
    reach_opts(sp)
    sp.add_argument("--start-pose", required=True)
    sp.add_argument("--waypoints-per-seg", type=int, default=8)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_plan_arbitrary)

    sp = sub.add_parser("replan", help="replace the rest of a plan around a new obstacle")
    sp.add_argument("--scene", required=True)
    sp.add_argument("--plan", required=True)
    sp.add_argument("--obstacle", required=True)
    sp.add_argument("--at-index", type=int, required=True, help="waypoint the arm is at when the obstacle appears")
    sp.add_argument("--waypoint-period", type=float, default=0.083, help="seconds per waypoint during execution")
    sp.add_argument("--replan-per-waypoint", type=float, default=DEFAULT_REPLAN_PER_WAYPOINT,
                    help="assumed solve seconds per remaining waypoint")
    sp.add_argument("--measure-time", action="store_true",
                    help="time a waypoint solve instead (output then depends on the machine)")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_replan)

    sp = sub.add_parser("simulate", help="rate-control execution of a plan")
    sp.add_argument("--plan", required=True)
    sp.add_argument("--arm")
    sp.add_argument("--scene", help="collision-check every tick against this scene")
    sp.add_argument("--vw", type=float, default=0.5, help="end-effector speed, m/s")
    sp.add_argument("--hz", type=float, default=100.0)
    sp.add_argument("--max-rate-deg", type=float, default=30.0, help="joint rate limit, deg/s")
    sp.add_argument("--tolerance", type=float, default=0.01, help="arrival tolerance, m")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("oracle", help="exhaustive reference enumeration (coarse quivers)")
    scene_arm(sp)
    sp.add_argument("--quiver-deg", type=float, required=True)
    sp.add_argument("--mode", choices=["6dof", "8dof"])
    sp.add_argument("--epsilon", type=float)
    sp.add_argument("--min-deg", type=float, default=5.0, help="finest quiver the oracle accepts")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_oracle)

    sp = sub.add_parser("bench", help="stage timings over quiver resolutions")
    scene_arm(sp)
    sp.add_argument("--quiver-deg-list", type=float, nargs="+", required=True)
    sp.add_argument("--mode", choices=["6dof", "8dof"])
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_bench)

    sp = sub.add_parser("export-frames", help="joint loci per pose as CSV tables")
    src = sp.add_mutually_exclusive_group(required=True)
    src.add_argument("--plan")
    src.add_argument("--trace")
    sp.add_argument("--out", required=True, help="output directory")
    sp.set_defaults(func=cmd_export_frames)

    sp = sub.add_parser("validate", help="independent re-check of a plan or trace")
    src = sp.add_mutually_exclusive_group(required=True)
    src.add_argument("--plan")
    src.add_argument("--trace")
    sp.add_argument("--scene", required=True)
    sp.add_argument("--obstacle", help="dynamic obstacle the plan was replanned around")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_validate)
    return p


def _fail(code, exc, **extra):
    diag = {"error": type(exc).__name__, "message": str(exc), "exit_code": code, **extra}
    sys.stderr.write(json.dumps(io.to_jsonable(diag), sort_keys=True) + "\n")
    return code


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        code = args.func(args)
        return EXIT_OK if code is None else code
    except UsageError as exc:
        return _fail(EXIT_USAGE, exc)
    except ParseError as exc:
        return _fail(EXIT_PARSE, exc, field=exc.field, line=exc.line)
    except NoSolution as exc:
        return _fail(EXIT_NO_SOLUTION, exc)
    except NoPath as exc:
        return _fail(EXIT_NO_PATH, exc)
    except InfeasibleTiming as exc:
        return _fail(EXIT_TIMING, exc, **{"info": getattr(exc, "info", None)})
    except InvalidParameter as exc:
        return _fail(EXIT_USAGE, exc)
    except Exception as exc:  # noqa: BLE001  last-resort diagnostics
        return _fail(EXIT_OTHER, exc)


if __name__ == "__main__":
    sys.exit(main())
