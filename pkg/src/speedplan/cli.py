"""Command-line interface: ``speedplan <verb> ...``.

Exit codes (identical across verbs; batch runs return the largest code):

====  ======================================================================
0     success: assumptions hold / feasible / exact / oracle gap within bound
1     assumption fails (validate), infeasible (check, tighten, plan, oracle),
      oracle gap above its bound, or gap demonstration not reproduced
2     unreadable or schema-invalid input (field path printed)
3     assumption 3 fails, so bound tightening is unsound (check, tighten, plan)
4     relaxation inexact (plan, oracle)
5     conic solver numerical failure (plan, oracle)
6     dynamic program found no grid path (oracle)
====  ======================================================================
"""

import argparse
from concurrent.futures import ProcessPoolExecutor
import json
import math
import os
import sys

import numpy as np

from .errors import AssumptionViolation, DPFailure, SpeedPlanError
from .io import ProfileDocument, SchemaError, load_track, profile_from_report, save_track
from .model import check_assumptions
from .relaxation import FREE_FINAL, WITH_FINAL, plan
from .solvers import PRECISE_TOLERANCES
from .tightening import InfeasibleAt, compute_zy, sweep, tightened_lower_bounds

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_INPUT = 2
EXIT_A3 = 3
EXIT_INEXACT = 4
EXIT_NUMERICAL = 5
EXIT_DP = 6

PLAN_EXIT = {"exact": EXIT_OK, "inexact": EXIT_INEXACT, "infeasible": EXIT_FAIL,
             "numerical_failure": EXIT_NUMERICAL}

# Objective accuracy used when the relaxed optimum is compared with the DP
# objective comparisons (oracle sandwich, gap demo) need a tight duality gap
ORACLE_SOLVER_TOL = PRECISE_TOLERANCES


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def _fmt_vec(v, digits=6):
    return "[" + ", ".join(f"{x:.{digits}g}" for x in v) + "]"


# ---------------------------------------------------------------------------
# verbs: each returns (exit code, report dict, text)


def run_validate(inst, args):
    rep = check_assumptions(inst)
    lines = [f"critical speed w_bar = {rep.critical_speed:.6g} m^2/s^2"]
    for k in (1, 2, 3):
        holds = getattr(rep, f"a{k}_holds")
        slack = getattr(rep, f"a{k}_slack")
        lines.append(f"A{k}: {'holds' if holds else 'FAILS'} (slack {slack:.6g})")
    if rep.a1_denominator_invalid:
        lines.append("A1: denominator lambda*gamma*P_max*h + 1 - lambda <= 0")
    lines.append(f"I (limits above w_bar, 1-based) = {list(rep.index_set_I)}")
    report = {**rep.to_dict(), "all_hold": rep.all_hold}
    return (EXIT_OK if rep.all_hold else EXIT_FAIL), report, "\n".join(lines)


def run_check(inst, args):
    v = compute_zy(inst, eps=args.eps, free_final=args.free_final)
    if v.feasible:
        report = {"status": "Feasible", "iterations": v.iterations, "z": v.z, "y": v.y,
                  "verified": v.verified}
        text = (f"Feasible after {v.iterations} iterations\n"
                f"z = {_fmt_vec(v.z)}\ny = {_fmt_vec(v.y)}")
        code = EXIT_OK
    else:
        report = {"status": "Infeasible", "iterations": v.iterations,
                  "witness_index": v.witness_index}
        text = f"Infeasible (witness index {v.witness_index}, iteration {v.iterations})"
        code = EXIT_FAIL
    if getattr(args, "out", None) and v.feasible:
        with open(args.out, "w") as fh:
            json.dump(_jsonable({"z": v.z, "y": v.y}), fh, indent=2)
    return code, report, text


def run_tighten(inst, args):
    free = args.free_final
    lrec = tightened_lower_bounds(inst, free_final=free)
    u = sweep("B2", inst.upper_limits(free), inst)
    report = {"u": u}
    lines = [f"u (forward acceleration bound) = {_fmt_vec(u)}"]
    if isinstance(lrec, InfeasibleAt):
        report.update({"status": "Infeasible", "l": lrec.l, "infeasible_index": lrec.index})
        lines.append(f"l = {_fmt_vec(lrec.l)}")
        lines.append(f"Infeasible: l exceeds w_max at index {lrec.index}")
        return EXIT_FAIL, report, "\n".join(lines)
    report.update({"status": "Feasible", "l": lrec})
    lines.append(f"l (minimum speed to stay feasible) = {_fmt_vec(lrec)}")
    code, sub, text = run_check(inst, args)
    report["envelopes"] = sub
    lines.append(text)
    return code, report, "\n".join(lines)


def run_plan(inst, args, path=None):
    mode = FREE_FINAL if args.free_final else WITH_FINAL
    rep = plan(inst, mode=mode, tighten=not args.no_tighten, eps=args.eps, tol=args.tol,
               backend=args.backend)
    doc = profile_from_report(inst, rep)
    out = _out_path(args, path, ".profile.json")
    if out:
        doc.save(out)
    if args.dump_program and rep.program is not None:
        rep.program.to_json(_out_path(args, path, ".program.json", key="dump_program"), indent=1)
    lines = [f"status: {rep.status} (mode {mode}, tightening {'on' if rep.tightened else 'off'})"]
    if rep.profile is not None:
        p = rep.profile
        lines.append(f"objective: total {p.total:.10g} s = energy {p.energy_term:.10g} "
                     f"+ time {p.time_term:.10g}")
        lines.append(f"max residual |t_i sqrt(w_i) - 1| = {p.exactness.max_residual:.3g}; "
                     f"r = {p.exactness.tail_length_r}")
        if p.exactness.violated:
            lines.append(f"violated positions: {list(p.exactness.violated)}")
    if rep.infeasible_index is not None:
        lines.append(f"infeasible at index {rep.infeasible_index}")
    if rep.status == "numerical_failure" and rep.outcome is not None:
        lines.append(f"solver stats: {_jsonable(rep.outcome.solver_stats)}")
    lines.extend(f"note: {d}" for d in rep.diagnostics)
    return PLAN_EXIT[rep.status], doc.to_dict(), "\n".join(lines)


def run_oracle(inst, args):
    from .oracle import dp_optimize

    rep = plan(inst, eps=args.eps, tol=args.tol, solver_tol=ORACLE_SOLVER_TOL,
               backend=args.backend)
    if rep.status != "exact":
        return PLAN_EXIT[rep.status], {"status": rep.status}, f"planning status: {rep.status}"
    relaxed = rep.outcome.objective_value
    try:
        dp = dp_optimize(inst, args.grid, envelopes=rep.verdict)
    except DPFailure as exc:
        return EXIT_DP, {"status": "dp_failure", "blocking_stage": exc.stage}, str(exc)
    gap = dp.objective - relaxed
    ok = -1e-9 <= gap <= dp.grid_error_bound
    report = {"relaxed_objective": relaxed, "dp_objective": dp.objective, "gap": gap,
              "grid_error_bound": dp.grid_error_bound, "grid_levels": args.grid,
              "within_bound": ok}
    text = (f"relaxed objective {relaxed:.12g}\nDP objective      {dp.objective:.12g}\n"
            f"gap {gap:.3g} (bound {dp.grid_error_bound:.3g}) -> {'OK' if ok else 'OUTSIDE'}")
    return (EXIT_OK if ok else EXIT_FAIL), report, text


def run_gap_demo(args):
    from .generators import hard_final_instance

    rows, all_ok = [], True
    rng = np.random.default_rng(args.seed)
    for k in range(args.count):
        inst = hard_final_instance(rng, n=args.n)
        loose = plan(inst, tighten=False, solver_tol=ORACLE_SOLVER_TOL)
        tight = plan(inst, solver_tol=ORACLE_SOLVER_TOL)
        ex = loose.profile.exactness if loose.profile is not None else None
        gap = tight.outcome.objective_value - loose.outcome.objective_value
        closed = abs(tight.outcome.objective_value - tight.profile.total) if tight.profile else math.nan
        ok = (ex is not None and ex.tail_length_r >= 1 and ex.suffix_structure
              and gap > 1e-4 and tight.status == "exact" and closed <= 1e-7)
        all_ok &= ok
        rows.append({"instance": k, "untightened_status": loose.status,
                     "r": ex.tail_length_r if ex else None,
                     "violated": list(ex.violated) if ex else None,
                     "suffix": ex.suffix_structure if ex else None, "gap": gap,
                     "tightened_status": tight.status, "tightened_gap": closed, "ok": ok})
        if args.write_tracks:
            os.makedirs(args.write_tracks, exist_ok=True)
            save_track(inst, os.path.join(args.write_tracks, f"hard_final_{k:03d}.json"))
    def span(v):
        if not v:
            return "-"
        return f"{v[0]}..{v[-1]}" if v == list(range(v[0], v[-1] + 1)) else ",".join(map(str, v))

    lines = [f"{'#':>3} {'r':>3} {'violated':<18} {'gap (s)':>12} {'tight gap':>10} ok"]
    for r in rows:
        lines.append(f"{r['instance']:>3} {r['r']!s:>3} {span(r['violated'] or []):<18} "
                     f"{r['gap']:>12.4g} {r['tightened_gap']:>10.2g} {r['ok']}")
    return (EXIT_OK if all_ok else EXIT_FAIL), {"instances": rows, "all_ok": all_ok}, "\n".join(lines)


def run_plot(args):
    from .plot import write_svg

    try:
        doc = ProfileDocument.load(args.profile)
        write_svg(doc, args.svg)
    except (OSError, SchemaError, ValueError, KeyError, TypeError) as exc:
        return EXIT_INPUT, {"error": str(exc)}, f"error: malformed profile: {exc}"
    return EXIT_OK, {"svg": args.svg}, f"wrote {args.svg}"


def _out_path(args, track_path, suffix, key="out"):
    target = getattr(args, key, None)
    if not target:
        return None
    if len(args.tracks) > 1 or os.path.isdir(target):
        os.makedirs(target, exist_ok=True)
        stem = os.path.splitext(os.path.basename(track_path))[0]
        return os.path.join(target, stem + suffix)
    return target


# ---------------------------------------------------------------------------
# driver


TRACK_VERBS = {"validate": run_validate, "check": run_check, "tighten": run_tighten,
               "plan": run_plan, "oracle": run_oracle}


def _run_track(verb, path, args):
    """Load one track and run a verb, mapping errors to exit codes."""
    try:
        inst = load_track(path, base=args.base)
    except SchemaError as exc:
        return EXIT_INPUT, {"error": "schema", "path": exc.path, "message": exc.detail}, \
            f"error: {exc}"
    except (OSError, ValueError, SpeedPlanError) as exc:
        return EXIT_INPUT, {"error": "input", "message": str(exc)}, f"error: {exc}"
    try:
        if verb == "plan":
            return run_plan(inst, args, path)
        return TRACK_VERBS[verb](inst, args)
    except AssumptionViolation as exc:
        return EXIT_A3, {"error": "assumption3", "message": str(exc)}, f"error: {exc}"


def _batch(verb, args):
    paths = args.tracks
    if args.jobs > 1 and len(paths) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_run_track, [verb] * len(paths), paths, [args] * len(paths)))
    else:
        results = [_run_track(verb, p, args) for p in paths]
    return paths, results


def _emit(args, items):
    """``items`` = list of (label, code, report, text)."""
    if args.json:
        if len(items) == 1:
            label, code, report, _ = items[0]
            payload = {"exit_code": code, **_jsonable(report)} if isinstance(report, dict) else report
        else:
            payload = [{"file": label, "exit_code": code, "report": _jsonable(report)}
                       for label, code, report, _ in items]
        print(json.dumps(_jsonable(payload), indent=2))
        return
    for label, code, _, text in items:
        if len(items) > 1:
            print(f"== {label} (exit {code})")
        print(text)


def _add_global(parser, suppress):
    def d(value):
        return argparse.SUPPRESS if suppress else value

    parser.add_argument("--tol", type=float, default=d(1e-6),
                        help="exactness tolerance on t_i sqrt(w_i) - 1 (default 1e-6)")
    parser.add_argument("--eps", type=float, default=d(1e-9),
                        help="envelope iteration stopping threshold (default 1e-9)")
    parser.add_argument("--seed", type=int, default=d(0), help="instance generator seed")
    parser.add_argument("--json", action="store_true", default=d(False),
                        help="machine-readable report on stdout")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="speedplan",
        description="Minimum time/energy speed planning with exact convex relaxation.",
        formatter_class=argparse.RawDescriptionHelpFormatter, epilog=__doc__.split("\n", 2)[2])
    _add_global(parser, suppress=False)
    common = argparse.ArgumentParser(add_help=False)
    _add_global(common, suppress=True)
    sub = parser.add_subparsers(dest="verb", required=True)

    def track_cmd(name, help_text):
        p = sub.add_parser(name, parents=[common], help=help_text)
        p.add_argument("tracks", nargs="+", metavar="TRACK", help="TrackFile JSON (or CSV with --base)")
        p.add_argument("--base", help="JSON with h, boundary values, vehicle, weights for CSV tracks")
        p.add_argument("--jobs", type=int, default=1, help="process track files in parallel")
        return p

    track_cmd("validate", "check assumptions A1-A3")
    for name, help_text in (("check", "feasibility verdict and envelopes z, y"),
                            ("tighten", "bound recursions l, u and envelopes")):
        p = track_cmd(name, help_text)
        p.add_argument("--free-final", action="store_true", help="drop the final-speed condition")
        p.add_argument("--out", help="write z, y as JSON")
    p = track_cmd("plan", "solve the relaxed program and write a ProfileFile")
    p.add_argument("--out", help="ProfileFile path (a directory in batch mode)")
    p.add_argument("--no-tighten", action="store_true", help="use the untightened box")
    p.add_argument("--free-final", action="store_true", help="drop the final-speed condition")
    p.add_argument("--backend", default="clarabel", choices=["clarabel", "cvxopt"])
    p.add_argument("--dump-program", metavar="PATH", help="write the conic program as JSON")
    p = track_cmd("oracle", "compare the relaxed optimum with a grid dynamic program")
    p.add_argument("--grid", type=int, default=4000, help="grid levels per position")
    p.add_argument("--backend", default="clarabel", choices=["clarabel", "cvxopt"])

    p = sub.add_parser("gap-demo", parents=[common],
                       help="untightened vs tightened relaxation on terminal-speed instances")
    p.add_argument("--count", type=int, default=5)
    p.add_argument("--n", type=int, default=60)
    p.add_argument("--write-tracks", metavar="DIR", help="save the generated TrackFiles")

    p = sub.add_parser("plot", parents=[common], help="render a ProfileFile as SVG")
    p.add_argument("profile")
    p.add_argument("--svg", required=True, help="output SVG path")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.verb in TRACK_VERBS:
        for attr in ("free_final", "out", "no_tighten", "dump_program"):
            if not hasattr(args, attr):
                setattr(args, attr, None)
        if not hasattr(args, "backend"):
            args.backend = "clarabel"
        paths, results = _batch(args.verb, args)
        items = [(p, *r) for p, r in zip(paths, results)]
        code = max(r[0] for r in results)
    elif args.verb == "gap-demo":
        code, report, text = run_gap_demo(args)
        items = [("gap-demo", code, report, text)]
    else:
        code, report, text = run_plot(args)
        items = [(args.profile, code, report, text)]
    _emit(args, items)
    return code


if __name__ == "__main__":
    sys.exit(main())
