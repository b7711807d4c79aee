"""Command-line driver.

Exit codes: 0 success, 1 invalid input or configuration, 2 solver, controller
or file-system failure, 3 when ``check-theory`` completes but reports failed
checks.
"""
from __future__ import annotations

import argparse
import csv
import io
import logging
import os
import sys
from fractions import Fraction
from pathlib import Path

from .adaptivity import ControllerConfig, ControllerStallError, run_adaptive, write_step_log
from .benchmarks import (
    SPACE_COLUMNS,
    TIME_COLUMNS,
    VARIABLES,
    SpacePoint,
    TimePoint,
    exact_bootstrap,
    fitted_table_orders,
    get_case,
    make_problem,
    schedule_step,
    state_errors,
    sweep_space,
    sweep_time,
)
from .export import export_fields
from .linalg import SolverError
from .stepping import COUPLED, DECOUPLED, run_fixed
from .verification import check_theory

log = logging.getLogger("stokes_darcy")

EXIT_OK, EXIT_INPUT, EXIT_RUNTIME, EXIT_CHECKS = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def parse_h(text: str) -> float:
    """``32``, ``1/32`` and ``0.03125`` all mean a mesh size of 1/32."""
    try:
        value = float(Fraction(text.strip()))
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"invalid mesh size {text!r}") from None
    if value <= 0:
        raise argparse.ArgumentTypeError("mesh size must be positive")
    return 1.0 / value if value > 1 else value


def _list(conv):
    def parse(text: str):
        try:
            return [conv(t) for t in str(text).split(",") if t.strip()]
        except (ValueError, argparse.ArgumentTypeError) as exc:
            raise argparse.ArgumentTypeError(f"invalid list {text!r}: {exc}") from None

    return parse


def parse_mode(text: str) -> tuple[str, bool]:
    """``coupled-filtered``, ``decoupled-unfiltered`` and so on."""
    parts = text.lower().split("-")
    if len(parts) != 2 or parts[0] not in (COUPLED, DECOUPLED) or parts[1] not in ("filtered", "unfiltered"):
        raise argparse.ArgumentTypeError(
            f"invalid mode {text!r}; use (coupled|decoupled)-(filtered|unfiltered)"
        )
    return parts[0], parts[1] == "filtered"


def _theta(text: str) -> float:
    v = float(text)
    if not 0 < v < 0.5:
        raise argparse.ArgumentTypeError("theta must lie in (0, 1/2)")
    return v


def _positive(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError("value must be positive")
    return v


def read_config(path: str) -> dict[str, str]:
    """Flat ``key = value`` file; ``#`` starts a comment."""
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    out = {}
    for i, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{i}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise UsageError(f"{path}:{i}: empty key")
        out[key.replace("-", "_")] = value
    return out


def _common(p: argparse.ArgumentParser, adaptive: bool = False, sweep: str | None = None) -> None:
    p.add_argument("--config", help="key = value file; command-line flags take precedence")
    p.add_argument("--case", help="test1 or test2")
    p.add_argument("--mode", type=parse_mode, default="decoupled-filtered")
    p.add_argument("--theta", type=_theta, default="0.3")
    p.add_argument("--T", dest="T", type=_positive, default=None, help="final time (default: 1)")
    if sweep == "space":
        p.add_argument("--h", type=_list(parse_h), help="mesh sizes, e.g. 4,8,16,32")
    else:
        p.add_argument("--h", type=parse_h, help="mesh size, e.g. 32 or 1/32")
    if adaptive:
        if sweep == "time":
            p.add_argument("--eps", type=_list(_positive), help="tolerances, e.g. 1e-3,1e-4")
        else:
            p.add_argument("--eps", type=_positive, help="tolerance")
        p.add_argument("--k0", type=_positive, default="0.01", help="bootstrap step")
    else:
        p.add_argument("--dt", type=_positive, help="fixed step")
        if sweep is None:
            p.add_argument("--schedule", choices=["K1", "K2", "K3"], help="variable step rule instead of --dt")
            p.add_argument("--steps", type=int, help="number of steps (default: run to T)")
    p.add_argument("--out", help="output file or directory")
    if sweep:
        p.add_argument("--jobs", type=int, default="1")
        p.add_argument("--no-timing", action="store_true", help="write seconds as 0 for byte-stable tables")
    if sweep == "time":
        p.add_argument("--error-norm", choices=["squared", "verbatim"], default="squared")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="stokes-darcy", description="Variable-step Stokes/Darcy solver experiments")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    parser.subcommands = {}

    def add(name, help):
        parser.subcommands[name] = sub.add_parser(name, help=help)
        return parser.subcommands[name]

    _common(add("run-fixed", "fixed or scheduled steps"))
    _common(add("run-adaptive", "adaptive run with step log"), adaptive=True)
    _common(add("sweep-time", "tolerance sweep table"), adaptive=True, sweep="time")
    _common(add("sweep-space", "mesh sweep table"), sweep="space")
    _common(add("export-fields", "run, then export the final fields"))
    ct = add("check-theory", "coefficient identities and the quadratic bound")
    ct.add_argument("--config")
    ct.add_argument("--samples", type=int, default="100000")
    ct.add_argument("--seed", type=int, default="0")
    ct.add_argument("--grid", type=int, default="50")
    ct.add_argument("-v", "--verbose", action="store_true")
    return parser


def parse_args(argv: list[str]) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        raise UsageError("missing subcommand")
    if getattr(args, "config", None):
        values = read_config(args.config)
        sub = parser.subcommands[args.command]
        actions = {a.dest: a for a in sub._actions}
        for key, value in values.items():
            if key not in actions or key in ("help", "config"):
                raise UsageError(f"{args.config}: unknown key {key!r}")
            if isinstance(actions[key], argparse._StoreTrueAction):
                values[key] = _flag(key, value)
        sub.set_defaults(**values)
        args = parser.parse_args(argv)
    return args


def _flag(key: str, value: str) -> bool:
    v = value.lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"key {key!r} expects a boolean, got {value!r}")


def _require(args, *names):
    for n in names:
        if getattr(args, n, None) is None:
            raise UsageError(f"missing required option --{n}")


def _write_text(out: str | None, text: str) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    path = Path(out)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _table(rows, columns) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow(["" if r[c] is None else (repr(r[c]) if isinstance(r[c], float) else r[c]) for c in columns])
    return buf.getvalue()


def _final_time(args, case) -> float:
    return args.T if args.T is not None else 1.0


def _fixed_run(args):
    _require(args, "case", "h")
    if args.dt is None and args.schedule is None:
        raise UsageError("give --dt or --schedule")
    if args.dt is not None and args.schedule is not None:
        raise UsageError("--dt and --schedule are exclusive")
    case = get_case(args.case)
    coupling, filtered = args.mode
    problem = make_problem(case, args.h)
    if args.schedule:
        k0 = schedule_step(args.schedule, 0, 0.0)
        rule = lambda m, t: schedule_step(args.schedule, m, t)  # noqa: E731
        n = args.steps if args.steps is not None else 40
        boot = exact_bootstrap(problem, case, 2, k0)
        traj = run_fixed(problem, boot, rule, args.theta, coupling, filtered, n_steps=n)
    else:
        boot = exact_bootstrap(problem, case, 2, args.dt)
        T = None if args.steps is not None else _final_time(args, case)
        traj = run_fixed(problem, boot, args.dt, args.theta, coupling, filtered, n_steps=args.steps, T=T)
    return case, problem, traj


def cmd_run_fixed(args) -> int:
    case, problem, traj = _fixed_run(args)
    rows = []
    for m, s in enumerate(traj):
        e = state_errors(s, problem.forms, case)
        rows.append({"m": m, "t": s.t, **{f"err_{v}": e[v] for v in VARIABLES}})
    _write_text(args.out, _table(rows, ["m", "t", "err_u", "err_p", "err_phi"]))
    return EXIT_OK


def cmd_export_fields(args) -> int:
    _require(args, "out")
    _, problem, traj = _fixed_run(args)
    for path in export_fields(traj[-1], problem.forms, args.out):
        print(path)
    return EXIT_OK


def cmd_run_adaptive(args) -> int:
    _require(args, "case", "h", "eps")
    case = get_case(args.case)
    coupling, filtered = args.mode
    problem = make_problem(case, args.h)
    config = ControllerConfig(args.eps, filtered=filtered, initial_step=args.k0)
    boot = exact_bootstrap(problem, case, config.bootstrap_count, args.k0)
    result = run_adaptive(problem, args.theta, config, coupling, _final_time(args, case), boot)
    buf = io.StringIO()
    write_step_log(result.records, buf)
    _write_text(args.out, buf.getvalue())
    e = state_errors(result.trajectory[-1], problem.forms, case)
    print(
        f"accepted {len(result.accepted_steps)} rejected {result.rejections} "
        f"mean step {result.mean_step:.6g} final errors "
        + " ".join(f"{v}={e[v]:.6g}" for v in VARIABLES),
        file=sys.stderr,
    )
    return EXIT_OK


def cmd_sweep_time(args) -> int:
    _require(args, "case", "h", "eps")
    case = get_case(args.case)
    coupling, filtered = args.mode
    points = [
        TimePoint(case.name, args.h, args.theta, eps, coupling, filtered, args.k0,
                  _final_time(args, case), args.error_norm == "squared")
        for eps in args.eps
    ]
    rows = sweep_time(points, jobs=args.jobs)
    return _emit_sweep(args, rows, TIME_COLUMNS, "avg_dt")


def cmd_sweep_space(args) -> int:
    _require(args, "case", "h", "dt")
    case = get_case(args.case)
    coupling, filtered = args.mode
    points = [
        SpacePoint(case.name, h, args.theta, args.dt, coupling, filtered, _final_time(args, case))
        for h in args.h
    ]
    rows = sweep_space(points, jobs=args.jobs)
    return _emit_sweep(args, rows, SPACE_COLUMNS, "h")


def _emit_sweep(args, rows, columns, size_key) -> int:
    if args.no_timing:
        for r in rows:
            r["seconds"] = 0.0
    _write_text(args.out, _table(rows, columns))
    if len(rows) >= 2:
        fit = fitted_table_orders(rows, size_key, VARIABLES)
        print("fitted orders: " + " ".join(f"{v}={o:.3f}" for v, o in fit.items()), file=sys.stderr)
    return EXIT_OK


def cmd_check_theory(args) -> int:
    report = check_theory(grid=args.grid, samples=args.samples, seed=args.seed)
    print("\n".join(report.lines()))
    return EXIT_OK if report.passed else EXIT_CHECKS


COMMANDS = {
    "run-fixed": cmd_run_fixed,
    "run-adaptive": cmd_run_adaptive,
    "sweep-time": cmd_sweep_time,
    "sweep-space": cmd_sweep_space,
    "export-fields": cmd_export_fields,
    "check-theory": cmd_check_theory,
}


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse_args(argv)
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (SolverError, ControllerStallError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
