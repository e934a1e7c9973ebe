"""Command line front end.

Exit codes: 0 success, 1 validation errors, 2 input or usage problems,
3 simulated episode failed. `serve` honors GBT_BIND over --bind and GBT_LOG
for the log level, so deployments can be configured without editing units.
"""
from __future__ import annotations

import argparse
import logging
import os
import socket
import sys

from .compiler import CompileError, compile_tree, export_dot, tree_to_json
from .diagnostics import has_errors
from .model import Persona, ProcessSpec
from .sim import (
    FAULTY,
    RESPONSIVE,
    SILENT,
    HumanPolicy,
    RobotModel,
    SweepRow,
    simulate_tree,
    stats_csv,
    stats_row,
    summarize,
    sweep,
)
from .specio import SpecError, load_bundled, load_process_file, load_personas_file

BUNDLED_PREFIX = "bundled:"
DEFAULT_BIND = "127.0.0.1:8765"


class _InputError(Exception):
    """Bad file, unparseable document, or unknown id. Exit code 2."""


def _load_process(path: str) -> ProcessSpec:
    if path.startswith(BUNDLED_PREFIX):
        try:
            return load_bundled(path[len(BUNDLED_PREFIX):])[0]
        except FileNotFoundError:
            raise _InputError(f"no bundled process named {path[len(BUNDLED_PREFIX):]!r}")
    try:
        return load_process_file(path).unwrap()
    except OSError as exc:
        raise _InputError(f"cannot read {path}: {exc.strerror or exc}")
    except SpecError as exc:
        lines = "\n".join(d.format() for d in exc.diagnostics)
        raise _InputError(f"invalid process document {path}:\n{lines}")


def _load_personas(path: str, spec: ProcessSpec) -> list[Persona]:
    if path.startswith(BUNDLED_PREFIX):
        try:
            return load_bundled(path[len(BUNDLED_PREFIX):])[1]
        except FileNotFoundError:
            raise _InputError(f"no bundled personas named {path[len(BUNDLED_PREFIX):]!r}")
    try:
        return list(load_personas_file(path, spec.vocabulary_ids()).unwrap())
    except OSError as exc:
        raise _InputError(f"cannot read {path}: {exc.strerror or exc}")
    except SpecError as exc:
        lines = "\n".join(d.format() for d in exc.diagnostics)
        raise _InputError(f"invalid personas document {path}:\n{lines}")


def _policy_from_args(name: str, args: argparse.Namespace) -> HumanPolicy:
    latency_range = None
    if args.latency_range:
        try:
            lo, hi = args.latency_range.split(":", 1)
            latency_range = (int(lo), int(hi))
        except ValueError:
            raise _InputError(f"bad --latency-range {args.latency_range!r}, expected LO:HI")
        if latency_range[0] > latency_range[1] or latency_range[0] < 0:
            raise _InputError(f"bad --latency-range {args.latency_range!r}")
    if name == RESPONSIVE:
        return HumanPolicy(RESPONSIVE, ack_latency_ms=args.latency,
                           latency_range_ms=latency_range)
    if name == SILENT:
        return HumanPolicy.silent()
    if name == FAULTY:
        return HumanPolicy(FAULTY, ack_latency_ms=args.latency,
                           latency_range_ms=latency_range,
                           fail_probability=args.fail_prob)
    raise _InputError(f"unknown policy {name!r} (choose from responsive, silent, faulty)")


def _parse_seeds(text: str) -> list[int]:
    # "0:20" is the half-open range, "3,7,11" an explicit list
    try:
        if ":" in text:
            lo, hi = text.split(":", 1)
            seeds = list(range(int(lo), int(hi)))
        else:
            seeds = [int(s) for s in text.split(",")]
    except ValueError:
        raise _InputError(f"bad --seeds {text!r}, expected A:B or comma list")
    if not seeds:
        raise _InputError(f"bad --seeds {text!r}: empty")
    return seeds


def _read_bytes(path: str) -> bytes:
    try:
        with open(path, "rb") as fh:
            return fh.read()
    except OSError as exc:
        raise _InputError(f"cannot read {path}: {exc.strerror or exc}")


def cmd_validate(args: argparse.Namespace) -> int:
    from .specio import parse_personas, parse_process
    from .validate import validate_process

    try:
        process_bytes = _read_bytes(args.process)
        personas_bytes = _read_bytes(args.personas) if args.personas else None
    except _InputError as exc:
        print(exc, file=sys.stderr)
        return 2
    result = parse_process(process_bytes)
    if result.value is None:
        for d in result.diagnostics:
            print(d.format())
        return 1
    spec = result.value
    diags = list(result.diagnostics)
    if personas_bytes is not None:
        presult = parse_personas(personas_bytes, spec.vocabulary_ids())
        if presult.value is None:
            diags.extend(presult.diagnostics)
        else:
            # Persona-aware coverage checks replace the persona-blind pass.
            diags = validate_process(spec, presult.value) + presult.diagnostics
    for d in diags:
        print(d.format())
    return 1 if has_errors(diags) else 0


def cmd_compile(args: argparse.Namespace) -> int:
    try:
        spec = _load_process(args.process)
        personas = _load_personas(args.personas, spec)
    except _InputError as exc:
        print(exc, file=sys.stderr)
        return 2
    try:
        tree = compile_tree(spec, personas, max_attempts=args.max_attempts)
    except CompileError as exc:
        for d in exc.diagnostics:
            print(d.format(), file=sys.stderr)
        return 1
    text = export_dot(tree) if args.dot else tree_to_json(tree)
    sys.stdout.write(text if text.endswith("\n") else text + "\n")
    return 0


def cmd_simulate(args: argparse.Namespace) -> int:
    try:
        spec = _load_process(args.process)
        personas = _load_personas(args.personas, spec)
        policy = _policy_from_args(args.policy, args)
        if not any(p.id == args.persona for p in personas):
            raise _InputError(f"unknown persona id: {args.persona}")
    except _InputError as exc:
        print(exc, file=sys.stderr)
        return 2
    try:
        tree = compile_tree(spec, personas, max_attempts=args.max_attempts)
    except CompileError as exc:
        for d in exc.diagnostics:
            print(d.format(), file=sys.stderr)
        return 2
    robot = RobotModel(duration_scale=args.robot_scale, fail_probability=args.robot_fail)
    trace = simulate_tree(tree, personas, args.persona, policy, robot, args.seed)
    if args.trace:
        with open(args.trace, "w", encoding="utf-8") as fh:
            fh.write(trace.to_jsonl())
    stats = summarize(trace, tree)
    print(stats_row(SweepRow(args.persona, policy.label, args.seed, stats)))
    return 0 if trace.outcome == "completed" else 3


def cmd_sweep(args: argparse.Namespace) -> int:
    try:
        spec = _load_process(args.process)
        personas = _load_personas(args.personas, spec)
        policies = [_policy_from_args(name.strip(), args)
                    for name in args.policies.split(",") if name.strip()]
        if not policies:
            raise _InputError("no policies given")
        seeds = _parse_seeds(args.seeds)
    except _InputError as exc:
        print(exc, file=sys.stderr)
        return 2
    robot = RobotModel(duration_scale=args.robot_scale, fail_probability=args.robot_fail)
    try:
        rows = sweep(spec, personas, policies, seeds, robot)
    except CompileError as exc:
        for d in exc.diagnostics:
            print(d.format(), file=sys.stderr)
        return 2
    print(stats_csv(rows), end="")
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    bind = os.environ.get("GBT_BIND") or args.bind
    host, sep, port_text = bind.rpartition(":")
    if not sep or not host:
        print(f"bad bind address {bind!r}, expected HOST:PORT", file=sys.stderr)
        return 2
    try:
        port = int(port_text)
        if not 0 < port < 65536:
            raise ValueError
    except ValueError:
        print(f"bad port in bind address {bind!r}", file=sys.stderr)
        return 2
    level = os.environ.get("GBT_LOG", "info")
    logging.basicConfig(level=getattr(logging, level.upper(), logging.INFO))
    try:
        spec = _load_process(args.process)
        personas = _load_personas(args.personas, spec)
    except _InputError as exc:
        print(exc, file=sys.stderr)
        return 2
    try:
        probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        probe.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        probe.bind((host, port))
        probe.close()
    except OSError as exc:
        print(f"cannot bind {bind}: {exc.strerror or exc}", file=sys.stderr)
        return 2
    from .service import create_app
    import uvicorn

    app = create_app(spec, personas, max_attempts=args.max_attempts)
    uvicorn.run(app, host=host, port=port, log_level=level.lower())
    return 0


def _add_io_args(p: argparse.ArgumentParser, personas_required: bool = True) -> None:
    p.add_argument("process", help=f"process JSON file, or {BUNDLED_PREFIX}NAME")
    p.add_argument("--personas", required=personas_required,
                   help=f"personas JSON file, or {BUNDLED_PREFIX}NAME")


def _add_sim_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--latency", type=int, default=0, metavar="MS",
                   help="acknowledgement latency added to nominal durations")
    p.add_argument("--latency-range", default=None, metavar="LO:HI",
                   help="uniform acknowledgement latency, overrides --latency")
    p.add_argument("--fail-prob", type=float, default=0.1, metavar="P",
                   help="per-instruction failure probability for the faulty policy")
    p.add_argument("--robot-scale", type=float, default=1.0, metavar="X",
                   help="robot duration multiplier")
    p.add_argument("--robot-fail", type=float, default=0.0, metavar="P",
                   help="per-command robot failure probability")
    p.add_argument("--max-attempts", type=int, default=3, metavar="N",
                   help="retry budget per action")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gbt", description="graded-assistance process toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a process document, report diagnostics")
    _add_io_args(p, personas_required=False)
    p.set_defaults(fn=cmd_validate)

    p = sub.add_parser("compile", help="compile to a behavior tree, print DOT or JSON")
    _add_io_args(p)
    fmt = p.add_mutually_exclusive_group(required=True)
    fmt.add_argument("--dot", action="store_true", help="Graphviz output")
    fmt.add_argument("--json", action="store_true", help="tree document output")
    p.add_argument("--max-attempts", type=int, default=3, metavar="N")
    p.set_defaults(fn=cmd_compile)

    p = sub.add_parser("simulate", help="run one simulated episode, print a CSV row")
    _add_io_args(p)
    p.add_argument("--persona", type=int, required=True, metavar="ID")
    p.add_argument("--policy", default=RESPONSIVE,
                   help="responsive, silent, or faulty")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trace", metavar="FILE", help="write the episode trace as JSONL")
    _add_sim_args(p)
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("sweep", help="simulate persona x policy x seed, print CSV")
    _add_io_args(p)
    p.add_argument("--policies", default=f"{RESPONSIVE},{SILENT}",
                   help="comma-separated policy names")
    p.add_argument("--seeds", default="0:5", metavar="A:B|LIST",
                   help="seed range A:B (half open) or comma list")
    _add_sim_args(p)
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("serve", help="run the operator HTTP service")
    _add_io_args(p)
    p.add_argument("--bind", default=DEFAULT_BIND, metavar="HOST:PORT",
                   help=f"listen address (default {DEFAULT_BIND}; GBT_BIND wins)")
    p.add_argument("--max-attempts", type=int, default=3, metavar="N")
    p.set_defaults(fn=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    raise SystemExit(main())
