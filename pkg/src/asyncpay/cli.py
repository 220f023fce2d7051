"""Command line: ``asyncpay {simulate,bench,check,consensus-demo}``.

Exit codes: 0 success or consistent, 1 invariant breach / violation found,
2 bad configuration or trace, 3 step cap exceeded, 4 checker budget exhausted.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import bench as bench_mod
from . import checker, consensus_demo, simnet
from .history import History, TraceError
from .scenario import bundled, load_config
from .simnet import ByzantineSpec, ConfigError, StepCapExceeded

EXIT_OK, EXIT_VIOLATION, EXIT_CONFIG, EXIT_STEPCAP, EXIT_UNKNOWN = 0, 1, 2, 3, 4


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _resolve_config(name: str) -> Path:
    path = Path(name)
    if path.exists():
        return path
    try:
        return bundled(name)
    except FileNotFoundError:
        raise ConfigError(f"no such scenario file or bundled scenario: {name}")


def _byzantine_specs(text: str) -> list[ByzantineSpec]:
    specs = []
    for item in text.split(","):
        if not item.strip():
            continue
        pid, _, behavior = item.partition(":")
        try:
            specs.append(ByzantineSpec(int(pid), behavior or "crash"))
        except ValueError:
            raise ConfigError(f"bad --byzantine entry {item!r}; use PID:BEHAVIOR")
    return specs


def cmd_simulate(args) -> int:
    try:
        cfg = load_config(_resolve_config(args.config), seed=args.seed)
        if args.byzantine:
            extra = _byzantine_specs(args.byzantine)
            cfg.byzantine = [b for b in cfg.byzantine
                             if b.process not in {e.process for e in extra}] + extra
            cfg.validate()
        result = simnet.run(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StepCapExceeded as exc:
        print(f"step cap exceeded: {exc}", file=sys.stderr)
        return EXIT_STEPCAP
    if args.trace_out:
        result.history.save(args.trace_out)
    if args.metrics_out:
        Path(args.metrics_out).write_text(result.metrics.to_csv(), encoding="utf-8")
    kinds: dict[str, int] = {}
    for m in result.metrics.ops.values():
        kinds[m.op_kind] = kinds.get(m.op_kind, 0) + m.msgs_correct
    print(f"steps: {result.steps}")
    print(f"operations: {result.history.correct_ops()} correct, "
          f"{len(result.unstarted)} never started")
    for kind in sorted(kinds):
        print(f"messages[{kind}]: {kinds[kind]}")
    ref = result.correct_nodes[0].ledger.snapshot() if result.correct_nodes else {}
    print("balances: " + " ".join(f"{a}={v}" for a, v in ref.items()))
    if result.violations:
        for v in result.violations:
            print(f"INVARIANT BREACH: {v}")
        return EXIT_VIOLATION
    print("invariants: ok")
    return EXIT_OK


def cmd_bench(args) -> int:
    try:
        rows, exponent = bench_mod.bench(args.n, args.reps, args.seed)
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    text = bench_mod.to_csv(rows, exponent)
    if args.metrics_out:
        Path(args.metrics_out).write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return EXIT_OK


def cmd_check(args) -> int:
    try:
        hist = History.load(args.trace)
    except (OSError, TraceError) as exc:
        print(f"trace error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if not hist.well_formed():
        print("trace error: invocations and responses do not alternate", file=sys.stderr)
        return EXIT_CONFIG
    byz = args.byzantine if args.byzantine is not None else hist.byzantine
    verdict = checker.check_bsc(hist, byz, budget=args.budget)
    print(verdict.report())
    return {"consistent": EXIT_OK, "violation": EXIT_VIOLATION}.get(verdict.status, EXIT_UNKNOWN)


def cmd_consensus(args) -> int:
    kinds = consensus_demo.KINDS if args.object == "both" else (args.object,)
    status = EXIT_OK
    for kind in kinds:
        report = consensus_demo.explore_all_schedules(kind, args.mutation)
        print(report.summary())
        if not report.ok:
            status = EXIT_VIOLATION
    return status


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="asyncpay", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a scenario")
    p.add_argument("--config", required=True, help="scenario YAML or bundled scenario name")
    p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    p.add_argument("--byzantine", default="", help="extra faults, e.g. 3:crash,5:overspender")
    p.add_argument("--trace-out")
    p.add_argument("--metrics-out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("bench", help="messages per operation across n")
    p.add_argument("--n", type=_int_list, default=[4, 7, 10, 13, 16])
    p.add_argument("--reps", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--metrics-out")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("check", help="check a history trace")
    p.add_argument("trace")
    p.add_argument("--byzantine", type=_int_list, default=None,
                   help="Byzantine process ids (default: from the trace header)")
    p.add_argument("--budget", type=int, default=checker.DEFAULT_BUDGET)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("consensus-demo", help="explore the two-process reduction")
    p.add_argument("--object", choices=[*consensus_demo.KINDS, "both"], default="both")
    p.add_argument("--mutation", choices=consensus_demo.MUTATIONS, default=None)
    p.set_defaults(func=cmd_consensus)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
