"""Command line entry point: ``bmo run``, ``bmo check`` and ``bmo fdelta``."""
import argparse
import logging
import sys

from .envs import BUILTINS, builtin
from .harness import ConfigError, add_run_arguments, parse_config, run_experiment, write_report
from .oracle import NonAdmissibleDelta, f_delta, partition_check, playcount_check, point_scattering_check
from .trace import read_trace


def _cmd_run(args, argv):
    try:
        config = parse_config(argv)
    except ConfigError as exc:
        print(f"bmo run: {exc}", file=sys.stderr)
        return 2
    written = run_experiment(config)
    for c in written["checks"]:
        print(",".join(c.row()))
    print(f"wrote {len(written['traces'])} trace(s), report {written['report']}", file=sys.stderr)
    return 0 if all(c.status == "pass" for c in written["checks"]) else 1


def _cmd_check(args):
    checks = []
    for path in args.traces:
        trace = read_trace(path)
        if trace.algo == "z":
            found = [playcount_check(trace)]
        else:
            found = [point_scattering_check(trace)]
            if trace.algo == "p":
                found.append(partition_check(trace))
        for c in found:
            checks.append(type(c)(f"{c.checker}[{path}]", c.status, c.estimate, c.bound, c.margin, c.detail))
    if args.report:
        write_report(checks, args.report)
    print("checker,status,estimate,bound,margin")
    for c in checks:
        print(",".join(c.row()))
        if c.detail and c.status != "pass":
            print(f"  {c.detail}", file=sys.stderr)
    return 0 if all(c.passed for c in checks) else 1


def _cmd_fdelta(args):
    env = builtin(args.env, dim=args.dim, value=args.value)
    print("delta,f_delta,level_measure,admissible,bracket_lo,bracket_hi")
    status = 0
    for delta in args.delta:
        try:
            rep = f_delta(env, delta, raw=args.raw)
        except NonAdmissibleDelta as exc:
            rep = exc.report
            status = 1
        print(f"{delta:g},{rep.f_delta:.10g},{rep.g_hi:.10g},{str(rep.admissible).lower()},"
              f"{rep.bracket[0]:.10g},{rep.bracket[1]:.10g}")
    return status


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = argparse.ArgumentParser(prog="bmo", description="Bandits with BMO rewards")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run seeded replications and write traces, ledgers and a report")
    add_run_arguments(p_run)

    p_check = sub.add_parser("check", help="run the trace checkers on trace CSV files")
    p_check.add_argument("traces", nargs="+")
    p_check.add_argument("--report", help="also write the report CSV here")

    p_fd = sub.add_parser("fdelta", help="print the f_delta table for an environment")
    p_fd.add_argument("--env", required=True, choices=BUILTINS)
    p_fd.add_argument("--delta", type=float, nargs="+", default=[0.5, 0.1, 0.01])
    p_fd.add_argument("--dim", type=int)
    p_fd.add_argument("--value", type=float, default=0.0)
    p_fd.add_argument("--raw", action="store_true", help="report on the uncentred reward")

    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "run":
        rest = [a for a in argv if a not in ("-v", "--verbose")]
        return _cmd_run(args, rest[rest.index("run") + 1:])
    if args.command == "check":
        return _cmd_check(args)
    return _cmd_fdelta(args)


if __name__ == "__main__":
    sys.exit(main())
