"""Command-line driver: ``python -m rtlfix.sim {lint,run} --top NAME FILES...``.

Diagnostics go to stderr as ``path:line: severity: message``.  Exit status is
0 on success, 1 on compile errors and 2 on runtime errors.
"""
from __future__ import annotations

import argparse
import sys

from .runner import lint, simulate


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="python -m rtlfix.sim")
    sub = parser.add_subparsers(dest="cmd", required=True)
    p_lint = sub.add_parser("lint", help="parse and elaborate a design")
    p_lint.add_argument("--top", required=True)
    p_lint.add_argument("files", nargs="+")
    p_run = sub.add_parser("run", help="simulate a testbench")
    p_run.add_argument("--top", required=True)
    p_run.add_argument("--vcd", default=None)
    p_run.add_argument("--max-time", type=int, default=None)
    p_run.add_argument("files", nargs="+")
    args = parser.parse_args(argv)

    try:
        if args.cmd == "lint":
            result = lint(args.files, args.top)
        else:
            result = simulate(args.files, args.top, args.vcd, sys.stdout, args.max_time)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for d in result.diagnostics:
        print(d.render(), file=sys.stderr)
    sys.stdout.flush()
    if result.status == "compile_error":
        return 1
    if result.status == "runtime_error":
        print(f"error: {result.message}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
