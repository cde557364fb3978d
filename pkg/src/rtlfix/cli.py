"""``rtlfix`` command line: ``repair`` one case or ``evaluate`` pass@k over retries.

Exit status: 0 fixed, 1 budget exhausted (or no fix in any retry), 2 error.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional

from .adi.case import CaseInvalid, load_case, tomllib
from .adi.toolchain import ToolchainMissing
from .llm import ChatParams, OpenAICompatibleBackend, ScriptedBackend
from .localize import LocalizeConfig
from .repair import (DEFAULT_RETRIES, DEFAULT_SECONDS, DEFAULT_TOKENS, RepairOptions, RunBudget, pass_at_k,
                     run_repair)
from .search.heuristic import HeuristicConfig

EXIT_FIXED, EXIT_EXHAUSTED, EXIT_ERROR = 0, 1, 2


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--case", required=True, help="case directory containing case.toml")
    p.add_argument("--budget-seconds", type=float, default=DEFAULT_SECONDS)
    p.add_argument("--budget-tokens", type=int, default=DEFAULT_TOKENS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", help="TOML file with [heuristic], [localize] and [llm] tables")
    p.add_argument("--llm-endpoint", help="OpenAI-compatible base URL")
    p.add_argument("--model", help="model name sent to the endpoint")
    p.add_argument("--mock-script", help="YAML script for the offline scripted backend")
    p.add_argument("--workers", type=int, default=1, help="concurrent expansions")
    p.add_argument("--out", help="directory for the run log, patch and diff")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rtlfix", description="LLM-driven Verilog bug repair")
    sub = parser.add_subparsers(dest="cmd", required=True)
    _common(sub.add_parser("repair", help="repair one case"))
    ev = sub.add_parser("evaluate", help="estimate pass@k over seeded retries")
    _common(ev)
    ev.add_argument("--retries", type=int, default=DEFAULT_RETRIES)
    ev.add_argument("--k", default="1", help="comma-separated k values, e.g. 1,5")
    return parser


def load_config(path: Optional[str]) -> dict:
    if not path:
        return {}
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def make_backend(args, llm_cfg: dict):
    if args.mock_script:
        return lambda i: ScriptedBackend.from_file(args.mock_script)
    endpoint = args.llm_endpoint or llm_cfg.get("endpoint")
    if not endpoint:
        raise SystemExit("either --mock-script or --llm-endpoint is required")
    model = args.model or llm_cfg.get("model")
    return lambda i: OpenAICompatibleBackend(endpoint, model)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        case = load_case(args.case)
        heur = HeuristicConfig.from_dict(cfg.get("heuristic", {}))
        llm_cfg = cfg.get("llm", {})
        params = ChatParams(model=args.model or llm_cfg.get("model", ChatParams.model),
                            temperature=float(llm_cfg.get("temperature", ChatParams.temperature)),
                            seed=llm_cfg.get("seed"))
        opts = RepairOptions(localize=LocalizeConfig(**cfg.get("localize", {})), params=params,
                             workers=args.workers, out_dir=Path(args.out) if args.out else None)
        budget = RunBudget(args.budget_seconds, args.budget_tokens, args.seed)
    except (CaseInvalid, OSError, tomllib.TOMLDecodeError, TypeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    factory = make_backend(args, llm_cfg)
    try:
        if args.cmd == "repair":
            report = run_repair(case, budget, heur, factory(0), opts)
            print(json.dumps(report.to_dict(), indent=2, default=str))
            return {"fixed": EXIT_FIXED, "exhausted": EXIT_EXHAUSTED}.get(report.outcome, EXIT_ERROR)
        ks = [int(k) for k in args.k.split(",") if k.strip()]
        result = pass_at_k(case, budget, heur, factory, args.retries, ks, opts)
    except (ToolchainMissing, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    print(json.dumps(result.to_dict(), indent=2, default=str))
    if any(r.outcome == "error" for r in result.reports) and result.c == 0:
        return EXIT_ERROR
    return EXIT_FIXED if result.c else EXIT_EXHAUSTED


if __name__ == "__main__":
    sys.exit(main())
