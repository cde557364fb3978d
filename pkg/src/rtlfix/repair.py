"""Run orchestration: localize, build the root states, search, verify, report."""
from __future__ import annotations

import difflib
import json
import math
import random
import shutil
import tempfile
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

from .adi.case import CaseConfig, load_case
from .adi.toolchain import Toolchain
from .adi.workspace import Patch, Workspace, apply_patch, apply_to_directory
from .llm import (BackendUnavailable, BudgetExceeded, ChatBackend, ChatParams, Gateway, ScriptedBackend,
                  ScriptExhausted, ScriptMismatch, TokenBudget)
from .localize import Evidence, LocalizeConfig, Localization, localize
from .search.agent import AgentContext
from .search.engine import SearchEngine
from .search.forest import AgentEnvironment, make_roots
from .search.heuristic import HeuristicConfig

DEFAULT_SECONDS = 600.0
DEFAULT_TOKENS = 1_000_000
DEFAULT_RETRIES = 10
GATEWAY_ERRORS = (BackendUnavailable, ScriptExhausted, ScriptMismatch)


@dataclass(frozen=True)
class RunBudget:
    seconds: float = DEFAULT_SECONDS
    tokens: int = DEFAULT_TOKENS
    seed: int = 0

    def __post_init__(self):
        if self.seconds < 0 or self.tokens < 0:
            raise ValueError("budget limits must be non-negative")


@dataclass
class RepairOptions:
    localize: LocalizeConfig = field(default_factory=LocalizeConfig)
    params: ChatParams = field(default_factory=ChatParams)
    workers: int = 1
    out_dir: Optional[Path] = None
    clock: Callable[[], float] = time.monotonic
    sim_timeout: Optional[float] = None
    skip_localization: bool = False


@dataclass
class RepairReport:
    outcome: str  # fixed | exhausted | error
    elapsed: float
    tokens_used: int
    expansions: int
    candidates: list[str]
    patch: Optional[list[Patch]]
    log_path: Optional[str]
    seed: int
    gateway_calls: int = 0
    verified: bool = False
    message: str = ""
    patch_path: Optional[str] = None
    diff_path: Optional[str] = None

    def to_dict(self) -> dict:
        out = asdict(self)
        out["patch"] = [p.to_dict() for p in self.patch] if self.patch is not None else None
        return out


class RunLog:
    """Append-only JSON-lines log."""

    def __init__(self, path: Optional[Path]):
        self.path = path
        self._lock = threading.Lock()
        self.records: list[dict] = []
        if path is not None:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text("", encoding="utf-8")

    def __call__(self, record: dict) -> None:
        with self._lock:
            self.records.append(record)
            if self.path is not None:
                with self.path.open("a", encoding="utf-8") as fh:
                    fh.write(json.dumps(record, default=str, sort_keys=True) + "\n")


def render_patch(patches: Sequence[Patch]) -> str:
    return "\n".join(p.render() for p in patches)


def unified_diff(case: CaseConfig, patches: Sequence[Patch]) -> str:
    original = {s: (case.root / s).read_text(encoding="utf-8") for s in case.sources}
    patched = dict(original)
    for p in patches:
        patched[p.file] = apply_patch(patched[p.file], p)
    out = []
    for path in case.sources:
        if patched[path] != original[path]:
            out.extend(difflib.unified_diff(original[path].splitlines(keepends=True),
                                            patched[path].splitlines(keepends=True),
                                            f"a/{path}", f"b/{path}"))
    return "".join(out)


def verify_patch(case_root: Path, patches: Sequence[Patch], sim_timeout: Optional[float] = None) -> bool:
    """Apply ``patches`` to a pristine copy of the case and re-run every
    testbench from scratch."""
    with tempfile.TemporaryDirectory(prefix="rtlfix-verify-") as tmp:
        copy = Path(tmp) / "case"
        shutil.copytree(case_root, copy)
        apply_to_directory(copy, patches)
        with Workspace(load_case(copy)) as ws:
            return Toolchain(ws, sim_timeout=sim_timeout).run_tests(ws.root).all_pass


def run_repair(case: CaseConfig, budget: RunBudget, heuristics: HeuristicConfig, backend: ChatBackend,
               options: Optional[RepairOptions] = None) -> RepairReport:
    opts = options or RepairOptions()
    clock = opts.clock
    start = clock()
    tokens = TokenBudget(budget.tokens, budget.seconds, clock=clock)
    gateway = Gateway(backend, tokens, opts.params)
    log_path = opts.out_dir / "run.jsonl" if opts.out_dir else None
    log = RunLog(log_path)
    log({"event": "start", "case": str(case.root), "seed": budget.seed, "budget_seconds": budget.seconds,
         "budget_tokens": budget.tokens, "heuristics": heuristics.to_dict(),
         "params": asdict(opts.params), "workers": opts.workers})
    loc_cfg = opts.localize
    if isinstance(backend, ScriptedBackend) and loc_cfg.fanout != 1:
        loc_cfg = LocalizeConfig(loc_cfg.tau, loc_cfg.k, 1, loc_cfg.max_lines, loc_cfg.retries)

    report = RepairReport("error", 0.0, 0, 0, [], None, str(log_path) if log_path else None, budget.seed)
    ws = Workspace(case)
    try:
        tc = Toolchain(ws, sim_timeout=opts.sim_timeout)
        loc: Localization
        if opts.skip_localization:
            loc = Localization([], None)
        else:
            try:
                loc = localize(ws, tc, gateway, loc_cfg)
            except BudgetExceeded:
                loc = Localization([], None)
        ev = loc.evidence
        if ev is None:
            ev = Evidence(compile=tc.compile(ws.root))
            if ev.compile.success:
                ev.tests = tc.run_tests(ws.root)
        report.candidates = [c.render() for c in loc.candidates]
        log({"event": "localization", "candidates": report.candidates,
             "scores": [{"file": s.segment.file, "start": s.segment.start, "end": s.segment.end,
                         "score": s.score, "scored": s.scored} for s in ev.scores]})

        roots = make_roots(loc.candidates, ws, ev.compile, ev.tests, heuristics)
        engine = SearchEngine(None, tokens, heuristics, random.Random(budget.seed), opts.workers, log=log)
        ctx = AgentContext(ws, tc, gateway, opts.params, should_stop=engine.stop.is_set)
        engine.env = AgentEnvironment(ctx)
        engine.add_roots(roots)
        outcome = engine.run()
        report.expansions = outcome.expansions
        if outcome.fixed:
            patches = outcome.patches
            verified = verify_patch(case.root, patches, opts.sim_timeout)
            report.patch = list(patches)
            report.verified = verified
            report.outcome = "fixed" if verified else "error"
            if not verified:
                report.message = "the patch set failed independent re-simulation"
        else:
            report.outcome = "exhausted"
            report.message = outcome.reason
            best = outcome.state
            if best is not None:
                log({"event": "best", "state": best.id, "score": best.f,
                     "counters": best.counters.to_dict()})
    except GATEWAY_ERRORS as exc:
        report.outcome = "error"
        report.message = f"{type(exc).__name__}: {exc}"
    finally:
        ws.close()

    report.elapsed = clock() - start
    report.tokens_used = tokens.used
    report.gateway_calls = gateway.call_count
    if report.patch is not None and opts.out_dir is not None:
        opts.out_dir.mkdir(parents=True, exist_ok=True)
        pp = opts.out_dir / "fix.patch"
        pp.write_text(render_patch(report.patch), encoding="utf-8")
        dp = opts.out_dir / "fix.diff"
        dp.write_text(unified_diff(case, report.patch), encoding="utf-8")
        report.patch_path, report.diff_path = str(pp), str(dp)
    log({"event": "end", **report.to_dict()})
    return report


# --------------------------------------------------------------------------
# pass@k
# --------------------------------------------------------------------------
def pass_at_k_estimator(n: int, c: int, k: int) -> float:
    """Unbiased estimate of the chance that one of k runs succeeds, from c
    successes in n runs."""
    if not 1 <= k <= n or not 0 <= c <= n:
        raise ValueError("need 1 <= k <= n and 0 <= c <= n")
    if n - c < k:
        return 1.0
    return 1.0 - math.comb(n - c, k) / math.comb(n, k)


@dataclass
class PassAtK:
    n: int
    c: int
    values: dict[int, float]
    reports: list[RepairReport]

    def to_dict(self) -> dict:
        return {"n": self.n, "c": self.c, "pass_at_k": {str(k): v for k, v in self.values.items()},
                "runs": [r.to_dict() for r in self.reports]}


def pass_at_k(case: CaseConfig, budget: RunBudget, heuristics: HeuristicConfig,
              backend_factory: Callable[[int], ChatBackend], n: int = DEFAULT_RETRIES,
              ks: Sequence[int] = (1,), options: Optional[RepairOptions] = None,
              concurrency: int = 1) -> PassAtK:
    """Run ``n`` independent repairs (seeds seed+0 .. seed+n-1) and estimate pass@k."""
    if not ks or any(not 1 <= k <= n for k in ks):
        raise ValueError("need n >= k >= 1")
    opts = options or RepairOptions()

    def one(i: int) -> RepairReport:
        run_opts = RepairOptions(opts.localize, opts.params, opts.workers,
                                 opts.out_dir / f"run{i:03d}" if opts.out_dir else None,
                                 opts.clock, opts.sim_timeout, opts.skip_localization)
        b = RunBudget(budget.seconds, budget.tokens, budget.seed + i)
        return run_repair(case, b, heuristics, backend_factory(i), run_opts)

    if concurrency <= 1:
        reports = [one(i) for i in range(n)]
    else:
        with ThreadPoolExecutor(max_workers=concurrency) as ex:
            reports = list(ex.map(one, range(n)))
    c = sum(r.outcome == "fixed" for r in reports)
    return PassAtK(n, c, {k: pass_at_k_estimator(n, c, k) for k in ks}, reports)
