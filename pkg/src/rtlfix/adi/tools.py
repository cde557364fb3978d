"""Tool registry and validated dispatch for the repair agent."""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Callable, Optional

import jsonschema

from ..llm import ToolCall, ToolParam, ToolSchema
from ..verilog.segment import render_lines
from ..waveform import TRUNCATED, render_window
from .toolchain import CompileReport, SimReport, Toolchain
from .workspace import CodeBranch, Patch, PatchError, Workspace

MAX_RESULT_LINES = 50
SEARCH_WINDOWS = 5


class IllegalArguments(Exception):
    """Arguments passed the schema but make no sense for the tool."""


@dataclass
class InvocationCounters:
    total: int = 0
    illegal: int = 0
    queries: int = 0

    @property
    def unusable(self) -> float:
        return self.illegal / self.total if self.total else 0.0


@dataclass
class ToolResult:
    text: str
    legal: bool = True
    ok: bool = True  # the tool did what was asked
    tool: str = ""


@dataclass
class ToolSession:
    """Per-state tool context: the working branch plus what has happened to it."""

    ws: Workspace
    toolchain: Toolchain
    branch: CodeBranch
    counters: InvocationCounters = field(default_factory=InvocationCounters)
    patches: list[Patch] = field(default_factory=list)
    last_compile: Optional[CompileReport] = None
    last_tests: Optional[SimReport] = None
    fixed_claim: Optional[bool] = None
    investigation_open: bool = True

    def apply(self, patch: Patch) -> CodeBranch:
        patch = self.ws.normalize(patch)
        self.branch = self.ws.create_branch(self.branch, [patch])
        self.patches.append(patch)
        return self.branch


def truncate(text: str, limit: int = MAX_RESULT_LINES) -> str:
    lines = text.split("\n")
    if len(lines) <= limit:
        return text
    return "\n".join(lines[:limit] + [f"... ({len(lines) - limit} more lines truncated)"])


# --------------------------------------------------------------------------
# handlers
# --------------------------------------------------------------------------
def _pick_file(session: ToolSession, name: Optional[str]) -> str:
    if name is None:
        if len(session.ws.sources) == 1:
            return session.ws.sources[0]
        raise IllegalArguments(f"'file' is required; choose one of {session.ws.sources}")
    try:
        return session.ws.resolve_source(name)
    except PatchError as exc:
        raise IllegalArguments(str(exc)) from None


_STRING_LIT = re.compile(r'"(?:\\.|[^"\\])*"')


def search_code(texts: list[tuple[str, str]], term: str, radius: int = 3,
                windows: int = SEARCH_WINDOWS) -> list[tuple[str, int, int, int]]:
    """Windows ``(file, first, last, hits)`` around case-insensitive matches
    of ``term`` in identifiers and comments, best first."""
    needle = term.lower()
    hits: dict[str, dict[int, int]] = {}
    for path, text in texts:
        for n, line in enumerate(text.split("\n"), 1):
            c = _STRING_LIT.sub("", line).lower().count(needle)
            if c:
                hits.setdefault(path, {})[n] = c
    cands = []
    for path, per_line in hits.items():
        for n in per_line:
            lo, hi = max(1, n - radius), n + radius
            score = sum(c for m, c in per_line.items() if lo <= m <= hi)
            cands.append((-score, path, n, lo, hi))
    cands.sort()
    chosen: list[tuple[str, int, int, int]] = []
    for neg, path, _, lo, hi in cands:
        if any(p == path and lo <= h and l <= hi for p, l, h, _ in chosen):
            continue
        chosen.append((path, lo, hi, -neg))
        if len(chosen) == windows:
            break
    return chosen


def _query_code(session: ToolSession, args: dict) -> ToolResult:
    line, term = args.get("line"), args.get("search")
    if (line is None) == (term is None):
        raise IllegalArguments("give exactly one of 'line' or 'search'")
    if line is not None:
        radius = args.get("radius", 5)
        path = _pick_file(session, args.get("file"))
        text = session.ws.text(session.branch, path)
        nlines = len(text.rstrip("\n").split("\n"))
        if line > nlines:
            return ToolResult(f"{path} has only {nlines} lines.", ok=False)
        return ToolResult(f"== {path} ==\n" + render_lines(text, line - radius, line + radius))
    radius = args.get("radius", 3)
    texts = session.ws.texts(session.branch)
    if args.get("file") is not None:
        path = _pick_file(session, args["file"])
        texts = [(p, t) for p, t in texts if p == path]
    found = search_code(texts, term, radius)
    if not found:
        return ToolResult(f"No matches for {term!r} in the design sources.", ok=False)
    sources = dict(texts)
    parts = [f"== {p} lines {lo}-{min(hi, len(sources[p].rstrip(chr(10)).split(chr(10))))} "
             f"({n} match{'es' if n != 1 else ''}) ==\n" + render_lines(sources[p], lo, hi)
             for p, lo, hi, n in found]
    return ToolResult("\n".join(parts))


def _query_waveform(session: ToolSession, args: dict) -> ToolResult:
    tc = session.toolchain
    try:
        tb = tc.testbench(args.get("testbench"))
    except KeyError:
        raise IllegalArguments(f"unknown testbench; choose one of {[t.name for t in tc.case.testbenches]}") \
            from None
    result = tc.simulate(session.branch, tb)
    actual = tc.trace(session.branch, tb)
    if actual is None:
        return ToolResult("No waveform available: " + result.render(), ok=False)
    golden = tc.golden(tb)
    signals = args.get("signals") or tc.signals(tb)
    if not signals:
        clk = golden.resolve(tc.case.clock)
        signals = sorted(n for n in golden.signals if n != clk)
    missing = [s for s in signals if golden.resolve(s) is None]
    if missing:
        return ToolResult(f"Signals not in the golden trace: {', '.join(missing)}", ok=False)
    if "cycle" in args:
        center = args["cycle"]
    else:
        real = [m for m in result.mismatches if m.signal != TRUNCATED]
        center = real[0].cycle if real else 0
    radius = args.get("radius", 3)
    table = render_window(actual, golden, signals, center, radius, tc.case.clock, tc.case.edge)
    return ToolResult(f"Testbench {tb.name}, cycles around {center} (* marks a difference):\n{table}")


def _compile(session: ToolSession, args: dict) -> ToolResult:
    report = session.toolchain.compile(session.branch)
    session.last_compile = report
    return ToolResult(report.render(), ok=report.success)


def _run_tests(session: ToolSession, args: dict) -> ToolResult:
    report = session.toolchain.run_tests(session.branch)
    session.last_tests = report
    return ToolResult(report.render(), ok=report.all_pass)


def _apply_patch(session: ToolSession, args: dict) -> ToolResult:
    try:
        branch = session.apply(Patch(args["file"], args["search"], args["replace"]))
    except PatchError as exc:
        return ToolResult(f"{type(exc).__name__}: {exc}", ok=False)
    return ToolResult(f"Patch applied to {session.patches[-1].file} (branch {branch.id}).")


def _report_fixed(session: ToolSession, args: dict) -> ToolResult:
    report = session.toolchain.run_tests(session.branch)
    session.last_tests = report
    session.fixed_claim = report.all_pass
    if report.all_pass:
        return ToolResult(f"Verified: all {report.total} testbenches pass.")
    return ToolResult("Not fixed: " + report.render(), ok=False)


@dataclass(frozen=True)
class ToolSpec:
    schema: ToolSchema
    handler: Callable[[ToolSession, dict], ToolResult]
    is_query: bool = False


def _spec(name, desc, params, handler, is_query=False) -> ToolSpec:
    return ToolSpec(ToolSchema(name, desc, tuple(params)), handler, is_query)


REGISTRY: dict[str, ToolSpec] = {s.schema.name: s for s in [
    _spec("query_code", "Show source lines around a line number, or search identifiers and comments.",
          [ToolParam("file", "string", False, "source file (optional when there is only one)"),
           ToolParam("line", "integer", False, "centre line", minimum=1),
           ToolParam("radius", "integer", False, "lines of context each side", minimum=0),
           ToolParam("search", "string", False, "case-insensitive search text", min_length=1)],
          _query_code, True),
    _spec("query_waveform", "Show actual and golden signal values around a clock cycle.",
          [ToolParam("testbench", "string", False, "testbench name (default: the first)"),
           ToolParam("signals", "array", False, "signal names", items="string"),
           ToolParam("cycle", "integer", False, "centre cycle (default: first mismatch)", minimum=0),
           ToolParam("radius", "integer", False, "cycles each side", minimum=0)],
          _query_waveform, True),
    _spec("compile", "Lint and compile the current design.", [], _compile),
    _spec("run_tests", "Simulate every testbench and compare against the golden waveforms.", [], _run_tests),
    _spec("apply_patch", "Replace one exact, unique block of text in a source file.",
          [ToolParam("file", "string", True, "source file"),
           ToolParam("search", "string", True, "exact text to replace (must occur once)", min_length=1),
           ToolParam("replace", "string", True, "replacement text")],
          _apply_patch),
    _spec("report_fixed", "Claim the bug is fixed; this is checked by simulation.", [], _report_fixed),
]}

TOOL_NAMES = tuple(REGISTRY)
QUERY_TOOLS = frozenset(n for n, s in REGISTRY.items() if s.is_query)
_VALIDATORS = {n: jsonschema.Draft7Validator(s.schema.json_schema()) for n, s in REGISTRY.items()}


def schemas() -> list[ToolSchema]:
    return [s.schema for s in REGISTRY.values()]


def parse_arguments(raw) -> dict:
    if isinstance(raw, dict):
        return raw
    if raw is None or (isinstance(raw, str) and not raw.strip()):
        return {}
    try:
        args = json.loads(raw)
    except (TypeError, ValueError) as exc:
        raise IllegalArguments(f"arguments are not valid JSON: {exc}") from None
    if not isinstance(args, dict):
        raise IllegalArguments("arguments must be a JSON object")
    return args


def dispatch_tool(call: ToolCall, session: ToolSession) -> ToolResult:
    """Validate and run one tool call.  Never raises: every failure becomes
    text for the agent.  Illegal names or arguments count against U."""
    c = session.counters
    c.total += 1
    spec = REGISTRY.get(call.name) if isinstance(call.name, str) else None
    if spec is None:
        c.illegal += 1
        return ToolResult(f"Unknown tool {call.name!r}. Available tools: {', '.join(TOOL_NAMES)}.",
                          legal=False, ok=False, tool=str(call.name))
    try:
        args = parse_arguments(call.arguments)
        errors = sorted(_VALIDATORS[call.name].iter_errors(args), key=lambda e: list(e.path))
        if errors:
            raise IllegalArguments("; ".join(e.message for e in errors[:3]))
        args = {k: int(v) if isinstance(v, float) else v for k, v in args.items()}
        if spec.is_query and not session.investigation_open:
            return ToolResult("The investigation limit for this step is reached; propose a patch.",
                              ok=False, tool=call.name)
        result = spec.handler(session, args)
    except IllegalArguments as exc:
        c.illegal += 1
        return ToolResult(f"Illegal arguments for {call.name}: {exc}", legal=False, ok=False, tool=call.name)
    except Exception as exc:  # noqa: BLE001 - tool failures are reported, not raised
        result = ToolResult(f"{call.name} failed: {type(exc).__name__}: {exc}", ok=False)
    result.tool = call.name
    if spec.is_query and result.ok:
        c.queries += 1
    result.text = truncate(result.text)
    return result
