"""Multi-agent fault localization: score code segments independently, keep
the confident ones, then let one more agent call prune the list."""
from __future__ import annotations

import re
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .adi.toolchain import CompileReport, SimReport, Toolchain
from .adi.workspace import CodeBranch, Workspace
from .llm import ChatMessage, Gateway, system, user
from .netlint import LintDiagnostic, render
from .verilog import SourceAST, UnsupportedConstruct, VerilogSyntaxError, parse_source
from .verilog.segment import CodeSegment, render_segment, segment, text_digest
from .waveform import TRUNCATED, Mismatch, mismatch_summary

DEFAULT_TAU = 6
DEFAULT_K = 5
DEFAULT_FANOUT = 4

_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_$]*")
_QUOTED = re.compile(r"'([A-Za-z_][A-Za-z0-9_$]*)'")
_SCORE = re.compile(r"^\W*score\W*?[:=]\s*\D*?(-?\d+)", re.IGNORECASE | re.MULTILINE)
_LINES = re.compile(r"^\W*lines?\W*?[:=](.*)$", re.IGNORECASE | re.MULTILINE)
_REASON = re.compile(r"^\W*(?:reason|rationale)\W*?[:=]\s*(.*)$", re.IGNORECASE | re.MULTILINE)
_KEEP = re.compile(r"^\W*keep\W*?[:=](.*)$", re.IGNORECASE | re.MULTILINE)

SCORER_SYSTEM = (
    "You review one fragment of a Verilog design that fails its regression. "
    "Judge how likely it is that this fragment contains the fault behind the reported errors. "
    "Answer in exactly three lines:\n"
    "score: <integer 0-10>\n"
    "lines: <comma-separated suspicious line numbers, or none>\n"
    "reason: <one sentence>"
)
FILTER_SYSTEM = (
    "You check candidate fault locations in a Verilog design against the observed failure. "
    "Keep only candidates that could logically cause it. "
    "Answer with one line such as 'keep: 1, 3' or 'keep: none'."
)
REASK = "Your reply did not contain a line of the form 'score: N'. Reply again using the required format."


@dataclass(frozen=True)
class LocalizeConfig:
    tau: int = DEFAULT_TAU
    k: int = DEFAULT_K
    fanout: int = DEFAULT_FANOUT
    max_lines: int = 60
    retries: int = 1  # re-asks shared by all views of one localization


@dataclass(frozen=True)
class LocalView:
    segment: CodeSegment
    code: str
    context: str
    prompt: str


@dataclass(frozen=True)
class AnomalyScore:
    segment: CodeSegment
    score: int
    lines: tuple[int, ...] = ()
    rationale: str = ""
    scored: bool = True


@dataclass(frozen=True)
class FaultCandidate:
    file: str
    line: int
    segment: CodeSegment
    score: int
    rationale: str = ""

    def render(self) -> str:
        return f"{self.file}:{self.line} (score {self.score}): {self.rationale or 'no rationale given'}"


@dataclass
class Evidence:
    compile: Optional[CompileReport] = None
    tests: Optional[SimReport] = None
    mismatches: list[Mismatch] = field(default_factory=list)
    segments: list[CodeSegment] = field(default_factory=list)
    scores: list[AnomalyScore] = field(default_factory=list)
    aggregated: list[FaultCandidate] = field(default_factory=list)

    @property
    def diagnostics(self) -> list[LintDiagnostic]:
        return list(self.compile.diagnostics) if self.compile else []


@dataclass
class Localization:
    candidates: list[FaultCandidate]
    evidence: Evidence


class RetryPool:
    def __init__(self, size: int):
        self.left = size
        self._lock = threading.Lock()

    def take(self) -> bool:
        with self._lock:
            if self.left <= 0:
                return False
            self.left -= 1
            return True


# --------------------------------------------------------------------------
# views
# --------------------------------------------------------------------------
def identifiers(text: str) -> set[str]:
    return set(_IDENT.findall(text))


def related(diag: LintDiagnostic, seg: CodeSegment, names: set[str]) -> bool:
    if diag.file == seg.file and seg.contains(diag.line):
        return True
    if diag.net and diag.net in names:
        return True
    return bool(set(_QUOTED.findall(diag.message)) & names)


def failure_summary(tests: Optional[SimReport], mismatches: Sequence[Mismatch], max_signals: int = 5) -> str:
    """Global error context shared by every local view."""
    parts = []
    real = [m for m in mismatches if m.signal != TRUNCATED]
    if real or not tests:
        parts.append(mismatch_summary(list(mismatches), max_signals))
    if tests:
        for r in tests.results:
            if r.timed_out:
                parts.append(f"Testbench {r.name} timed out; the design may loop forever.")
            elif r.crashed:
                parts.append(f"Testbench {r.name} failed to run: {r.message.splitlines()[0] if r.message else ''}")
    return "\n".join(parts)


def build_local_views(segments: Sequence[CodeSegment], diagnostics: Sequence[LintDiagnostic],
                      summary: str, sources: dict[str, str]) -> list[LocalView]:
    views = []
    for seg in segments:
        code = render_segment(seg, 0, sources[seg.file])
        names = identifiers(seg.text)
        diags = [d for d in diagnostics if related(d, seg, names)]
        context = summary
        if diags:
            context = "Lint and compiler messages:\n" + render(diags) + "\n" + summary
        prompt = (f"Module {seg.module}, file {seg.file}, lines {seg.start}-{seg.end}:\n{code}\n\n"
                  f"Observed errors:\n{context}")
        views.append(LocalView(seg, code, context, prompt))
    return views


def line_segments(path: str, text: str, max_lines: int) -> list[CodeSegment]:
    """Fixed-size chunks, used when a file cannot be parsed."""
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    out = []
    digest = text_digest(text)
    for i, start in enumerate(range(0, len(lines), max_lines)):
        chunk = lines[start:start + max_lines]
        out.append(CodeSegment(path, start + 1, start + len(chunk), "\n".join(chunk), (i,), "", digest))
    return out


def segments_for(texts: list[tuple[str, str]], max_lines: int) -> list[CodeSegment]:
    try:
        ast: SourceAST = parse_source(texts)
    except (VerilogSyntaxError, UnsupportedConstruct):
        return [s for p, t in texts for s in line_segments(p, t, max_lines)]
    return segment(ast, max_lines)


# --------------------------------------------------------------------------
# scoring
# --------------------------------------------------------------------------
def parse_score(reply: str, seg: Optional[CodeSegment] = None) -> Optional[AnomalyScore]:
    m = _SCORE.search(reply)
    if not m:
        return None
    score = max(0, min(10, int(m.group(1))))
    lines: list[int] = []
    lm = _LINES.search(reply)
    if lm:
        for tok in re.findall(r"\d+", lm.group(1)):
            n = int(tok)
            if (seg is None or seg.contains(n)) and n not in lines:
                lines.append(n)
    rm = _REASON.search(reply)
    return AnomalyScore(seg, score, tuple(lines), rm.group(1).strip() if rm else "")


def score_view(view: LocalView, gateway: Gateway, pool: Optional[RetryPool] = None) -> AnomalyScore:
    history = [system(SCORER_SYSTEM), user(view.prompt)]
    reply, _ = gateway.chat(history, ())
    parsed = parse_score(reply.content, view.segment)
    if parsed is None and pool is not None and pool.take():
        history += [ChatMessage("assistant", reply.content), user(REASK)]
        reply, _ = gateway.chat(history, ())
        parsed = parse_score(reply.content, view.segment)
    if parsed is None:
        return AnomalyScore(view.segment, 0, (), "unparseable reply", scored=False)
    return parsed


def aggregate(scores: Sequence[AnomalyScore], tau: int = DEFAULT_TAU, k: int = DEFAULT_K) -> list[FaultCandidate]:
    """Top-k confident segments, expanded to per-line candidates (at most k)."""
    kept = [s for s in scores if s.scored and s.score >= tau]
    kept.sort(key=lambda s: (-s.score, s.segment.file, s.segment.start))
    out: list[FaultCandidate] = []
    for s in kept[:k]:
        lines = [n for n in s.lines if s.segment.contains(n)] or [s.segment.start]
        for n in lines:
            out.append(FaultCandidate(s.segment.file, n, s.segment, s.score, s.rationale))
    return out[:k]


def filter_prompt(candidates: Sequence[FaultCandidate], summary: str, sources: dict[str, str]) -> str:
    rows = []
    for i, c in enumerate(candidates, 1):
        src = sources.get(c.file, "").split("\n")
        code = src[c.line - 1].strip() if 0 < c.line <= len(src) else ""
        rows.append(f"{i}. {c.file}:{c.line}: {code}\n   score {c.score}; {c.rationale}")
    return "Observed failure:\n" + summary + "\n\nCandidates:\n" + "\n".join(rows)


def parse_keep(reply: str, count: int) -> Optional[list[int]]:
    m = _KEEP.search(reply)
    if not m:
        return None
    body = m.group(1).strip().lower()
    if body.startswith("none"):
        return []
    picks = sorted({int(t) for t in re.findall(r"\d+", body) if 1 <= int(t) <= count})
    return [p - 1 for p in picks] or None


def filter_candidates(candidates: Sequence[FaultCandidate], summary: str, sources: dict[str, str],
                      gateway: Gateway) -> list[FaultCandidate]:
    if not candidates:
        return []
    reply, _ = gateway.chat([system(FILTER_SYSTEM), user(filter_prompt(candidates, summary, sources))], ())
    keep = parse_keep(reply.content, len(candidates))
    if keep is None:
        return list(candidates)
    return [candidates[i] for i in keep]


def localize(ws: Workspace, toolchain: Toolchain, gateway: Gateway, cfg: LocalizeConfig = LocalizeConfig(),
             branch: Optional[CodeBranch] = None) -> Localization:
    branch = branch or ws.root
    ev = Evidence(compile=toolchain.compile(branch))
    if ev.compile.success:
        ev.tests = toolchain.run_tests(branch)
        ev.mismatches = ev.tests.mismatches
    failing = ev.tests is None or not ev.tests.all_pass
    if not failing and not ev.diagnostics:
        return Localization([], ev)
    texts = ws.texts(branch)
    sources = dict(texts)
    ev.segments = segments_for(texts, cfg.max_lines)
    summary = failure_summary(ev.tests, ev.mismatches)
    views = build_local_views(ev.segments, ev.diagnostics, summary, sources)
    pool = RetryPool(cfg.retries)
    if cfg.fanout <= 1 or len(views) <= 1:
        ev.scores = [score_view(v, gateway, pool) for v in views]
    else:
        with ThreadPoolExecutor(max_workers=cfg.fanout) as ex:
            ev.scores = list(ex.map(lambda v: score_view(v, gateway, pool), views))
    ev.aggregated = aggregate(ev.scores, cfg.tau, cfg.k)
    return Localization(filter_candidates(ev.aggregated, summary, sources, gateway), ev)


def candidates_section(candidates: Sequence[FaultCandidate]) -> str:
    if not candidates:
        return ""
    return "Suspected fault locations:\n" + "\n".join(f"- {c.render()}" for c in candidates)
