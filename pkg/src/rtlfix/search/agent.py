"""One expansion of the patch agent: a conversation driven from one decision
node to the next.

Nodes::

    Decision -> Investigate (query tools, at most 3 rounds) | ProposePatch
    ProposePatch -> ApplyAndCompile
    ApplyAndCompile -> FixCompile (compile errors, at most 2 attempts) | SimulateAndCompare
    FixCompile -> SimulateAndCompare | Decision (errors left unsolved)
    SimulateAndCompare -> Decision
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

from ..adi.toolchain import Toolchain
from ..adi.tools import InvocationCounters, ToolSession, dispatch_tool, schemas, truncate
from ..adi.workspace import CodeBranch, Patch, Workspace
from ..llm import ChatMessage, ChatParams, Gateway, tool_result, user
from . import prompts
from .heuristic import StateCounters

DECISION = "Decision"
INVESTIGATE = "Investigate"
PROPOSE = "ProposePatch"
APPLY = "ApplyAndCompile"
FIX_COMPILE = "FixCompile"
SIMULATE = "SimulateAndCompare"
NODES = (DECISION, INVESTIGATE, PROPOSE, APPLY, FIX_COMPILE, SIMULATE)

ROUND_CAP = 8
INVESTIGATE_CAP = 3
FIX_CAP = 2


class Cancelled(Exception):
    """The search no longer needs this expansion."""


@dataclass
class AgentContext:
    ws: Workspace
    toolchain: Toolchain
    gateway: Gateway
    params: Optional[ChatParams] = None
    round_cap: int = ROUND_CAP
    investigate_cap: int = INVESTIGATE_CAP
    fix_cap: int = FIX_CAP
    should_stop: Callable[[], bool] = lambda: False


@dataclass
class StepResult:
    branch: CodeBranch  # working branch at the end of the expansion
    history: tuple[ChatMessage, ...]
    counters: StateCounters
    patches: list[Patch]
    nodes: list[str] = field(default_factory=list)
    rounds: int = 0
    fixed_claim: Optional[bool] = None
    dead_end: bool = False


def agent_step(branch: CodeBranch, history: tuple[ChatMessage, ...], counters: StateCounters,
               ctx: AgentContext) -> StepResult:
    """Resume the conversation at a decision node and run it to the next one.

    Raises BudgetExceeded (from the gateway) or Cancelled; the caller then
    discards the partial expansion.
    """
    tc = ctx.toolchain
    session = ToolSession(ctx.ws, tc, branch, InvocationCounters(
        counters.total_invocations, counters.illegal_invocations, counters.queries))
    hist = list(history)
    if hist[-1].role != "user":
        hist.append(user(prompts.decision_prompt(counters.tb_passed, counters.tb_total,
                                                 counters.unsolved_compile_errors)))
    tools = schemas()
    node = DECISION
    nodes = [DECISION]
    tokens = 0
    rounds = 0
    investigated = 0
    fix_attempts = 0
    tb_passed = counters.tb_passed
    compile_errors = counters.unsolved_compile_errors
    dead_end = False

    def move(to: str) -> None:
        nonlocal node
        node = to
        nodes.append(to)

    while rounds < ctx.round_cap:
        if ctx.should_stop():
            raise Cancelled()
        reply, usage = ctx.gateway.chat(hist, tools, ctx.params)
        rounds += 1
        tokens += usage.total
        hist.append(ChatMessage("assistant", reply.content, reply.tool_calls))
        if not reply.tool_calls:
            dead_end = node == DECISION
            break

        texts: list[str] = []
        patched_at: Optional[int] = None
        claimed = False
        tested = False
        for i, call in enumerate(reply.tool_calls):
            r = dispatch_tool(call, session)
            texts.append(r.text)
            if r.tool == "apply_patch" and r.ok:
                patched_at = i
            elif r.tool == "report_fixed" and r.legal:
                claimed = True
            if r.tool in ("run_tests", "report_fixed") and r.legal:
                tested = True
        if tested and session.last_tests is not None:
            tb_passed = session.last_tests.passed

        finished = False
        if patched_at is not None:
            in_fix = node == FIX_COMPILE
            if not in_fix:
                move(PROPOSE)
            move(APPLY)
            report = tc.compile(session.branch)
            session.last_compile = report
            compile_errors = report.error_sites
            extra = "\n" + report.render()
            if report.success:
                move(SIMULATE)
                tests = tc.run_tests(session.branch)
                session.last_tests = tests
                tb_passed = tests.passed
                extra += "\n" + tests.render()
                finished = True
            else:
                tb_passed = 0
                if in_fix:
                    fix_attempts += 1
                if fix_attempts >= ctx.fix_cap:
                    finished = True
                else:
                    move(FIX_COMPILE)
                    extra += "\n" + prompts.FIX_COMPILE
            texts[patched_at] = truncate(texts[patched_at] + extra)
        elif claimed:
            finished = True
        elif node == FIX_COMPILE:
            fix_attempts += 1
            finished = fix_attempts >= ctx.fix_cap
        else:
            if node != INVESTIGATE:
                move(INVESTIGATE)
            investigated += 1
            if not session.investigation_open:
                finished = True
            elif investigated >= ctx.investigate_cap:
                session.investigation_open = False
                texts[-1] = texts[-1] + "\n" + prompts.INVESTIGATION_CLOSED

        for call, text in zip(reply.tool_calls, texts):
            hist.append(tool_result(call.id or "call", text))
        if finished:
            break

    if node != DECISION:
        move(DECISION)
    c = session.counters
    new = StateCounters(
        tb_passed=min(tb_passed, counters.tb_total),
        tb_total=counters.tb_total,
        queries=c.queries,
        unsolved_compile_errors=compile_errors,
        tokens_used=counters.tokens_used + tokens,
        illegal_invocations=c.illegal,
        total_invocations=c.total,
        patches_applied=counters.patches_applied + len(session.patches),
    )
    return StepResult(session.branch, tuple(hist), new, list(session.patches), nodes, rounds,
                      session.fixed_claim, dead_end)
