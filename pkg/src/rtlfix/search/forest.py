"""Initial states and the agent-backed search environment."""
from __future__ import annotations

from typing import Optional, Sequence

from ..adi.toolchain import CompileReport, SimReport, Toolchain
from ..adi.workspace import Workspace
from ..llm import system, user
from ..localize import FaultCandidate, candidates_section, failure_summary
from . import prompts
from .agent import AgentContext, agent_step
from .engine import Expansion, SearchState
from .heuristic import HeuristicConfig, StateCounters, heuristic


def root_counters(ws: Workspace, compile_report: Optional[CompileReport],
                  tests: Optional[SimReport]) -> StateCounters:
    return StateCounters(
        tb_passed=tests.passed if tests else 0,
        tb_total=len(ws.case.testbenches),
        unsolved_compile_errors=compile_report.error_sites if compile_report else 0,
    )


def make_roots(candidates: Sequence[FaultCandidate], ws: Workspace, compile_report: Optional[CompileReport],
               tests: Optional[SimReport], cfg: HeuristicConfig = HeuristicConfig()) -> list[SearchState]:
    """Root A sees no candidates; root B (only when there are candidates)
    sees all of them.  Both start from the original branch."""
    counters = root_counters(ws, compile_report, tests)
    compile_text = compile_report.render() if compile_report else "not run"
    failure = failure_summary(tests, tests.mismatches if tests else [])
    if tests is not None:
        failure = tests.render()
    f = heuristic(counters, cfg)
    variants = [""]
    if candidates:
        variants.append(candidates_section(candidates))
    roots = []
    for i, extra in enumerate(variants):
        history = (system(prompts.SYSTEM),
                   user(prompts.initial_prompt(ws.sources, ws.case.top, compile_text, failure, extra)))
        roots.append(SearchState(i, None, ws.root, history, counters, f, f,
                                 info={"root": "A" if i == 0 else "B", "candidates": len(candidates) if i else 0}))
    return roots


class AgentEnvironment:
    """Expansions run the patch agent; fixedness is checked by simulation."""

    def __init__(self, ctx: AgentContext):
        self.ctx = ctx
        self.ws = ctx.ws
        self.toolchain: Toolchain = ctx.toolchain

    def checkout(self, state: SearchState):
        # tools check out per command into private directories; the branch
        # handle is all the session needs
        return state.branch

    def expand(self, state: SearchState, checkout) -> Expansion:
        step = agent_step(checkout, state.history, state.counters, self.ctx)
        child = self.ws.create_branch(state.branch, step.patches)
        info = {"nodes": step.nodes, "rounds": step.rounds, "branch": child.id,
                "dead_end": step.dead_end, "fixed_claim": step.fixed_claim}
        return Expansion(child, step.history, step.counters, tuple(step.patches), info)

    def is_fixed(self, state: SearchState) -> bool:
        return self.toolchain.is_fixed(state.branch)
