import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rtlfix.adi import Toolchain, Workspace, load_case
from rtlfix.llm import BudgetExceeded, Gateway, ScriptedBackend, TokenBudget
from rtlfix.localize import FaultCandidate
from rtlfix.search.agent import (APPLY, DECISION, FIX_COMPILE, INVESTIGATE, PROPOSE, SIMULATE, AgentContext,
                                 Cancelled, agent_step)
from rtlfix.search.engine import Expansion, SearchEngine
from rtlfix.search.forest import AgentEnvironment, make_roots, root_counters
from rtlfix.search.heuristic import HeuristicConfig, StateCounters, heuristic, sample_state, softmax_probs
from rtlfix.verilog.segment import CodeSegment

from support import CASES, NeverExhausted, SimulatedEnv


# -- heuristic -----------------------------------------------------------------
@pytest.mark.parametrize("kw", [
    dict(tb_passed=-1), dict(tb_passed=3, tb_total=2), dict(illegal_invocations=2, total_invocations=1),
    dict(tokens_used=-5),
])
def test_counters_validated(kw):
    with pytest.raises(ValueError):
        StateCounters(**kw)


@pytest.mark.parametrize("kw", [
    dict(lambdas=(1.0,) * 5), dict(lambdas=(-1.0,) + (1.0,) * 5), dict(token_unit=0), dict(freshness_penalty=-1),
])
def test_config_validated(kw):
    with pytest.raises(ValueError):
        HeuristicConfig(**kw)


def test_config_round_trip():
    cfg = HeuristicConfig(lambdas=(1, 2, 3, 4, 5, 6), b=0.5)
    assert HeuristicConfig.from_dict(cfg.to_dict()) == cfg


def test_zero_testbenches_gives_zero_ratio():
    assert heuristic(StateCounters()) == 1.0


counters = st.builds(
    lambda total, passed, q, ce, tok, tot_inv, ill, p: StateCounters(
        min(passed, total), total, q, ce, tok, ill if ill <= tot_inv else tot_inv, tot_inv, p),
    st.integers(1, 8), st.integers(0, 8), st.integers(0, 20), st.integers(0, 10), st.integers(0, 10**6),
    st.integers(0, 30), st.integers(0, 30), st.integers(0, 10))


@settings(max_examples=200)
@given(counters)
def test_heuristic_monotone(c):
    f = heuristic(c)
    if c.tb_passed < c.tb_total:
        assert heuristic(StateCounters(**{**c.to_dict(), "tb_passed": c.tb_passed + 1})) > f
    assert heuristic(StateCounters(**{**c.to_dict(), "queries": c.queries + 1})) > f
    assert heuristic(StateCounters(**{**c.to_dict(), "unsolved_compile_errors": c.unsolved_compile_errors + 1})) < f
    assert heuristic(StateCounters(**{**c.to_dict(), "tokens_used": c.tokens_used + 1000})) < f
    assert heuristic(StateCounters(**{**c.to_dict(), "patches_applied": c.patches_applied + 1})) < f
    more_illegal = StateCounters(**{**c.to_dict(), "illegal_invocations": c.illegal_invocations + 1,
                                    "total_invocations": c.total_invocations + 1})
    assert more_illegal.unusable_rate >= c.unusable_rate
    if more_illegal.unusable_rate > c.unusable_rate:
        assert heuristic(more_illegal) < f


@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=20))
def test_softmax_is_distribution(scores):
    p = softmax_probs(scores)
    assert abs(sum(p) - 1) < 1e-9 and all(0 <= x <= 1 for x in p)
    assert p[scores.index(max(scores))] == max(p)


def test_sample_state_edge_cases():
    assert sample_state(["only"], random.Random(1), key=lambda s: 5.0) == "only"
    with pytest.raises(ValueError):
        sample_state([], random.Random(1))


# -- engine --------------------------------------------------------------------
def test_engine_needs_roots_and_workers():
    with pytest.raises(ValueError):
        SearchEngine(SimulatedEnv(0), NeverExhausted(), workers=0)
    with pytest.raises(ValueError):
        SearchEngine(SimulatedEnv(0), NeverExhausted()).run()


@pytest.mark.parametrize("workers", [1, 3])
def test_engine_finds_fix_and_lineage(workers):
    env = SimulatedEnv(5)
    engine = SearchEngine(env, NeverExhausted(), rng=random.Random(5), workers=workers, max_expansions=500)
    engine.add_root("r", (), env.root_counters())
    out = engine.run()
    assert out.fixed and out.state.info["fixed"]
    chain = engine.lineage(out.state)
    assert chain[0].id == 0 and chain[-1] is out.state
    assert [s.depth for s in chain] == list(range(len(chain)))
    # the search stops at the fix, so the winning parent is never restored;
    # parallel runs also drop the expansions still in flight
    assert chain[-2].id in engine.in_flight
    if workers == 1:
        assert engine.in_flight == {chain[-2].id: 1}


class BudgetAfter:
    def __init__(self, n):
        self.n = n
        self.calls = 0

    def checkout(self, state):
        return state.branch

    def expand(self, state, co):
        self.calls += 1
        if self.calls > self.n:
            raise BudgetExceeded("token budget exhausted")
        return Expansion(self.calls, (), StateCounters(1, 4, queries=self.calls))

    def is_fixed(self, state):
        return False


@pytest.mark.parametrize("workers", [1, 2])
def test_engine_abandons_on_budget(workers):
    logged = []
    engine = SearchEngine(BudgetAfter(3), NeverExhausted(), workers=workers, log=logged.append)
    engine.add_root("r", (), StateCounters(0, 4))
    out = engine.run()
    assert out.kind == "exhausted" and "token" in out.reason
    assert out.expansions == 3 and not engine.in_flight
    assert all(s.score == s.f for s in engine.states)
    assert any(r["outcome"] == "budget" for r in logged)
    assert out.state is engine.best()


# -- roots ---------------------------------------------------------------------
def test_make_roots(tmp_path):
    with Workspace(load_case(CASES / "mux_rstn"), tmp_root=str(tmp_path)) as ws:
        tc = Toolchain(ws)
        comp, tests = tc.compile(ws.root), tc.run_tests(ws.root)
        (only,) = make_roots([], ws, comp, tests)
        assert only.info["root"] == "A" and "Suspected" not in only.history[1].content
        seg = CodeSegment("src/mux4.v", 12, 23, "", (0,), "mux4", "d")
        a, b = make_roots([FaultCandidate("src/mux4.v", 13, seg, 9, "inverted reset")], ws, comp, tests)
        assert (a.id, b.id) == (0, 1) and a.branch is b.branch is ws.root
        assert "src/mux4.v:13" in b.history[1].content and "src/mux4.v:13" not in a.history[1].content
        assert a.counters == b.counters == root_counters(ws, comp, tests) == StateCounters(0, 1)


# -- agent step ----------------------------------------------------------------
def tool_entry(name, **args):
    return {"tool_calls": [{"name": name, "arguments": args}], "usage": [100, 10]}


def step_with(entries, tmp_path, **ctx_kw):
    tmp_path.mkdir(parents=True, exist_ok=True)
    ws = Workspace(load_case(CASES / "mux_rstn"), tmp_root=str(tmp_path))
    tc = Toolchain(ws)
    backend = ScriptedBackend.from_text(json.dumps(entries))
    ctx = AgentContext(ws, tc, Gateway(backend, TokenBudget(10**6)), **ctx_kw)
    root = make_roots([], ws, tc.compile(ws.root), tc.run_tests(ws.root))[0]
    return agent_step(ws.root, root.history, root.counters, ctx), backend, ws


def test_step_fixes_design(tmp_path):
    step, backend, ws = step_with([tool_entry("apply_patch", file="src/mux4.v", search="if (rstn)",
                                              replace="if (!rstn)")], tmp_path)
    assert step.nodes == [DECISION, PROPOSE, APPLY, SIMULATE, DECISION]
    assert step.counters.tb_passed == 1 and step.counters.patches_applied == 1
    assert step.counters.tokens_used == 110 and "1/1 testbenches pass" in step.history[-1].content
    ws.close()


def test_step_investigation_closes(tmp_path):
    entries = [tool_entry("query_code", search="rstn")] * 3 + [{"reply": "done", "usage": [1, 1]}]
    step, backend, ws = step_with(entries, tmp_path)
    assert step.nodes == [DECISION, INVESTIGATE, DECISION]
    assert step.counters.queries == 3 and step.rounds == 4 and not step.dead_end
    assert "investigated enough" in step.history[-2].content
    ws.close()


def test_step_fix_compile_loop(tmp_path):
    broken = tool_entry("apply_patch", file="src/mux4.v", search="q <= a;", replace="q <= nope;")
    repair = tool_entry("apply_patch", file="src/mux4.v", search="q <= nope;", replace="q <= a;")
    step, _, ws = step_with([broken, repair], tmp_path)
    assert step.nodes == [DECISION, PROPOSE, APPLY, FIX_COMPILE, APPLY, SIMULATE, DECISION]
    assert step.counters.unsolved_compile_errors == 0 and step.counters.patches_applied == 2
    ws.close()

    step, _, ws = step_with([broken, broken, broken], tmp_path / "b", fix_cap=2)
    assert step.counters.unsolved_compile_errors == 1 and step.counters.tb_passed == 0
    assert step.nodes[-1] == DECISION and FIX_COMPILE in step.nodes
    ws.close()


def test_step_dead_end_and_illegal_calls(tmp_path):
    entries = [{"tool_calls": [{"name": "nonsense", "arguments": {}}], "usage": [5, 5]},
               {"reply": "I give up", "usage": [5, 5]}]
    step, _, ws = step_with(entries, tmp_path)
    assert step.counters.illegal_invocations == 1 and step.counters.total_invocations == 1
    assert step.counters.unusable_rate == 1.0
    ws.close()
    step, _, ws = step_with([{"reply": "nothing to do"}], tmp_path / "b")
    assert step.dead_end and step.nodes == [DECISION]
    ws.close()


def test_step_cancelled(tmp_path):
    with pytest.raises(Cancelled):
        step_with([{"reply": "x"}], tmp_path, should_stop=lambda: True)


def test_agent_environment_expand(tmp_path):
    with Workspace(load_case(CASES / "mux_rstn"), tmp_root=str(tmp_path)) as ws:
        tc = Toolchain(ws)
        backend = ScriptedBackend.from_text(json.dumps([tool_entry("apply_patch", file="mux4.v",
                                                                   search="if (rstn)", replace="if (!rstn)")]))
        env = AgentEnvironment(AgentContext(ws, tc, Gateway(backend, TokenBudget(10**6))))
        engine = SearchEngine(env, NeverExhausted())
        engine.add_roots(make_roots([], ws, tc.compile(ws.root), tc.run_tests(ws.root)))
        out = engine.run()
        assert out.fixed and out.expansions == 1
        assert [p.file for p in out.patches] == ["src/mux4.v"]
        assert ws.patch_set(out.state.branch) == out.patches
