"""End-to-end acceptance checks, one test group per criterion.

Run with ``pytest tests/test_acceptance.py -v``; the terminal summary prints
one PASS/FAIL line per criterion.
"""
from __future__ import annotations

import io
import json
import math
import random
import statistics
import time
from fractions import Fraction
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import binomtest

from rtlfix.adi import InvocationCounters, ToolSession, Toolchain, Workspace, dispatch_tool, load_case
from rtlfix.adi.workspace import Patch, apply_to_directory
from rtlfix.llm import Gateway, ScriptedBackend, ScriptExhausted, TokenBudget, ToolCall, parse_script, system, user
from rtlfix.netlint import build_driver_map, lint
from rtlfix.repair import RepairOptions, RunBudget, pass_at_k_estimator, run_repair
from rtlfix.search.agent import AgentContext, agent_step
from rtlfix.search.engine import Expansion, SearchEngine
from rtlfix.search.heuristic import (HeuristicConfig, StateCounters, heuristic, sample_index,
                                     softmax_probs)
from rtlfix.search.prompts import initial_prompt
from rtlfix.sim.runner import simulate_files
from rtlfix.verilog.parser import parse_source
from rtlfix.waveform import compare_traces, parse_vcd, write_vcd

from support import (ACCEPTANCE_CASES, CASES, FIXTURES, REFERENCE, SCRIPTS, FakeClock, NeverExhausted,
                     SimulatedEnv, bfs_expansions_to_fix, copy_case, oracle_lint, protected_digests,
                     random_design)


# --------------------------------------------------------------------------
# 1. scripted end-to-end repair
# --------------------------------------------------------------------------
def independent_pass(case_dir: Path, patches) -> bool:
    """Apply ``patches`` to a pristine copy and simulate in-process, without
    the workspace or toolchain used during the repair."""
    apply_to_directory(case_dir, patches)
    case = load_case(case_dir)
    for tb in case.testbenches:
        files = [(s, (case_dir / s).read_text()) for s in case.sources]
        files += [(f, (case_dir / f).read_text()) for f in tb.files]
        vcd = io.StringIO()
        result = simulate_files(files, tb.top, vcd_out=vcd, out=io.StringIO())
        if result.status != "ok":
            return False
        golden = parse_vcd((case_dir / tb.golden).read_text())
        if compare_traces(parse_vcd(vcd.getvalue()), golden, case.signals_for(tb), case.clock):
            return False
    return True


@pytest.mark.criterion(1)
@pytest.mark.parametrize("name", ACCEPTANCE_CASES)
def test_c1_scripted_repair(name, tmp_path):
    case = load_case(copy_case(name, tmp_path / "work"))
    backend = ScriptedBackend.from_file(SCRIPTS / f"{name}.yaml")
    start = time.monotonic()
    report = run_repair(case, RunBudget(seed=0), HeuristicConfig(), backend,
                        RepairOptions(out_dir=tmp_path / "out"))
    elapsed = time.monotonic() - start
    assert report.outcome == "fixed", report.message
    assert report.verified
    assert backend.position == len(backend.entries)  # every scripted turn was used
    assert elapsed < 60.0

    pristine = copy_case(name, tmp_path / "pristine")
    assert independent_pass(pristine, report.patch)
    # the fix restores the reference sources exactly
    for ref in (REFERENCE / name).glob("*.v"):
        assert (pristine / "src" / ref.name).read_text() == ref.read_text()

    # the log alone is enough to replay the fix
    records = [json.loads(line) for line in (tmp_path / "out" / "run.jsonl").read_text().splitlines()]
    end = records[-1]
    assert end["event"] == "end" and end["outcome"] == "fixed"
    replay = copy_case(name, tmp_path / "replay")
    assert independent_pass(replay, [Patch(**p) for p in end["patch"]])


# --------------------------------------------------------------------------
# 2. heuristic and sampler
# --------------------------------------------------------------------------
# (counters, expected f) with defaults lambda=(4, .1, .5, .3, .5, .2), b=1,
# token_unit=1e5; expected values worked by hand.  The first is the worked
# example: 4*0.5 + 0.1*3 - 0.5*1 - 0.3*0.5 - 0.5*0.25 - 0.2*2 + 1 = 2.125
# (an oft-quoted total of 3.125 for these counters does not add up).
HEURISTIC_VECTORS = [
    (StateCounters(1, 2, 3, 1, 50_000, 1, 4, 2), 2.125),
    (StateCounters(), 1.0),
    (StateCounters(2, 2), 5.0),
    (StateCounters(0, 3, queries=10), 2.0),
    (StateCounters(1, 4, unsolved_compile_errors=4), 0.0),
    (StateCounters(0, 1, tokens_used=1_000_000), -2.0),
    (StateCounters(0, 1, illegal_invocations=3, total_invocations=3), 0.5),
    (StateCounters(3, 3, patches_applied=5), 4.0),
    (StateCounters(1, 3, 2, 2, 200_000, 2, 8, 1), 0.608333333333333333),
    (StateCounters(5, 8, 7, 0, 12_345, 0, 9, 3), 3.562965),
    (StateCounters(0, 0, 0, 0, 0, 1, 2, 0), 0.75),
    (StateCounters(7, 7, 1, 3, 999_999, 5, 5, 10), -1.899997),
]


@pytest.mark.criterion(2)
@pytest.mark.parametrize("counters,expected", HEURISTIC_VECTORS)
def test_c2_heuristic_values(counters, expected):
    assert abs(heuristic(counters) - expected) <= 1e-12


@pytest.mark.criterion(2)
def test_c2_heuristic_vectors_cross_checked_exactly():
    # rational re-derivation of every frozen value
    lam = [Fraction(x).limit_denominator() for x in (4.0, 0.1, 0.5, 0.3, 0.5, 0.2)]
    for c, expected in HEURISTIC_VECTORS:
        ratio = Fraction(c.tb_passed, c.tb_total) if c.tb_total else 0
        u = Fraction(c.illegal_invocations, c.total_invocations) if c.total_invocations else 0
        f = (lam[0] * ratio + lam[1] * c.queries - lam[2] * c.unsolved_compile_errors
             - lam[3] * Fraction(c.tokens_used, 100_000) - lam[4] * u - lam[5] * c.patches_applied + 1)
        assert abs(float(f) - expected) <= 1e-12


@pytest.mark.criterion(2)
@pytest.mark.parametrize("scores", [(0.0, 0.0), (1.0, 0.0), (2.0, 1.0, 0.0)])
def test_c2_sampling_frequencies(scores):
    rng = random.Random(20240501)
    draws = 100_000
    counts = [0] * len(scores)
    for _ in range(draws):
        counts[sample_index(scores, rng)[0]] += 1
    z = sum(math.exp(s) for s in scores)
    for n, s in zip(counts, scores):
        assert abs(n / draws - math.exp(s) / z) <= 0.01


@pytest.mark.criterion(2)
@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=1, max_size=8), st.floats(-100, 100))
def test_c2_softmax_shift_invariance(scores, b):
    shifted = softmax_probs([s + b for s in scores])
    for p, q in zip(softmax_probs(scores), shifted):
        assert abs(p - q) <= 1e-9


@pytest.mark.criterion(2)
@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 9)), min_size=1, max_size=6),
       st.floats(-20, 20))
def test_c2_bias_does_not_change_sampling(vectors, b):
    states = [StateCounters(min(p, 5), 5, queries=q) for p, q in vectors]
    base = [heuristic(s, HeuristicConfig(b=1.0)) for s in states]
    moved = [heuristic(s, HeuristicConfig(b=b)) for s in states]
    for p, q in zip(softmax_probs(base), softmax_probs(moved)):
        assert abs(p - q) <= 1e-9


# --------------------------------------------------------------------------
# 3. search loop fidelity
# --------------------------------------------------------------------------
class TracedEnv:
    def __init__(self, events, seed=0):
        self.events = events
        self.rng = random.Random(seed)

    def checkout(self, state):
        self.events.append(("env.checkout", state.id))
        return state.branch

    def expand(self, state, co):
        self.events.append(("env.expand", state.id))
        c = state.counters
        child = StateCounters(self.rng.randint(0, 3), 3, queries=c.queries + self.rng.randint(0, 2),
                              tokens_used=c.tokens_used + 1000, total_invocations=c.total_invocations + 1)
        return Expansion(f"b{state.id}", (), child)

    def is_fixed(self, state):
        return False


class CountingBudget:
    def __init__(self, allow):
        self.allow = allow
        self.checks = 0

    def exhausted(self):
        self.checks += 1
        return self.checks > self.allow


def run_traced(cfg, budget, max_expansions=None):
    events = []
    snapshots = []

    def trace(event, **data):
        events.append((event, data.get("state")))
        if event == "restore":
            snapshots.append([(s.id, s.score, s.f, s.id in engine.in_flight) for s in engine.states])

    engine = SearchEngine(TracedEnv(events), budget, cfg, random.Random(7), trace=trace,
                          max_expansions=max_expansions)
    engine.add_root("root", (), StateCounters(0, 3))
    engine.add_root("root2", (), StateCounters(1, 3))
    out = engine.run()
    return engine, out, events, snapshots


@pytest.mark.criterion(3)
def test_c3_expansion_sequence_and_guard():
    engine, out, events, _ = run_traced(HeuristicConfig(), CountingBudget(allow=6))
    assert out.kind == "exhausted" and out.expansions == 6
    names = [e for e, _ in events if not e.startswith("env.")]
    expected = ["sample", "penalize", "checkout", "expand", "insert", "restore"]
    assert names == expected * 6
    # each block acts on one sampled state; the env is called in between
    for i in range(6):
        block = events[i * 8:(i + 1) * 8]
        assert [e for e, _ in block] == ["sample", "penalize", "env.checkout", "checkout", "env.expand",
                                         "expand", "insert", "restore"]
        sid = block[0][1]
        assert all(s == sid for e, s in block if e != "insert")
    assert len(engine.states) == 2 + 6

    _, out, events, _ = run_traced(HeuristicConfig(), NeverExhausted(), max_expansions=4)
    assert out.expansions == 4
    _, out, events, _ = run_traced(HeuristicConfig(), CountingBudget(allow=0))
    assert out.expansions == 0 and events == []


@pytest.mark.criterion(3)
def test_c3_scores_restored_to_f():
    _, _, _, snaps = run_traced(HeuristicConfig(), CountingBudget(allow=25))
    assert len(snaps) == 25
    for snap in snaps:
        for sid, score, f, in_flight in snap:
            assert not in_flight
            assert score == f


@pytest.mark.criterion(3)
def test_c3_cumulative_freshness_keeps_penalty():
    cfg = HeuristicConfig(cumulative_freshness=True)
    engine, _, events, _ = run_traced(cfg, CountingBudget(allow=25))
    picks = [s for e, s in events if e == "sample"]
    for st_ in engine.states:
        assert st_.score == pytest.approx(st_.f - cfg.freshness_penalty * picks.count(st_.id))


# --------------------------------------------------------------------------
# 4. exploration benefit
# --------------------------------------------------------------------------
@pytest.mark.criterion(4)
def test_c4_stochastic_beats_bfs():
    start = time.monotonic()
    stochastic, bfs = [], []
    for trial in range(100):
        env = SimulatedEnv(10_000 + trial)
        engine = SearchEngine(env, NeverExhausted(), HeuristicConfig(), random.Random(trial),
                              max_expansions=2000)
        engine.add_root(0, (), env.root_counters())
        out = engine.run()
        assert out.fixed
        stochastic.append(out.expansions)
        bfs.append(bfs_expansions_to_fix(10_000 + trial))
    wins = sum(s < b for s, b in zip(stochastic, bfs))
    losses = sum(s > b for s, b in zip(stochastic, bfs))
    p = binomtest(wins, wins + losses, 0.5, alternative="greater").pvalue
    print(f"median stochastic={statistics.median(stochastic)} bfs={statistics.median(bfs)} "
          f"wins={wins} losses={losses} p={p:.2e}")
    assert statistics.median(stochastic) < statistics.median(bfs)
    assert p < 0.05
    assert time.monotonic() - start < 120.0


# --------------------------------------------------------------------------
# 5. netlint oracle equivalence
# --------------------------------------------------------------------------
@pytest.mark.criterion(5)
def test_c5_netlint_matches_oracle():
    diffs = []
    for seed in range(200):
        design = random_design(random.Random(seed))
        ast = parse_source([("top.v", design.text)])
        got = [(d.kind, d.net, d.bits, d.line) for d in lint(build_driver_map(ast), "top")]
        expected = oracle_lint(ast.modules[0])
        if sorted(got, key=lambda d: (d[3], d[1], d[0])) != expected:
            diffs.append((seed, got, expected))
    assert diffs == []


PATTERNS = {
    "multi_driven": ("MultiDriven", "w", (0,), [8, 9]),
    "partially_driven": ("PartiallyDriven", "lanes", tuple(range(16, 32)), [9]),
    "unused": ("Unused", "shadow", (), [7]),
}


@pytest.mark.criterion(5)
@pytest.mark.parametrize("name", sorted(PATTERNS))
def test_c5_pattern_fixtures(name):
    path = FIXTURES / "lint" / f"{name}.v"
    diags = lint(build_driver_map(parse_source([(path.name, path.read_text())])), name)
    kind, net, bits, site_lines = PATTERNS[name]
    assert [(d.kind, d.net, d.bits) for d in diags] == [(kind, net, bits)]
    assert [s.start for s in diags[0].sites] == site_lines


# --------------------------------------------------------------------------
# 6. waveform comparison
# --------------------------------------------------------------------------
def all_vcds():
    return sorted(CASES.glob("*/golden/*.vcd")) + sorted((FIXTURES / "waveform").glob("*.vcd"))


@pytest.mark.criterion(6)
@pytest.mark.parametrize("path", all_vcds(), ids=lambda p: f"{p.parent.parent.name}-{p.name}")
def test_c6_self_compare_and_roundtrip(path):
    trace = parse_vcd(path.read_bytes())
    clock = "clk"
    assert compare_traces(trace, trace, clock=clock) == []
    again = parse_vcd(write_vcd(trace))
    assert {n: trace.history(n) for n in trace.signals} == {n: again.history(n) for n in again.signals}
    assert {n: s.width for n, s in trace.signals.items()} == {n: s.width for n, s in again.signals.items()}


@pytest.mark.criterion(6)
def test_c6_planted_divergence_and_dont_care():
    golden = parse_vcd((FIXTURES / "waveform" / "golden.vcd").read_text())
    planted = parse_vcd((FIXTURES / "waveform" / "planted.vcd").read_text())
    mism = compare_traces(planted, golden, clock="clk")
    # bus differs from golden only where golden is x (cycles 2+), so q at cycle 5 is all
    assert [(m.signal, m.cycle, m.expected, m.actual) for m in mism] == [("tb.q", 5, "0101", "1111")]
    # swapping operands makes golden's bus x visible as a real mismatch
    swapped = compare_traces(golden, planted, clock="clk")
    assert ("tb.bus", 2) in [(m.signal, m.cycle) for m in swapped]


@pytest.mark.criterion(6)
def test_c6_fixture_bugs_diverge_at_known_cycle(tmp_path):
    first = {"counter_op": 3, "mux_rstn": 1, "partial_drive": 3}
    for name, cycle in first.items():
        case = load_case(CASES / name)
        with Workspace(case) as ws:
            report = Toolchain(ws).run_tests(ws.root)
        assert min(m.cycle for m in report.mismatches) == cycle


# --------------------------------------------------------------------------
# 7. pass@k
# --------------------------------------------------------------------------
@pytest.mark.criterion(7)
def test_c7_closed_form():
    assert abs(pass_at_k_estimator(10, 5, 5) - (1 - 1 / 252)) <= 1e-9
    assert abs(pass_at_k_estimator(10, 5, 5) - 0.99603) <= 1e-5
    assert pass_at_k_estimator(10, 10, 1) == 1.0
    for k in range(1, 11):
        assert pass_at_k_estimator(10, 0, k) == 0.0
    for n in range(1, 13):
        for c in range(n + 1):
            for k in range(1, n + 1):
                exact = 1 - Fraction(math.comb(n - c, k), math.comb(n, k))
                assert abs(pass_at_k_estimator(n, c, k) - float(exact)) <= 1e-9


@pytest.mark.criterion(7)
@pytest.mark.parametrize("n,c,k", [(10, 5, 5), (10, 3, 1), (10, 2, 3), (10, 7, 2), (20, 4, 5)])
def test_c7_monte_carlo(n, c, k):
    rng = random.Random(n * 100 + c * 10 + k)
    runs = [True] * c + [False] * (n - c)
    draws = 100_000
    hits = sum(any(rng.sample(runs, k)) for _ in range(draws))
    assert abs(hits / draws - pass_at_k_estimator(n, c, k)) <= 0.005


# --------------------------------------------------------------------------
# 8. budget enforcement
# --------------------------------------------------------------------------
def looping_script(usage, delay, turns=60) -> str:
    entries = [{"reply": "score: 2\nlines: 12\nreason: looks fine", "usage": list(usage), "delay": delay}]
    for i in range(turns):
        entries.append({"tool_calls": [{"name": "query_code", "arguments": {"line": 12 + i % 5}}],
                        "usage": list(usage), "delay": delay})
    return json.dumps(entries)


@pytest.mark.criterion(8)
@pytest.mark.parametrize("limit", [1, 2500, 9999, 20_000])
def test_c8_token_budget(limit, tmp_path):
    usage = (900, 100)
    clock = FakeClock()
    backend = ScriptedBackend.from_text(looping_script(usage, 0.0), sleep=clock.sleep)
    report = run_repair(load_case(CASES / "mux_rstn"), RunBudget(600, limit), HeuristicConfig(), backend,
                        RepairOptions(clock=clock))
    assert report.outcome == "exhausted"
    assert report.tokens_used <= limit + sum(usage)
    assert report.tokens_used >= limit  # the budget was actually the limit
    assert report.gateway_calls == math.ceil(limit / sum(usage))


@pytest.mark.criterion(8)
@pytest.mark.parametrize("seconds,delay", [(0.5, 1.0), (3.0, 1.0), (10.0, 2.5)])
def test_c8_wall_budget(seconds, delay):
    clock = FakeClock()
    backend = ScriptedBackend.from_text(looping_script((10, 1), delay), sleep=clock.sleep)
    report = run_repair(load_case(CASES / "mux_rstn"), RunBudget(seconds, 10**9), HeuristicConfig(), backend,
                        RepairOptions(clock=clock))
    assert report.outcome == "exhausted"
    assert report.elapsed <= seconds + delay
    assert report.gateway_calls == math.ceil(seconds / delay)


@pytest.mark.criterion(8)
@pytest.mark.parametrize("budget", [RunBudget(600, 0), RunBudget(0, 10**6), RunBudget(0, 0)])
def test_c8_zero_budget_makes_no_calls(budget):
    backend = ScriptedBackend.from_file(SCRIPTS / "mux_rstn.yaml")
    start = time.monotonic()
    report = run_repair(load_case(CASES / "mux_rstn"), budget, HeuristicConfig(), backend)
    assert report.outcome == "exhausted"
    assert report.gateway_calls == 0 and backend.calls == []
    assert time.monotonic() - start < 5.0


# --------------------------------------------------------------------------
# 9. safety fuzz
# --------------------------------------------------------------------------
HOSTILE_PATHS = ["tb/tb.v", "golden/tb.vcd", "case.toml", "../case.toml", "src/../tb/tb.v",
                 "/etc/passwd", "tb.v", "tb", "golden", "", ".", "src", "src/", "src/mux4.v/..",
                 "src/mux4.v", "mux4.v", "SRC/MUX4.V", "src\\mux4.v", "./src/mux4.v", "\x00", "é.v"]
SNIPPETS = ["if (rstn)", "q <= a;", "endmodule", "module", "", " ", "\n", "x" * 5000,
            "$dumpfile", "always", "q <= 8'd0;", "`include \"tb.v\"", "\x00", "🙂"]


def random_call(rng: random.Random, n: int) -> ToolCall:
    name = rng.choice(["query_code", "query_waveform", "compile", "run_tests", "apply_patch", "report_fixed",
                       "apply_patch", "apply_patch", "rm", "", "APPLY_PATCH", "query_code ", None])
    kind = rng.random()
    if kind < 0.1:
        raw = rng.choice(["{", "[]", "null", "42", "\"s\"", "{'a': 1}", "{\"file\": }", "\xff"])
    else:
        args = {}
        for key in rng.sample(["file", "search", "replace", "line", "radius", "signals", "cycle",
                               "testbench", "extra"], rng.randint(0, 5)):
            args[key] = rng.choice([rng.choice(HOSTILE_PATHS), rng.choice(SNIPPETS), rng.randint(-5, 10**9),
                                    rng.random(), None, [], ["q", "clk", "nope"], {"a": 1}, True])
        raw = json.dumps(args)
    return ToolCall(f"fz{n}", name if name is not None else 7, raw)


@pytest.mark.criterion(9)
def test_c9_fuzz_tool_dispatch(tmp_path):
    root = copy_case("mux_rstn", tmp_path)
    before = protected_digests(root)
    case = load_case(root)
    rng = random.Random(99)
    with Workspace(case) as ws:
        tc = Toolchain(ws)
        protected_bytes = {p: (root / p).read_bytes() for p in before}
        session = ToolSession(ws, tc, ws.root, InvocationCounters())
        for n in range(1000):
            if n % 100 == 0:
                session = ToolSession(ws, tc, ws.root, InvocationCounters())
            result = dispatch_tool(random_call(rng, n), session)
            assert isinstance(result.text, str)
            c = session.counters
            assert 0.0 <= c.unusable <= 1.0
            assert len(result.text.splitlines()) <= 51
            for path in session.ws.snapshot(session.branch):
                assert path in case.sources
        # every branch checked out still carries the original protected bytes
        for bid in list(ws._branches)[-5:]:
            co = ws.checkout(ws.branch(bid))
            for p, data in protected_bytes.items():
                assert (co / p).read_bytes() == data
            ws.release(co)
    assert protected_digests(root) == before


@pytest.mark.criterion(9)
def test_c9_fuzz_conversation_loop(tmp_path):
    """Adversarial assistant turns go through the full agent step without
    escaping exceptions, and U stays within [0, 1]."""
    root = copy_case("mux_rstn", tmp_path)
    before = protected_digests(root)
    case = load_case(root)
    rng = random.Random(5)
    entries = []
    for n in range(200):
        calls = [random_call(rng, n * 10 + k) for k in range(rng.randint(0, 3))]
        entries.append({"reply": rng.choice(["", "thinking", "score: 9"]),
                        "tool_calls": [{"id": c.id, "name": str(c.name), "arguments": c.arguments}
                                       for c in calls], "usage": [50, 5]})
    backend = ScriptedBackend(parse_script(entries))
    gw = Gateway(backend, TokenBudget(10**9))
    with Workspace(case) as ws:
        tc = Toolchain(ws)
        ctx = AgentContext(ws, tc, gw)
        counters = StateCounters(0, 1)
        history = (system("fuzz"), user(initial_prompt(case.sources, case.top, "", "")))
        branch = ws.root
        while True:
            try:
                step = agent_step(branch, history, counters, ctx)
            except ScriptExhausted:
                break  # the adversarial script is used up
            assert 0.0 <= step.counters.unusable_rate <= 1.0
            assert math.isfinite(heuristic(step.counters))
            counters, history = step.counters, step.history
            branch = ws.create_branch(branch, step.patches)
    assert backend.position == len(backend.entries)
    assert protected_digests(root) == before
