import json
import math
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from rtlfix.adi import load_case
from rtlfix.adi.workspace import Patch
from rtlfix.llm import ScriptedBackend
from rtlfix.repair import RepairOptions, RunBudget, pass_at_k, pass_at_k_estimator, run_repair, verify_patch
from rtlfix.search.heuristic import HeuristicConfig

from support import CASES, SCRIPTS, copy_case

FIX = Patch("src/mux4.v", "    if (rstn)\n", "    if (!rstn)\n")


def scripted(name):
    return ScriptedBackend.from_file(SCRIPTS / f"{name}.yaml")


def test_run_budget_validation():
    assert RunBudget(0, 0).tokens == 0
    with pytest.raises(ValueError):
        RunBudget(-1, 10)


def test_verify_patch():
    assert verify_patch(CASES / "mux_rstn", [FIX])
    assert not verify_patch(CASES / "mux_rstn", [])


def test_repair_writes_artifacts(tmp_path):
    out = tmp_path / "out"
    report = run_repair(load_case(CASES / "mux_rstn"), RunBudget(), HeuristicConfig(), scripted("mux_rstn"),
                        RepairOptions(out_dir=out))
    assert report.outcome == "fixed" and report.verified and report.expansions == 3
    assert report.patch == [FIX]
    assert (out / "fix.diff").read_text().count("+    if (!rstn)") == 1
    assert "<<<<<<< SEARCH" in (out / "fix.patch").read_text()
    records = [json.loads(line) for line in (out / "run.jsonl").read_text().splitlines()]
    assert records[0]["event"] == "start" and records[-1]["event"] == "end"
    assert [r["outcome"] for r in records if "expansion" in r] == ["stored", "stored", "fixed"]
    assert report.tokens_used == sum(a + b for a, b in [(900, 40), (400, 5), (1500, 20), (1800, 25),
                                                         (2000, 60), (2400, 60)])


def test_repair_exhausted_returns_no_patch(tmp_path):
    text = "- reply: no idea\n  usage: [600, 0]\n" * 20
    report = run_repair(load_case(CASES / "mux_rstn"), RunBudget(tokens=2000), HeuristicConfig(),
                        ScriptedBackend.from_text(text), RepairOptions(skip_localization=True, out_dir=tmp_path))
    assert report.outcome == "exhausted" and report.patch is None
    assert report.tokens_used == 2400 and report.gateway_calls == 4
    records = [json.loads(line) for line in (tmp_path / "run.jsonl").read_text().splitlines()]
    assert any(r.get("event") == "best" for r in records)


def test_gateway_failure_is_error():
    report = run_repair(load_case(CASES / "mux_rstn"), RunBudget(), HeuristicConfig(),
                        ScriptedBackend.from_text("- reply: x\n  guard: never seen\n"))
    assert report.outcome == "error" and "ScriptMismatch" in report.message


def test_no_effect_case_reports_empty_fix():
    # the buggy line is not observable, so the design already passes; the
    # first expansion's child is checked and accepted with no patch
    report = run_repair(load_case(CASES / "no_effect"), RunBudget(), HeuristicConfig(),
                        ScriptedBackend.from_text("- reply: nothing to change\n"))
    assert report.outcome == "fixed" and report.patch == [] and report.expansions == 1
    assert report.candidates == [] and report.gateway_calls == 1


def test_repair_leaves_case_untouched(tmp_path):
    root = copy_case("mux_rstn", tmp_path)
    before = {p: p.read_bytes() for p in root.rglob("*") if p.is_file()}
    run_repair(load_case(root), RunBudget(), HeuristicConfig(), scripted("mux_rstn"))
    assert {p: p.read_bytes() for p in root.rglob("*") if p.is_file()} == before


# -- pass@k --------------------------------------------------------------------
@pytest.mark.parametrize("n,c,k,expected", [(10, 0, 1, 0.0), (10, 10, 5, 1.0), (10, 3, 1, 0.3),
                                             (10, 1, 5, 0.5), (5, 2, 2, 0.7)])
def test_estimator_values(n, c, k, expected):
    assert pass_at_k_estimator(n, c, k) == pytest.approx(expected)


@pytest.mark.parametrize("n,c,k", [(3, 1, 4), (3, 4, 1), (3, 1, 0)])
def test_estimator_rejects(n, c, k):
    with pytest.raises(ValueError):
        pass_at_k_estimator(n, c, k)


@given(st.integers(1, 30).flatmap(lambda n: st.tuples(st.just(n), st.integers(0, n), st.integers(1, n))))
def test_estimator_exact(args):
    n, c, k = args
    exact = 1 - Fraction(math.comb(n - c, k), math.comb(n, k))
    assert pass_at_k_estimator(n, c, k) == pytest.approx(float(exact), abs=1e-12)
    if k < n:
        assert pass_at_k_estimator(n, c, k + 1) >= pass_at_k_estimator(n, c, k) - 1e-12


def test_pass_at_k_harness(tmp_path):
    seen = []

    def factory(i):
        seen.append(i)
        if i % 2:
            return ScriptedBackend.from_text("- reply: x\n  guard: never\n")
        return scripted("mux_rstn")

    res = pass_at_k(load_case(CASES / "mux_rstn"), RunBudget(seed=40), HeuristicConfig(), factory, n=4,
                    ks=(1, 2), options=RepairOptions(out_dir=tmp_path))
    assert seen == [0, 1, 2, 3]
    assert (res.n, res.c) == (4, 2)
    assert res.values == {1: pytest.approx(0.5), 2: pytest.approx(1 - 1 / 6)}
    assert [r.seed for r in res.reports] == [40, 41, 42, 43]
    assert (tmp_path / "run003" / "run.jsonl").is_file()
    assert json.loads(json.dumps(res.to_dict()))["pass_at_k"]["2"] == pytest.approx(5 / 6)
    with pytest.raises(ValueError):
        pass_at_k(load_case(CASES / "mux_rstn"), RunBudget(), HeuristicConfig(), factory, n=2, ks=(3,))
