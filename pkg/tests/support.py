"""Shared test helpers: fixture paths, a random-design generator with an
independent per-bit lint oracle, and a simulated search environment."""
from __future__ import annotations

import hashlib
import random
import shutil
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from rtlfix.search.engine import Expansion, SearchState
from rtlfix.search.heuristic import StateCounters
from rtlfix.verilog import ast as A

FIXTURES = Path(__file__).parent / "fixtures"
CASES = FIXTURES / "cases"
SCRIPTS = FIXTURES / "scripts"
REFERENCE = FIXTURES / "reference"
ACCEPTANCE_CASES = ("counter_op", "mux_rstn", "partial_drive")


def copy_case(name: str, dest: Path) -> Path:
    out = dest / name
    shutil.copytree(CASES / name, out)
    return out


def protected_digests(root: Path) -> dict[str, str]:
    """sha256 of every testbench, golden and config file below ``root``."""
    out = {}
    for p in sorted(root.rglob("*")):
        rel = p.relative_to(root).as_posix()
        if p.is_file() and (rel == "case.toml" or rel.startswith(("tb/", "golden/"))):
            out[rel] = hashlib.sha256(p.read_bytes()).hexdigest()
    return out


# --------------------------------------------------------------------------
# random designs for lint
# --------------------------------------------------------------------------
@dataclass
class RandomDesign:
    text: str
    nets: list[tuple[str, str, int, int]]  # name, kind, msb, lsb


def random_design(rng: random.Random) -> RandomDesign:
    """A small single-module design: at most 4 internal nets of at most 8 bits
    and at most 6 assignments, with overlapping, partial and missing drivers."""
    nets = []
    for i in range(rng.randint(1, 4)):
        width = rng.randint(1, 8)
        lsb = rng.choice((0, 0, 0, 2))
        nets.append((f"n{i}", rng.choice(("wire", "reg")), lsb + width - 1, lsb))

    def target(net) -> str:
        name, _, msb, lsb = net
        form = rng.random()
        if form < 0.4 or msb == lsb:
            return name
        if form < 0.7:
            return f"{name}[{rng.randint(lsb, msb)}]"
        lo = rng.randint(lsb, msb)
        hi = rng.randint(lo, msb)
        return f"{name}[{hi}:{lo}]"

    def source() -> str:
        pick = rng.random()
        if pick < 0.25:
            return rng.choice(("a", "b", f"a[{rng.randint(0, 7)}]", "b[3:1]"))
        if pick < 0.35:
            return f"{rng.randint(1, 8)}'d{rng.randint(0, 1)}"
        net = rng.choice(nets)
        if rng.random() < 0.5 or net[2] == net[3]:
            return net[0]
        return f"{net[0]}[{rng.randint(net[3], net[2])}]"

    def expr() -> str:
        terms = [source() for _ in range(rng.randint(1, 2))]
        return f" {rng.choice(('^', '+', '&'))} ".join(terms)

    lines = ["module top (", "    input        clk,", "    input  [7:0] a,", "    input  [3:0] b,",
             "    output [7:0] y", ");"]
    for name, kind, msb, lsb in nets:
        rng_text = "" if msb == lsb == 0 and rng.random() < 0.5 else f" [{msb}:{lsb}]"
        lines.append(f"  {kind}{rng_text} {name};")
    open_block = False
    for _ in range(rng.randint(0, 6)):
        net = rng.choice(nets)
        if net[1] == "wire":
            if open_block:
                lines.append("  end")
                open_block = False
            lines.append(f"  assign {target(net)} = {expr()};")
            continue
        if open_block and rng.random() < 0.3:
            lines.append(f"    {target(net)} <= {expr()};")
            continue
        if open_block:
            lines.append("  end")
        lines.append("  always @(posedge clk) begin")
        if rng.random() < 0.3:
            lines.append(f"    if ({source()})")
        lines.append(f"    {target(net)} <= {expr()};")
        open_block = True
    if open_block:
        lines.append("  end")
    if rng.random() < 0.85:
        lines.append(f"  assign y = {expr()};")
    lines.append("endmodule")
    return RandomDesign("\n".join(lines) + "\n", nets)


@dataclass
class _OracleNet:
    name: str
    msb: int
    lsb: int
    line: int
    drivers: dict[int, set] = field(default_factory=dict)
    read: bool = False

    def indices(self) -> list[int]:
        lo, hi = min(self.msb, self.lsb), max(self.msb, self.lsb)
        return list(range(lo, hi + 1))


def _num(e) -> int:
    assert isinstance(e, A.Number), e
    return e.value


def _range(r: Optional[A.Range]) -> tuple[int, int]:
    return (0, 0) if r is None else (_num(r.msb), _num(r.lsb))


def oracle_lint(module: A.ModuleDecl) -> list[tuple[str, str, tuple[int, ...], int]]:
    """Brute-force (kind, net, bits, line) list straight from the AST: every
    (net, bit, driver) triple is enumerated, then each rule is applied bit by
    bit.  Only covers the constructs :func:`random_design` emits."""
    nets: dict[str, _OracleNet] = {}
    for p in module.ports:
        msb, lsb = _range(p.range)
        n = nets[p.name] = _OracleNet(p.name, msb, lsb, p.line)
        if p.direction == "input":
            for i in n.indices():
                n.drivers.setdefault(i, set()).add(("port", p.name))
        else:
            n.read = True
    for item in module.items:
        if isinstance(item, A.NetDecl):
            msb, lsb = _range(item.range)
            for d in item.names:
                nets[d.name] = _OracleNet(d.name, msb, lsb, item.span.start)

    def targets(e) -> list[tuple[str, list[int]]]:
        if isinstance(e, A.Ident):
            return [(e.name, nets[e.name].indices())]
        if isinstance(e, A.Index):
            return [(e.base.name, [_num(e.index)])]
        if isinstance(e, A.Slice):
            lo, hi = sorted((_num(e.msb), _num(e.lsb)))
            return [(e.base.name, list(range(lo, hi + 1)))]
        raise AssertionError(f"unexpected lvalue {e!r}")

    def reads(e) -> None:
        if isinstance(e, A.Ident):
            if e.name in nets:
                nets[e.name].read = True
        elif isinstance(e, (A.Index, A.Slice)):
            reads(e.base)
        elif isinstance(e, A.Binary):
            reads(e.left)
            reads(e.right)
        elif isinstance(e, A.Unary):
            reads(e.operand)

    def drive(lhs, unit) -> None:
        for name, bits in targets(lhs):
            n = nets[name]
            for b in bits:
                if b in n.indices():
                    n.drivers.setdefault(b, set()).add(unit)

    def stmt(s, unit) -> None:
        if s is None:
            return
        if isinstance(s, A.Block):
            for x in s.stmts:
                stmt(x, unit)
        elif isinstance(s, A.EventStmt):
            for ev in s.events or []:
                reads(ev.expr)
            stmt(s.body, unit)
        elif isinstance(s, A.If):
            reads(s.cond)
            stmt(s.then, unit)
            stmt(s.other, unit)
        elif isinstance(s, A.Assign):
            reads(s.rhs)
            drive(s.lhs, unit)
        else:
            raise AssertionError(f"unexpected statement {s!r}")

    for idx, item in enumerate(module.items):
        if isinstance(item, A.ContinuousAssign):
            for k, (lhs, rhs) in enumerate(item.assigns):
                reads(rhs)
                drive(lhs, ("assign", idx, k))
        elif isinstance(item, A.Always):
            stmt(item.body, ("always", idx))

    out = []
    for n in nets.values():
        multi = tuple(b for b in n.indices() if len(n.drivers.get(b, ())) >= 2)
        driven = [b for b in n.indices() if n.drivers.get(b)]
        undriven = tuple(b for b in n.indices() if not n.drivers.get(b))
        if multi:
            out.append(("MultiDriven", n.name, multi, n.line))
        if not driven and n.read:
            out.append(("Undriven", n.name, undriven, n.line))
        elif driven and undriven:
            out.append(("PartiallyDriven", n.name, undriven, n.line))
        if not n.read:
            out.append(("Unused", n.name, (), n.line))
    return sorted(out, key=lambda d: (d[3], d[1], d[0]))


# --------------------------------------------------------------------------
# simulated search environment
# --------------------------------------------------------------------------
SIM_TB_TOTAL = 4
SIM_TOKENS_PER_STEP = 3000


class NeverExhausted:
    def exhausted(self) -> bool:
        return False


class SimulatedEnv:
    """Expansions nudge tb_passed up or down at random; the chance that an
    expansion fixes the design grows with the parent's tb_passed."""

    def __init__(self, seed: int):
        self.rng = random.Random(seed)
        self.fixed_ids: set[int] = set()
        self._next = 0

    @staticmethod
    def root_counters() -> StateCounters:
        return StateCounters(tb_passed=0, tb_total=SIM_TB_TOTAL)

    def fix_probability(self, tb_passed: int) -> float:
        return 0.6 * (tb_passed / SIM_TB_TOTAL) ** 2

    def checkout(self, state: SearchState):
        return state.branch

    def step(self, c: StateCounters) -> tuple[StateCounters, bool]:
        fixed = self.rng.random() < self.fix_probability(c.tb_passed)
        u = self.rng.random()
        delta = 1 if u < 0.45 else (0 if u < 0.75 else -1)
        tb = SIM_TB_TOTAL if fixed else max(0, min(SIM_TB_TOTAL - 1, c.tb_passed + delta))
        child = StateCounters(tb_passed=tb, tb_total=SIM_TB_TOTAL, queries=c.queries,
                              tokens_used=c.tokens_used + SIM_TOKENS_PER_STEP,
                              total_invocations=c.total_invocations + 1,
                              patches_applied=c.patches_applied + 1)
        return child, fixed

    def expand(self, state: SearchState, checkout) -> Expansion:
        child, fixed = self.step(state.counters)
        self._next += 1
        info = {"fixed": fixed}
        return Expansion(self._next, (), child, (), info)

    def is_fixed(self, state: SearchState) -> bool:
        return bool(state.info.get("fixed"))


def bfs_expansions_to_fix(seed: int, breadth: int = 2, cap: int = 2000) -> int:
    """Breadth-first baseline: every state is expanded ``breadth`` times in
    level order.  Returns the number of expansions until a fix (or ``cap``)."""
    env = SimulatedEnv(seed)
    frontier = [env.root_counters()]
    n = 0
    while frontier:
        nxt = []
        for c in frontier:
            for _ in range(breadth):
                n += 1
                child, fixed = env.step(c)
                if fixed or n >= cap:
                    return n
                nxt.append(child)
        frontier = nxt
    return n


class FakeClock:
    """Monotonic clock that only moves when ``sleep`` is called."""

    def __init__(self, start: float = 1000.0):
        self.now = start

    def __call__(self) -> float:
        return self.now

    def sleep(self, seconds: float) -> None:
        self.now += seconds
