import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rtlfix.netlint import (MULTI_DRIVEN, PARTIALLY_DRIVEN, UNDRIVEN, UNUSED, UnresolvedInstance,
                            build_driver_map, lint, render)
from rtlfix.verilog.parser import parse_source

from support import oracle_lint, random_design


def dmap(text, path="t.v"):
    return build_driver_map(parse_source([(path, text)]))


def kinds(text, top="m"):
    return [(d.kind, d.net, d.bits) for d in lint(dmap(text), top)]


def test_single_driver_and_read():
    m = dmap("module m(input a, output b);\n  wire w;\n  assign w = a;\n  assign b = w;\nendmodule\n")
    w = m.net("m", "w")
    assert [len(d) for d in w.drivers] == [1]
    assert any(m.net("m", "a").readers[0])


def test_part_select_drivers():
    m = dmap("module m(input [1:0] x, output [3:0] y);\n  wire [3:0] w;\n  assign w[1:0] = x;\n"
             "  assign y = w;\nendmodule\n")
    w = m.net("m", "w")
    assert [bool(d) for d in w.drivers] == [True, True, False, False]


def test_two_always_blocks_two_drivers():
    text = ("module m(input clk, input a, output r);\n  reg r;\n"
            "  always @(posedge clk) r <= a;\n  always @(posedge clk) r <= ~a;\nendmodule\n")
    r = dmap(text).net("m", "r")
    assert len({s.unit for s in r.drivers[0]}) == 2
    assert kinds(text) == [(MULTI_DRIVEN, "r", (0,))]


def test_branches_of_one_block_are_one_driver():
    text = ("module m(input clk, input a, output reg r);\n"
            "  always @(posedge clk)\n    if (a) r <= 1'b0;\n    else r <= 1'b1;\nendmodule\n")
    assert kinds(text) == []


def test_mixed_continuous_and_procedural():
    text = ("module m(input clk, input a, output y);\n  reg r;\n  assign r = a;\n"
            "  always @(posedge clk) r <= a;\n  assign y = r;\nendmodule\n")
    assert kinds(text) == [(MULTI_DRIVEN, "r", (0,))]


def test_clean_design_is_silent():
    text = "module m(input [1:0] a, output [1:0] y);\n  assign y = ~a;\nendmodule\n"
    assert kinds(text) == []


def test_two_assigns_multi_driven_sites():
    text = "module m(input a, input b, output y);\n  wire w;\n  assign w = a;\n  assign w = b;\n  assign y = w;\nendmodule\n"
    (d,) = lint(dmap(text), "m")
    assert d.kind == MULTI_DRIVEN and d.bits == (0,)
    assert [s.start for s in d.sites] == [3, 4]
    assert d.render() == "t.v:2: ERROR [MultiDriven] 'w' bit [0] driven by 2 sources (t.v:3, t.v:4)"


def test_undriven_and_unused():
    text = "module m(input a, output y);\n  wire u;\n  wire dead;\n  assign dead = a;\n  assign y = u;\nendmodule\n"
    assert kinds(text) == [(UNDRIVEN, "u", (0,)), (UNUSED, "dead", ())]


def test_instance_outputs_drive_parent_nets():
    text = ("module leaf(input i, output o);\n  assign o = ~i;\nendmodule\n"
            "module m(input a, output y);\n  wire w;\n  leaf u(.i(a), .o(w));\n  assign y = w;\nendmodule\n")
    assert kinds(text) == []
    assert dmap(text).net("m", "w").drivers[0][0].kind == "instance"


def test_external_instance_exempts_nets():
    text = "module m(input a, output y);\n  wire w;\n  blackbox u(.i(a), .o(w));\n  assign y = w;\nendmodule\n"
    assert kinds(text) == []
    with pytest.raises(UnresolvedInstance):
        build_driver_map(parse_source([("t.v", text)]), strict=True)


def test_lint_limited_to_reachable_hierarchy():
    text = ("module unused_mod(input a);\n  wire dangling;\nendmodule\n"
            "module m(input a, output y);\n  assign y = a;\nendmodule\n")
    assert kinds(text, "m") == []
    assert (UNUSED, "dangling", ()) in kinds(text, None)


def test_descending_and_offset_ranges():
    text = ("module m(input [7:0] a, output [3:0] y);\n  wire [5:2] w;\n  assign w[3:2] = a[1:0];\n"
            "  assign y = w;\nendmodule\n")
    assert kinds(text) == [(PARTIALLY_DRIVEN, "w", (4, 5))]


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_oracle_equivalence_property(seed):
    design = random_design(random.Random(seed))
    ast = parse_source([("top.v", design.text)])
    diags = lint(build_driver_map(ast), "top")
    got = [(d.kind, d.net, d.bits, d.line) for d in diags]
    assert sorted(got, key=lambda d: (d[3], d[1], d[0])) == oracle_lint(ast.modules[0])
    # sorted, deterministic, and no bit outside its net's range
    assert diags == sorted(diags, key=lambda d: (d.file, d.line, d.kind == UNUSED))
    assert diags == lint(build_driver_map(ast), "top")
    ranges = {name: (min(msb, lsb), max(msb, lsb)) for name, _, msb, lsb in design.nets}
    ranges.update(clk=(0, 0), a=(0, 7), b=(0, 3), y=(0, 7))
    for d in diags:
        lo, hi = ranges[d.net]
        assert all(lo <= b <= hi for b in d.bits)


def test_render_block():
    text = "module m(input a, output y);\n  wire u;\n  assign y = u & a;\nendmodule\n"
    assert render(lint(dmap(text), "m")) == "t.v:2: WARNING [Undriven] 'u' is read but never driven"
