from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rtlfix.verilog import ast as A
from rtlfix.verilog.lexer import VerilogSyntaxError, preprocess, tokenize
from rtlfix.verilog.parser import parse_number, parse_source
from rtlfix.verilog.segment import StaleSegment, item_lines, render_segment, segment

from support import CASES, FIXTURES, REFERENCE


def corpus():
    paths = sorted(CASES.glob("*/src/*.v")) + sorted(CASES.glob("*/tb/*.v"))
    paths += sorted(REFERENCE.glob("*/*.v")) + sorted((FIXTURES / "lint").glob("*.v"))
    return [(p.relative_to(FIXTURES).as_posix(), p.read_text()) for p in paths]


def always_block(name, n_lines):
    body = [f"    {name} <= {name} + 1'b1; // {i}" for i in range(n_lines - 2)]
    return ["  always @(posedge clk) begin"] + body + ["  end"]


def test_minimal_module():
    ast = parse_source([("m.v", "module m(input a, output b); assign b = a; endmodule")])
    (m,) = ast.modules
    assert m.name == "m"
    assert [(p.name, p.direction) for p in m.ports] == [("a", "input"), ("b", "output")]
    assert [type(i) for i in m.items] == [A.ContinuousAssign]


def test_unbalanced_endmodule_reports_line():
    text = "module m(input a);\nwire w;\nendmodule\nendmodule\n"
    with pytest.raises(VerilogSyntaxError) as err:
        parse_source([("bad.v", text)])
    assert err.value.line == 4 and err.value.path == "bad.v"


def test_three_modules_partition_file():
    text = ("module a(input x);\nendmodule\n\n"
            "module b(input y);\n  wire w;\nendmodule\n"
            "// between\nmodule c(output z);\n  assign z = 1'b0;\n\nendmodule\n")
    mods = parse_source([("three.v", text)]).modules
    assert [(m.name, m.span.start, m.span.end) for m in mods] == [("a", 1, 2), ("b", 4, 6), ("c", 8, 11)]


def test_number_literals():
    assert (parse_number("4'b1010").width, parse_number("4'b1010").value) == (4, 10)
    n = parse_number("8'hx5")
    assert n.width == 8 and n.value == 5 and n.xmask == 0xF0
    assert parse_number("12").width is None
    assert parse_number("'d7").value == 7


def test_define_substitution():
    text = "`define W 8\nmodule m(input [`W-1:0] a);\nendmodule\n"
    assert "8-1" in preprocess(text)
    (m,) = parse_source([("d.v", text)]).modules
    assert m.ports[0].range.msb.left.value == 8


def test_tokenize_skips_comments():
    toks = tokenize("a /* x\n y */ = b; // c\n")
    assert [(t.text, t.line) for t in toks if t.kind != "eof"] == [("a", 1), ("=", 2), ("b", 2), (";", 2)]


def test_functions_and_generate_tolerated():
    text = ("module m(input [3:0] a, output [3:0] y);\n"
            "  function [3:0] inv;\n    input [3:0] v;\n    inv = ~v;\n  endfunction\n"
            "  genvar i;\n"
            "  generate\n    for (i = 0; i < 4; i = i + 1) begin : g\n    end\n  endgenerate\n"
            "  assign y = inv(a);\nendmodule\n")
    (m,) = parse_source([("f.v", text)]).modules
    kinds = [type(i).__name__ for i in m.items]
    assert "FunctionDecl" in kinds and "OpaqueItem" in kinds
    opaque = next(i for i in m.items if isinstance(i, A.OpaqueItem))
    assert (opaque.span.start, opaque.span.end) == (7, 10)


@pytest.mark.parametrize("path,text", corpus(), ids=lambda v: v if "/" in str(v) else "")
def test_span_containment_and_order(path, text):
    ast = parse_source([(path, text)])
    for m in ast.modules:
        prev_end = 0
        for item in m.items:
            assert m.span.start <= item.span.start <= item.span.end <= m.span.end
            assert item.span.start > prev_end or item.span.start == prev_end == 0
            prev_end = item.span.end
            body = getattr(item, "body", None)
            for s in A.walk_statements(body if isinstance(body, A.Stmt) else None):
                assert item.span.start <= s.span.start <= s.span.end <= item.span.end


def module_with_blocks(sizes):
    lines = ["module m(input clk);", "  reg [7:0] r0, r1, r2;"]
    for i, n in enumerate(sizes):
        lines += always_block(f"r{i}", n)
    lines.append("endmodule")
    return "\n".join(lines) + "\n"


def test_segment_three_blocks_small_limit():
    text = module_with_blocks([10, 10, 10]).replace("  reg [7:0] r0, r1, r2;\n", "")
    segs = segment(parse_source([("s.v", text)]), 15)
    assert [(s.start, s.end) for s in segs] == [(2, 11), (12, 21), (22, 31)]


def test_segment_three_blocks_coalesced():
    text = module_with_blocks([10, 10, 10]).replace("  reg [7:0] r0, r1, r2;\n", "")
    segs = segment(parse_source([("s.v", text)]), 40)
    assert [(s.start, s.end) for s in segs] == [(2, 31)]


def test_segment_descends_into_large_block():
    body = []
    for i in range(8):
        body += [f"    if (r[{i}]) begin", f"      r[{i}] <= 1'b0;", "      r <= r + 1;", "    end",
                 "    else", f"      r[{i}] <= 1'b1;"]
    text = "\n".join(["module m(input clk);", "  reg [7:0] r;", "  always @(posedge clk) begin"]
                     + body + ["  end", "endmodule"]) + "\n"
    ast = parse_source([("big.v", text)])
    segs = segment(ast, 20)
    assert all(s.lines <= 20 for s in segs)
    assert len(segs) > 2
    assert set().union(*[set(range(s.start, s.end + 1)) for s in segs]) == item_lines(ast.modules[0])


def test_oversized_leaf_kept_whole():
    stmt = ["    r <= {"] + [f"      1'b{i % 2}," for i in range(30)] + ["      1'b0};"]
    text = "\n".join(["module m(input clk);", "  reg [31:0] r;", "  always @(posedge clk)"]
                     + stmt + ["endmodule"]) + "\n"
    segs = segment(parse_source([("leaf.v", text)]), 10)
    assert any(s.lines > 10 for s in segs)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 80), st.sampled_from(corpus()))
def test_segment_partition_property(max_lines, source):
    ast = parse_source([source])
    segs = segment(ast, max_lines)
    assert segs == segment(ast, max_lines)  # deterministic
    covered = []
    for s in segs:
        covered.extend(range(s.start, s.end + 1))
        lines = source[1].split("\n")
        assert s.text == "\n".join(lines[s.start - 1:s.end])
    assert len(covered) == len(set(covered))
    expected = set()
    for m in ast.modules:
        expected |= item_lines(m)
    assert expected <= set(covered)
    # coalescing may swallow blank or comment lines between two items, never
    # lines outside the items it joins
    for s in segs:
        assert s.start in expected and s.end in expected


def render_fixture():
    lines = ["module m(input clk);"] + [f"  wire w{i};" for i in range(2, 30)] + ["endmodule"]
    text = "\n".join(lines) + "\n"
    ast = parse_source([("r.v", text)])
    return text, segment(ast, 3)


def test_render_segment_radius():
    text, segs = render_fixture()
    seg = next(s for s in segs if s.start <= 10 <= s.end)
    seg = replace(seg, start=10, end=12)
    assert render_segment(seg, 0, text).splitlines() == ["10:   wire w10;", "11:   wire w11;", "12:   wire w12;"]
    out = render_segment(seg, 2, text).splitlines()
    assert [int(x.split(":")[0]) for x in out] == list(range(8, 15))
    head = replace(seg, start=1, end=3)
    assert [int(x.split(":")[0]) for x in render_segment(head, 5, text).splitlines()] == list(range(1, 9))


def test_render_stale_segment():
    text, segs = render_fixture()
    with pytest.raises(StaleSegment):
        render_segment(segs[0], 1, text.replace("w5", "w55"))
