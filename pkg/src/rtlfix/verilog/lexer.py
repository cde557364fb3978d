"""Tokenizer and a line-preserving preprocessor for the supported Verilog subset."""
from __future__ import annotations

import re
from dataclasses import dataclass


class VerilogSyntaxError(Exception):
    """Malformed source text.  Carries the file path and 1-based line."""

    def __init__(self, path: str, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.path = path
        self.line = line
        self.message = message


@dataclass(frozen=True)
class Token:
    kind: str  # id, sysid, num, str, op, kw, eof
    text: str
    line: int


KEYWORDS = frozenset(
    """
    module endmodule macromodule input output inout wire reg integer parameter localparam
    assign always initial begin end if else case casez casex endcase default
    posedge negedge or for while repeat forever function endfunction task endtask
    generate endgenerate genvar signed unsigned tri supply0 supply1 wand wor time real
    defparam specify endspecify fork join wait disable automatic deassign force release
    """.split()
)

# longest operators first
_OPERATORS = [
    "<<<", ">>>", "===", "!==",
    "<<", ">>", "==", "!=", "<=", ">=", "&&", "||", "~&", "~|", "~^", "^~", "**", "+:", "-:", "->",
    "+", "-", "*", "/", "%", "<", ">", "!", "~", "&", "|", "^", "?", ":", ";", ",", ".",
    "(", ")", "[", "]", "{", "}", "=", "#", "@",
]

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\f\v]+)
  | (?P<nl>\n)
  | (?P<lcomment>//[^\n]*)
  | (?P<bcomment>/\*.*?\*/)
  | (?P<based>(?:[0-9][0-9_]*[ \t]*)?'[sS]?[bBoOdDhH][ \t]*[0-9a-fA-FxXzZ?_]+)
  | (?P<unbased>'[01xXzZ])
  | (?P<real>[0-9][0-9_]*\.[0-9][0-9_]*(?:[eE][+-]?[0-9]+)?)
  | (?P<dec>[0-9][0-9_]*)
  | (?P<sysid>\$[A-Za-z_][A-Za-z0-9_$]*)
  | (?P<id>[A-Za-z_][A-Za-z0-9_$]*)
  | (?P<escid>\\[^\s]+)
  | (?P<str>"(?:[^"\\\n]|\\.)*")
  | (?P<op>"""
    + "|".join(re.escape(op) for op in _OPERATORS)
    + r""")
    """,
    re.VERBOSE | re.DOTALL,
)

_DIRECTIVE_RE = re.compile(r"`([A-Za-z_][A-Za-z0-9_]*)")


def preprocess(text: str, path: str = "<input>", defines: dict[str, str] | None = None) -> str:
    """Resolve `define/`ifdef style directives while keeping every line in place.

    Directive lines become blank lines so that line numbers in the output
    match the original file exactly.  Only object-like macros are supported.
    """
    macros = dict(defines or {})
    out: list[str] = []
    # stack of (active, taken) for conditional blocks
    stack: list[tuple[bool, bool]] = []
    active = True
    for lineno, line in enumerate(text.split("\n"), start=1):
        stripped = line.strip()
        if stripped.startswith("`"):
            m = _DIRECTIVE_RE.match(stripped)
            name = m.group(1) if m else ""
            rest = stripped[m.end():].strip() if m else ""
            if name in ("ifdef", "ifndef"):
                cond = (rest.split()[0] in macros) if rest else False
                if name == "ifndef":
                    cond = not cond
                stack.append((active, cond))
                active = active and cond
                out.append("")
                continue
            if name == "elsif":
                if not stack:
                    raise VerilogSyntaxError(path, lineno, "`elsif without `ifdef")
                parent, taken = stack[-1]
                cond = bool(rest) and rest.split()[0] in macros
                active = parent and not taken and cond
                stack[-1] = (parent, taken or cond)
                out.append("")
                continue
            if name == "else":
                if not stack:
                    raise VerilogSyntaxError(path, lineno, "`else without `ifdef")
                parent, taken = stack[-1]
                active = parent and not taken
                stack[-1] = (parent, True)
                out.append("")
                continue
            if name == "endif":
                if not stack:
                    raise VerilogSyntaxError(path, lineno, "`endif without `ifdef")
                active, _ = stack.pop()
                out.append("")
                continue
            if not active:
                out.append("")
                continue
            if name == "define":
                parts = rest.split(None, 1)
                if not parts:
                    raise VerilogSyntaxError(path, lineno, "`define without a name")
                body = parts[1] if len(parts) > 1 else ""
                body = body.split("//", 1)[0].strip()
                macros[parts[0]] = body
                out.append("")
                continue
            if name == "undef":
                macros.pop(rest.split()[0] if rest else "", None)
                out.append("")
                continue
            if name in ("timescale", "include", "default_nettype", "resetall",
                        "celldefine", "endcelldefine"):
                out.append("")
                continue
        if not active:
            out.append("")
            continue
        if "`" in line:
            line = _expand_macros(line, macros, path, lineno)
        out.append(line)
    if stack:
        raise VerilogSyntaxError(path, len(out), "unterminated `ifdef")
    return "\n".join(out)


def _expand_macros(line: str, macros: dict[str, str], path: str, lineno: int) -> str:
    for _ in range(16):
        def repl(m: re.Match) -> str:
            name = m.group(1)
            if name not in macros:
                raise VerilogSyntaxError(path, lineno, f"undefined macro `{name}")
            return macros[name]

        new = _DIRECTIVE_RE.sub(repl, line)
        if new == line or "`" not in new:
            return new
        line = new
    raise VerilogSyntaxError(path, lineno, "recursive macro expansion")


def tokenize(text: str, path: str = "<input>") -> list[Token]:
    tokens: list[Token] = []
    line = 1
    pos = 0
    n = len(text)
    while pos < n:
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            if text.startswith("/*", pos):
                raise VerilogSyntaxError(path, line, "unterminated block comment")
            raise VerilogSyntaxError(path, line, f"unexpected character {text[pos]!r}")
        kind = m.lastgroup
        value = m.group()
        if kind == "nl":
            line += 1
        elif kind in ("ws", "lcomment"):
            pass
        elif kind == "bcomment":
            line += value.count("\n")
        elif kind == "id":
            tokens.append(Token("kw" if value in KEYWORDS else "id", value, line))
        elif kind == "escid":
            tokens.append(Token("id", value[1:], line))
        elif kind in ("based", "unbased", "dec", "real"):
            tokens.append(Token("num", value, line))
        else:
            tokens.append(Token(kind, value, line))
        pos = m.end()
    tokens.append(Token("eof", "", line))
    return tokens
