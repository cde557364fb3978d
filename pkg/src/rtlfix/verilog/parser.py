"""Recursive-descent parser for a synthesizable Verilog-2005 core plus the
behavioural constructs testbenches need (delays, event controls, system tasks).

Constructs outside the subset that can be skipped by keyword matching
(``generate``, ``specify``, ``defparam``) become :class:`OpaqueItem` nodes
with accurate spans instead of parse failures.
"""
from __future__ import annotations

from typing import Optional

from .ast import (
    Always, Assign, Binary, Block, Call, Case, CaseItem, Concat, Connection, ContinuousAssign,
    Declarator, DelayStmt, Disable, Event, EventStmt, Expr, FileAST, For, Forever, FunctionDecl,
    HierIdent, Ident, If, Index, IndexedSlice, Initial, Instance, Item, ModuleDecl, NetDecl,
    NullStmt, Number, OpaqueItem, ParamDecl, Port, PortDecl, Range, RealNumber, Repeat,
    RepeatStmt, Slice, SourceAST, Span, Stmt, StringLit, SysTask, TaskCall, TaskDecl, Ternary,
    Unary, WaitStmt, While,
)
from .lexer import Token, VerilogSyntaxError, preprocess, tokenize


class UnsupportedConstruct(Exception):
    def __init__(self, path: str, line: int, message: str):
        super().__init__(f"{path}:{line}: unsupported construct: {message}")
        self.path = path
        self.line = line


_NET_KINDS = ("wire", "reg", "integer", "tri", "supply0", "supply1", "time", "real", "genvar",
              "wand", "wor")

# binary operator precedence, higher binds tighter
_BINARY_PREC = {
    "||": 1,
    "&&": 2,
    "|": 3,
    "^": 4, "~^": 4, "^~": 4,
    "&": 5,
    "==": 6, "!=": 6, "===": 6, "!==": 6,
    "<": 7, "<=": 7, ">": 7, ">=": 7,
    "<<": 8, ">>": 8, "<<<": 8, ">>>": 8,
    "+": 9, "-": 9,
    "*": 10, "/": 10, "%": 10,
    "**": 11,
}
_UNARY_OPS = ("+", "-", "!", "~", "&", "|", "^", "~&", "~|", "~^", "^~")


def parse_number(text: str, line: int = 0) -> Number:
    """Decode a Verilog literal such as ``4'b10x0``, ``'hff`` or ``42``."""
    raw = text.replace("_", "")
    if "'" not in raw:
        return Number(None, int(raw), signed=True, text=text, line=line)
    size_txt, rest = raw.split("'", 1)
    size_txt = size_txt.strip()
    width = int(size_txt) if size_txt else None
    rest = rest.strip()
    signed = False
    if rest[:1] in ("s", "S"):
        signed = True
        rest = rest[1:]
    if len(rest) == 1 and rest in "01xXzZ":
        # unbased unsized fill literal
        fill = rest.lower()
        if fill == "x":
            return Number(None, 0, xmask=-1, text=text, line=line)
        if fill == "z":
            return Number(None, 0, xmask=-1, zmask=-1, text=text, line=line)
        return Number(None, -1 if fill == "1" else 0, text=text, line=line)
    base = rest[0].lower()
    digits = rest[1:].strip().lower()
    bits_per = {"b": 1, "o": 3, "h": 4}.get(base)
    value = xmask = zmask = 0
    if base == "d":
        if digits in ("x", "z", "?"):
            w = width or 32
            full = (1 << w) - 1
            return Number(width, 0, xmask=full, zmask=full if digits != "x" else 0,
                          signed=signed, text=text, line=line)
        value = int(digits)
        nbits = max(value.bit_length(), 1)
    else:
        assert bits_per is not None
        digit_mask = (1 << bits_per) - 1
        for ch in digits:
            value <<= bits_per
            xmask <<= bits_per
            zmask <<= bits_per
            if ch == "x":
                xmask |= digit_mask
            elif ch in "z?":
                xmask |= digit_mask
                zmask |= digit_mask
            else:
                value |= int(ch, 16)
        nbits = len(digits) * bits_per
        # left-extend with x/z when the leading digit is unknown
        if width is not None and width > nbits and digits and digits[0] in "xz?":
            ext = ((1 << width) - 1) ^ ((1 << nbits) - 1)
            xmask |= ext
            if digits[0] in "z?":
                zmask |= ext
    if width is not None:
        mask = (1 << width) - 1
        value &= mask
        xmask &= mask
        zmask &= mask
    value &= ~xmask
    return Number(width, value, xmask, zmask, signed=signed, text=text, line=line)


class Parser:
    def __init__(self, path: str, text: str, defines: Optional[dict[str, str]] = None):
        self.path = path
        self.text = text
        self.tokens = tokenize(preprocess(text, path, defines), path)
        self.pos = 0

    # ------------------------------------------------------------------ tokens
    @property
    def tok(self) -> Token:
        return self.tokens[self.pos]

    def peek(self, offset: int = 1) -> Token:
        idx = min(self.pos + offset, len(self.tokens) - 1)
        return self.tokens[idx]

    def advance(self) -> Token:
        t = self.tokens[self.pos]
        if t.kind != "eof":
            self.pos += 1
        return t

    @property
    def last_line(self) -> int:
        return self.tokens[self.pos - 1].line if self.pos > 0 else 1

    def error(self, message: str, tok: Optional[Token] = None) -> VerilogSyntaxError:
        t = tok or self.tok
        return VerilogSyntaxError(self.path, t.line, message)

    def at(self, text: str) -> bool:
        return self.tok.text == text and self.tok.kind in ("op", "kw")

    def accept(self, text: str) -> bool:
        if self.at(text):
            self.advance()
            return True
        return False

    def expect(self, text: str) -> Token:
        if not self.at(text):
            found = self.tok.text or "end of file"
            raise self.error(f"expected '{text}' but found '{found}'")
        return self.advance()

    def expect_ident(self) -> str:
        if self.tok.kind != "id":
            found = self.tok.text or "end of file"
            raise self.error(f"expected identifier but found '{found}'")
        return self.advance().text

    def span_from(self, start: int) -> Span:
        return Span(self.path, start, self.last_line)

    # ----------------------------------------------------------------- toplevel
    def parse_file(self) -> FileAST:
        modules = []
        while self.tok.kind != "eof":
            if self.at("module") or self.at("macromodule"):
                modules.append(self.parse_module())
            elif self.at("endmodule"):
                raise self.error("'endmodule' without matching 'module'")
            elif self.at(";"):
                self.advance()
            else:
                raise self.error(f"unexpected '{self.tok.text}' outside of a module")
        return FileAST(self.path, modules, self.text)

    def parse_module(self) -> ModuleDecl:
        start = self.advance().line
        name = self.expect_ident()
        params: list[ParamDecl] = []
        ports: list[Port] = []
        if self.accept("#"):
            params = self.parse_header_params()
        if self.accept("("):
            if not self.at(")"):
                ports = self.parse_port_list()
            self.expect(")")
        self.expect(";")
        items: list[Item] = []
        while not self.at("endmodule"):
            if self.tok.kind == "eof":
                raise self.error(f"missing 'endmodule' for module '{name}'")
            if self.at("module"):
                raise self.error(f"missing 'endmodule' for module '{name}'")
            item = self.parse_item(ports)
            if item is not None:
                items.extend(item if isinstance(item, list) else [item])
        self.expect("endmodule")
        return ModuleDecl(name, ports, params, items, self.span_from(start))

    def parse_header_params(self) -> list[ParamDecl]:
        self.expect("(")
        decls = []
        local = False
        while not self.at(")"):
            start = self.tok.line
            if self.accept("parameter"):
                local = False
            elif self.accept("localparam"):
                local = True
            self.accept("integer")
            self.accept("signed")
            rng = self.parse_range() if self.at("[") else None
            pname = self.expect_ident()
            self.expect("=")
            value = self.parse_expr()
            decls.append(ParamDecl(self.span_from(start), local, rng, [(pname, value)]))
            if not self.accept(","):
                break
        self.expect(")")
        return decls

    def parse_port_list(self) -> list[Port]:
        ports: list[Port] = []
        direction: Optional[str] = None
        is_reg = signed = False
        rng: Optional[Range] = None
        while True:
            if self.tok.text in ("input", "output", "inout") and self.tok.kind == "kw":
                direction = self.advance().text
                is_reg = signed = False
                rng = None
                if self.tok.text in ("wire", "reg", "tri") and self.tok.kind == "kw":
                    is_reg = self.advance().text == "reg"
                if self.accept("signed"):
                    signed = True
                if self.at("["):
                    rng = self.parse_range()
            line = self.tok.line
            pname = self.expect_ident()
            ports.append(Port(pname, direction, rng, is_reg, signed, line))
            if not self.accept(","):
                break
        return ports

    def parse_range(self) -> Range:
        self.expect("[")
        msb = self.parse_expr()
        self.expect(":")
        lsb = self.parse_expr()
        self.expect("]")
        return Range(msb, lsb)

    # -------------------------------------------------------------------- items
    def parse_item(self, ports: list[Port]):
        t = self.tok
        start = t.line
        if t.kind == "op" and t.text == ";":
            self.advance()
            return None
        if t.kind == "op" and t.text == "(" and self.peek().text == "*":
            self.skip_attribute()
            return None
        if t.kind == "kw":
            kw = t.text
            if kw in ("input", "output", "inout"):
                return self.parse_port_decl(ports)
            if kw in _NET_KINDS:
                return self.parse_net_decl()
            if kw in ("parameter", "localparam"):
                return self.parse_param_decl()
            if kw == "assign":
                self.advance()
                assigns = []
                while True:
                    lhs = self.parse_lvalue()
                    self.expect("=")
                    assigns.append((lhs, self.parse_expr()))
                    if not self.accept(","):
                        break
                self.expect(";")
                return ContinuousAssign(self.span_from(start), assigns)
            if kw == "always":
                self.advance()
                body = self.parse_stmt()
                return Always(self.span_from(start), body)
            if kw == "initial":
                self.advance()
                body = self.parse_stmt()
                return Initial(self.span_from(start), body)
            if kw == "function":
                return self.parse_function()
            if kw == "task":
                return self.parse_task()
            if kw in ("generate", "specify"):
                return self.skip_opaque(kw, "end" + kw)
            if kw == "defparam":
                return self.skip_opaque(kw, ";")
            raise self.error(f"unexpected keyword '{kw}' in module body")
        if t.kind == "id":
            return self.parse_instances()
        raise self.error(f"unexpected '{t.text or 'end of file'}' in module body")

    def skip_attribute(self) -> None:
        self.expect("(")
        while not (self.at("*") and self.peek().text == ")"):
            if self.tok.kind == "eof":
                raise self.error("unterminated attribute")
            self.advance()
        self.advance()
        self.advance()

    def skip_opaque(self, kw: str, terminator: str) -> OpaqueItem:
        start_tok = self.advance()
        depth = 1
        while depth:
            if self.tok.kind == "eof":
                raise UnsupportedConstruct(self.path, start_tok.line, f"unterminated '{kw}'")
            if terminator != ";" and self.tok.text == kw and self.tok.kind == "kw":
                depth += 1
            elif self.tok.text == terminator:
                depth -= 1
            self.advance()
        span = self.span_from(start_tok.line)
        lines = self.text.split("\n")[span.start - 1:span.end]
        return OpaqueItem(span, kw, "\n".join(lines))

    def parse_declarators(self, allow_array: bool = True) -> list[Declarator]:
        names = []
        while True:
            dname = self.expect_ident()
            array = None
            if allow_array and self.at("["):
                array = self.parse_range()
            init = None
            if self.accept("="):
                init = self.parse_expr()
            names.append(Declarator(dname, array, init))
            if not self.accept(","):
                break
        return names

    def parse_port_decl(self, ports: list[Port]) -> PortDecl:
        start = self.tok.line
        direction = self.advance().text
        is_reg = signed = False
        if self.tok.text in ("wire", "reg", "tri") and self.tok.kind == "kw":
            is_reg = self.advance().text == "reg"
        if self.accept("signed"):
            signed = True
        rng = self.parse_range() if self.at("[") else None
        names = self.parse_declarators(allow_array=False)
        self.expect(";")
        for d in names:
            for p in ports:
                if p.name == d.name:
                    p.direction = direction
                    p.range = rng
                    p.is_reg = p.is_reg or is_reg
                    p.signed = signed
        return PortDecl(self.span_from(start), direction, rng, names, is_reg, signed)

    def parse_net_decl(self) -> NetDecl:
        start = self.tok.line
        kind = self.advance().text
        signed = False
        if self.accept("signed"):
            signed = True
        if kind in ("integer",):
            signed = True
        rng = self.parse_range() if self.at("[") else None
        names = self.parse_declarators()
        self.expect(";")
        return NetDecl(self.span_from(start), kind, rng, names, signed)

    def parse_param_decl(self) -> ParamDecl:
        start = self.tok.line
        local = self.advance().text == "localparam"
        self.accept("integer")
        self.accept("signed")
        rng = self.parse_range() if self.at("[") else None
        assigns = []
        while True:
            pname = self.expect_ident()
            self.expect("=")
            assigns.append((pname, self.parse_expr()))
            if not self.accept(","):
                break
        self.expect(";")
        return ParamDecl(self.span_from(start), local, rng, assigns)

    def parse_instances(self) -> list[Instance]:
        start = self.tok.line
        module = self.advance().text
        params: list[Connection] = []
        if self.accept("#"):
            if self.accept("("):
                params = self.parse_connections()
                self.expect(")")
            else:
                params = [Connection(None, self.parse_primary())]
        out = []
        while True:
            if self.tok.kind != "id":
                raise self.error(f"expected instance name after '{module}'")
            iname = self.advance().text
            if self.at("["):
                self.parse_range()
            self.expect("(")
            conns = self.parse_connections() if not self.at(")") else []
            self.expect(")")
            out.append((iname, conns))
            if not self.accept(","):
                break
        self.expect(";")
        span = self.span_from(start)
        return [Instance(span, module, iname, params, conns) for iname, conns in out]

    def parse_connections(self) -> list[Connection]:
        conns = []
        while True:
            if self.accept("."):
                pname = self.expect_ident()
                self.expect("(")
                expr = None if self.at(")") else self.parse_expr()
                self.expect(")")
                conns.append(Connection(pname, expr))
            elif self.at(",") or self.at(")"):
                conns.append(Connection(None, None))
            else:
                conns.append(Connection(None, self.parse_expr()))
            if not self.accept(","):
                break
        return conns

    def parse_sub_decls(self, end_kw: str):
        inputs: list[PortDecl] = []
        decls: list[NetDecl] = []
        while self.tok.kind == "kw" and self.tok.text in ("input", "output", "inout") + _NET_KINDS:
            if self.tok.text in ("input", "output", "inout"):
                inputs.append(self.parse_port_decl([]))
            else:
                decls.append(self.parse_net_decl())
        return inputs, decls

    def parse_function(self) -> FunctionDecl:
        start = self.advance().line
        self.accept("automatic")
        signed = self.accept("signed")
        if self.at("integer"):
            self.advance()
            rng = Range(Number(32, 31), Number(32, 0))
            signed = True
        else:
            rng = self.parse_range() if self.at("[") else None
        fname = self.expect_ident()
        inputs: list[PortDecl] = []
        if self.accept("("):
            inputs = self.parse_ansi_sub_ports()
            self.expect(")")
        self.expect(";")
        more_inputs, decls = self.parse_sub_decls("endfunction")
        body = self.parse_stmt()
        if not self.at("endfunction"):
            body_stmts = [body]
            while not self.at("endfunction"):
                if self.tok.kind == "eof":
                    raise self.error("missing 'endfunction'")
                body_stmts.append(self.parse_stmt())
            body = Block(Span(self.path, body_stmts[0].span.start, body_stmts[-1].span.end), body_stmts)
        self.expect("endfunction")
        return FunctionDecl(self.span_from(start), fname, rng, inputs + more_inputs, decls, body, signed)

    def parse_ansi_sub_ports(self) -> list[PortDecl]:
        out = []
        while True:
            start = self.tok.line
            direction = "input"
            if self.tok.text in ("input", "output", "inout"):
                direction = self.advance().text
            is_reg = False
            if self.tok.text in ("wire", "reg"):
                is_reg = self.advance().text == "reg"
            signed = self.accept("signed")
            rng = self.parse_range() if self.at("[") else None
            pname = self.expect_ident()
            out.append(PortDecl(self.span_from(start), direction, rng, [Declarator(pname)], is_reg, signed))
            if not self.accept(","):
                break
        return out

    def parse_task(self) -> TaskDecl:
        start = self.advance().line
        self.accept("automatic")
        tname = self.expect_ident()
        inputs: list[PortDecl] = []
        if self.accept("("):
            if not self.at(")"):
                inputs = self.parse_ansi_sub_ports()
            self.expect(")")
        self.expect(";")
        more_inputs, decls = self.parse_sub_decls("endtask")
        stmts = []
        while not self.at("endtask"):
            if self.tok.kind == "eof":
                raise self.error("missing 'endtask'")
            stmts.append(self.parse_stmt())
        if len(stmts) == 1:
            body = stmts[0]
        else:
            first = stmts[0].span.start if stmts else self.tok.line
            body = Block(Span(self.path, first, self.last_line), stmts)
        self.expect("endtask")
        return TaskDecl(self.span_from(start), tname, inputs + more_inputs, decls, body)

    # --------------------------------------------------------------- statements
    def parse_stmt_or_null(self) -> Optional[Stmt]:
        if self.accept(";"):
            return None
        return self.parse_stmt()

    def parse_stmt(self) -> Stmt:
        t = self.tok
        start = t.line
        if t.kind == "op" and t.text == ";":
            self.advance()
            return NullStmt(self.span_from(start))
        if t.kind == "kw":
            kw = t.text
            if kw in ("begin", "fork"):
                self.advance()
                name = None
                if self.accept(":"):
                    name = self.expect_ident()
                stmts = []
                closer = "end" if kw == "begin" else "join"
                while not self.at(closer):
                    if self.tok.kind == "eof" or self.at("endmodule"):
                        raise self.error(f"missing '{closer}' for '{kw}' opened at line {start}")
                    stmts.append(self.parse_stmt())
                self.advance()
                return Block(self.span_from(start), stmts, name)
            if kw == "if":
                self.advance()
                self.expect("(")
                cond = self.parse_expr()
                self.expect(")")
                then = self.parse_stmt_or_null()
                other = None
                if self.accept("else"):
                    other = self.parse_stmt_or_null()
                return If(self.span_from(start), cond, then, other)
            if kw in ("case", "casez", "casex"):
                return self.parse_case()
            if kw == "for":
                self.advance()
                self.expect("(")
                init = self.parse_assignment(start, blocking_only=True)
                self.expect(";")
                cond = self.parse_expr()
                self.expect(";")
                step = self.parse_assignment(start, blocking_only=True)
                self.expect(")")
                body = self.parse_stmt_or_null()
                return For(self.span_from(start), init, cond, step, body)
            if kw == "while":
                self.advance()
                self.expect("(")
                cond = self.parse_expr()
                self.expect(")")
                body = self.parse_stmt_or_null()
                return While(self.span_from(start), cond, body)
            if kw == "repeat":
                self.advance()
                self.expect("(")
                count = self.parse_expr()
                self.expect(")")
                body = self.parse_stmt_or_null()
                return RepeatStmt(self.span_from(start), count, body)
            if kw == "forever":
                self.advance()
                body = self.parse_stmt_or_null()
                return Forever(self.span_from(start), body)
            if kw == "wait":
                self.advance()
                self.expect("(")
                cond = self.parse_expr()
                self.expect(")")
                body = self.parse_stmt_or_null()
                return WaitStmt(self.span_from(start), cond, body)
            if kw == "disable":
                self.advance()
                target = self.expect_ident()
                self.expect(";")
                return Disable(self.span_from(start), target)
            if kw in ("force", "release", "assign", "deassign"):
                raise UnsupportedConstruct(self.path, start, f"procedural '{kw}'")
            raise self.error(f"unexpected keyword '{kw}' in statement")
        if t.kind == "op" and t.text == "#":
            self.advance()
            amount = self.parse_delay_value()
            body = self.parse_stmt_or_null()
            return DelayStmt(self.span_from(start), amount, body)
        if t.kind == "op" and t.text == "@":
            self.advance()
            events = self.parse_event_control()
            body = self.parse_stmt_or_null()
            return EventStmt(self.span_from(start), events, body)
        if t.kind == "sysid":
            name = self.advance().text
            args: list[Expr] = []
            if self.accept("("):
                if not self.at(")"):
                    args = self.parse_call_args()
                self.expect(")")
            self.expect(";")
            return SysTask(self.span_from(start), name, args)
        if t.kind == "id" and self.peek().text in (";", "(") and self.peek().kind == "op":
            # task enable
            name = self.advance().text
            args = []
            if self.accept("("):
                if not self.at(")"):
                    args = self.parse_call_args()
                self.expect(")")
            self.expect(";")
            return TaskCall(self.span_from(start), name, args)
        stmt = self.parse_assignment(start)
        self.expect(";")
        stmt.span = self.span_from(start)
        return stmt

    def parse_call_args(self) -> list[Expr]:
        args = []
        while True:
            if self.at(",") or self.at(")"):
                args.append(StringLit("", line=self.tok.line))
            else:
                args.append(self.parse_expr())
            if not self.accept(","):
                break
        return args

    def parse_delay_value(self) -> Expr:
        if self.accept("("):
            e = self.parse_expr()
            self.expect(")")
            return e
        if self.tok.kind == "num":
            t = self.advance()
            if "." in t.text and "'" not in t.text:
                return RealNumber(float(t.text.replace("_", "")), line=t.line)
            return parse_number(t.text, t.line)
        if self.tok.kind == "id":
            return Ident(self.advance().text, line=self.last_line)
        raise self.error("expected delay value")

    def parse_event_control(self) -> Optional[list[Event]]:
        if self.accept("*"):
            return None
        if self.tok.kind == "id":
            return [Event(None, Ident(self.advance().text, line=self.last_line))]
        self.expect("(")
        if self.at("*"):
            self.advance()
            self.expect(")")
            return None
        events = []
        while True:
            edge = None
            if self.tok.text in ("posedge", "negedge"):
                edge = self.advance().text
            events.append(Event(edge, self.parse_expr()))
            if not (self.accept("or") or self.accept(",")):
                break
        self.expect(")")
        return events

    def parse_case(self) -> Case:
        start = self.tok.line
        kind = self.advance().text
        self.expect("(")
        expr = self.parse_expr()
        self.expect(")")
        items = []
        while not self.at("endcase"):
            if self.tok.kind == "eof" or self.at("endmodule"):
                raise self.error(f"missing 'endcase' for case at line {start}")
            istart = self.tok.line
            if self.accept("default"):
                self.accept(":")
                exprs = None
            else:
                exprs = [self.parse_expr()]
                while self.accept(","):
                    exprs.append(self.parse_expr())
                self.expect(":")
            body = self.parse_stmt_or_null()
            items.append(CaseItem(exprs, body, self.span_from(istart)))
        self.expect("endcase")
        return Case(self.span_from(start), kind, expr, items)

    def parse_assignment(self, start: int, blocking_only: bool = False) -> Assign:
        lhs = self.parse_lvalue()
        if self.accept("="):
            blocking = True
        elif not blocking_only and self.accept("<="):
            blocking = False
        else:
            found = self.tok.text or "end of file"
            raise self.error(f"expected assignment operator but found '{found}'")
        delay = None
        if self.accept("#"):
            delay = self.parse_delay_value()
        rhs = self.parse_expr()
        return Assign(self.span_from(start), lhs, rhs, blocking, delay)

    def parse_lvalue(self) -> Expr:
        if self.at("{"):
            line = self.advance().line
            parts = [self.parse_lvalue()]
            while self.accept(","):
                parts.append(self.parse_lvalue())
            self.expect("}")
            return Concat(parts, line=line)
        if self.tok.kind != "id":
            found = self.tok.text or "end of file"
            raise self.error(f"expected assignment target but found '{found}'")
        return self.parse_selects(self.parse_name())

    # -------------------------------------------------------------- expressions
    def parse_expr(self) -> Expr:
        cond = self.parse_binary(1)
        if self.at("?"):
            line = self.advance().line
            then = self.parse_expr()
            self.expect(":")
            other = self.parse_expr()
            return Ternary(cond, then, other, line=line)
        return cond

    def parse_binary(self, min_prec: int) -> Expr:
        left = self.parse_unary()
        while True:
            t = self.tok
            prec = _BINARY_PREC.get(t.text) if t.kind == "op" else None
            if prec is None or prec < min_prec:
                return left
            self.advance()
            # ** is right associative, everything else left
            right = self.parse_binary(prec if t.text == "**" else prec + 1)
            left = Binary(t.text, left, right, line=t.line)

    def parse_unary(self) -> Expr:
        t = self.tok
        if t.kind == "op" and t.text in _UNARY_OPS:
            self.advance()
            return Unary(t.text, self.parse_unary(), line=t.line)
        return self.parse_primary()

    def parse_name(self) -> Expr:
        t = self.advance()
        if self.at(".") and self.peek().kind == "id":
            parts = [t.text]
            while self.at(".") and self.peek().kind == "id":
                self.advance()
                parts.append(self.advance().text)
            return HierIdent(parts, line=t.line)
        return Ident(t.text, line=t.line)

    def parse_selects(self, base: Expr) -> Expr:
        while self.at("["):
            line = self.advance().line
            first = self.parse_expr()
            if self.accept(":"):
                lsb = self.parse_expr()
                self.expect("]")
                base = Slice(base, first, lsb, line=line)
            elif self.at("+:") or self.at("-:"):
                asc = self.advance().text == "+:"
                width = self.parse_expr()
                self.expect("]")
                base = IndexedSlice(base, first, width, asc, line=line)
            else:
                self.expect("]")
                base = Index(base, first, line=line)
        return base

    def parse_primary(self) -> Expr:
        t = self.tok
        if t.kind == "num":
            self.advance()
            if "." in t.text and "'" not in t.text:
                return RealNumber(float(t.text.replace("_", "")), line=t.line)
            return parse_number(t.text, t.line)
        if t.kind == "str":
            self.advance()
            return StringLit(bytes(t.text[1:-1], "utf-8").decode("unicode_escape"), line=t.line)
        if t.kind == "sysid":
            self.advance()
            args: list[Expr] = []
            if self.accept("("):
                if not self.at(")"):
                    args = self.parse_call_args()
                self.expect(")")
            return Call(t.text, args, line=t.line)
        if t.kind == "id":
            if self.peek().text == "(" and self.peek().kind == "op":
                self.advance()
                self.advance()
                args = self.parse_call_args() if not self.at(")") else []
                self.expect(")")
                return Call(t.text, args, line=t.line)
            return self.parse_selects(self.parse_name())
        if t.kind == "op" and t.text == "(":
            self.advance()
            e = self.parse_expr()
            self.expect(")")
            return e
        if t.kind == "op" and t.text == "{":
            self.advance()
            first = self.parse_expr()
            if self.at("{"):
                self.advance()
                parts = [self.parse_expr()]
                while self.accept(","):
                    parts.append(self.parse_expr())
                self.expect("}")
                self.expect("}")
                return self.parse_selects(Repeat(first, parts, line=t.line))
            parts = [first]
            while self.accept(","):
                parts.append(self.parse_expr())
            self.expect("}")
            return Concat(parts, line=t.line)
        found = t.text or "end of file"
        raise self.error(f"unexpected '{found}' in expression")


def parse_file(path: str, text: str, defines: Optional[dict[str, str]] = None) -> FileAST:
    return Parser(path, text, defines).parse_file()


def parse_source(files: list[tuple[str, str]], defines: Optional[dict[str, str]] = None) -> SourceAST:
    """Parse ``(path, text)`` pairs into one :class:`SourceAST`.

    Raises :class:`VerilogSyntaxError` on malformed input.
    """
    shared = dict(defines or {})
    out = []
    for path, text in files:
        out.append(parse_file(path, text, shared))
    return SourceAST(out)
