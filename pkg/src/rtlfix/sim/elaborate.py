"""Elaboration: turn a parsed design into kernel signals and processes.

Expressions compile to closures returning :class:`Vec` values at a width
fixed at compile time.  Statements compile to ``(fn, timed)`` pairs: an
untimed ``fn`` runs to completion when called, a timed ``fn`` is a generator
function whose generators yield scheduler commands.
"""
from __future__ import annotations

import os
import sys
from dataclasses import dataclass
from typing import Callable, Optional, TextIO

from ..verilog import ast as A
from . import values as V
from .kernel import Driver, Finish, Kernel, Listener, Process, Signal
from .values import Vec

ExprFn = Callable[[], Vec]


@dataclass(frozen=True)
class Diagnostic:
    file: str
    line: int
    severity: str  # error | warning
    message: str

    def render(self) -> str:
        return f"{self.file}:{self.line}: {self.severity}: {self.message}"


class ElabError(Exception):
    pass


class DisableBlock(Exception):
    def __init__(self, name: str):
        super().__init__(name)
        self.name = name


@dataclass
class Param:
    value: Vec
    signed: bool


class Scope:
    def __init__(self, name: str, path: tuple[str, ...], module: Optional[A.ModuleDecl],
                 parent: Optional["Scope"] = None, local: bool = False):
        self.name = name
        self.path = path
        self.module = module
        self.parent = parent
        # function/task scopes fall back to their module for plain names
        self.local = local
        self.signals: dict[str, Signal] = {}
        self.params: dict[str, Param] = {}
        self.children: dict[str, "Scope"] = {}
        self.functions: dict[str, A.FunctionDecl] = {}
        self.tasks: dict[str, A.TaskDecl] = {}
        self.file = module.span.file if module else ""

    def lookup(self, name: str):
        sc: Optional[Scope] = self
        while sc is not None:
            if name in sc.signals:
                return sc.signals[name]
            if name in sc.params:
                return sc.params[name]
            sc = sc.parent if sc.local else None
        return None

    def module_scope(self) -> "Scope":
        sc = self
        while sc.local and sc.parent is not None:
            sc = sc.parent
        return sc


_CONTEXT_OPS = {"+", "-", "*", "/", "%", "&", "|", "^", "~^", "^~"}
_COMPARE_OPS = {"==", "!=", "===", "!==", "<", "<=", ">", ">="}
_LOGIC_OPS = {"&&", "||"}
_SHIFT_OPS = {"<<", ">>", "<<<", ">>>", "**"}
_REDUCE_OPS = {"&", "|", "^", "~&", "~|", "~^", "^~"}


def number_vec(n: A.Number) -> Vec:
    width = n.width if n.width is not None else max(32, n.value.bit_length(), n.xmask.bit_length())
    return Vec(width, n.value, n.xmask, n.zmask)


def _fmt_radix(v: Vec, bits: int, strip: bool) -> str:
    s = v.to_bin()
    pad = (-len(s)) % bits
    s = (s[0] if s and s[0] in "xz" else "0") * pad + s
    out = []
    for i in range(0, len(s), bits):
        chunk = set(s[i:i + bits])
        if chunk <= {"0", "1"}:
            out.append(format(int(s[i:i + bits], 2), "x" if bits == 4 else "o"))
        elif chunk == {"x"}:
            out.append("x")
        elif chunk == {"z"}:
            out.append("z")
        else:
            out.append("X" if "x" in chunk else "Z")
    text = "".join(out)
    if strip:
        text = text.lstrip("0") or "0"
    return text


def format_display(fmt: str, args: list[Callable[[], tuple[Vec, bool]]], time: int, scope: str) -> str:
    out = []
    i = 0
    ai = 0

    def take():
        nonlocal ai
        if ai >= len(args):
            return Vec.x(1), False
        v = args[ai]()
        ai += 1
        return v

    while i < len(fmt):
        ch = fmt[i]
        if ch != "%":
            out.append(ch)
            i += 1
            continue
        j = i + 1
        while j < len(fmt) and fmt[j].isdigit():
            j += 1
        if j >= len(fmt):
            out.append(fmt[i:])
            break
        spec = fmt[j].lower()
        zero = fmt[i + 1:j] == "0"
        i = j + 1
        if spec == "%":
            out.append("%")
        elif spec == "m":
            out.append(scope)
        elif spec == "t":
            take()
            out.append(str(time))
        elif spec == "d":
            v, signed = take()
            if v.unk:
                out.append("x" if v.unk != v.z else "z")
            else:
                n = v.to_signed() if signed else v.val
                text = str(n)
                if not zero:
                    text = text.rjust(len(str((1 << v.width) - 1)))
                out.append(text)
        elif spec == "b":
            v, _ = take()
            text = v.to_bin()
            out.append(text.lstrip("0") or "0" if zero else text)
        elif spec in ("h", "x"):
            v, _ = take()
            out.append(_fmt_radix(v, 4, zero))
        elif spec == "o":
            v, _ = take()
            out.append(_fmt_radix(v, 3, zero))
        elif spec == "c":
            v, _ = take()
            out.append(chr(v.val & 0xFF))
        elif spec == "s":
            v, _ = take()
            raw = v.val.to_bytes((v.width + 7) // 8, "big") if v.width else b""
            out.append(raw.lstrip(b"\0").decode("latin-1"))
        else:
            out.append("%" + spec)
    return "".join(out)


class Elaborator:
    def __init__(self, design: A.SourceAST, kernel: Optional[Kernel] = None,
                 out: Optional[TextIO] = None, seed: int = 0):
        self.design = design
        self.kernel = kernel or Kernel()
        self.out = out or sys.stdout
        self.diags: list[Diagnostic] = []
        self.modules = {m.name: m for m in design.modules}
        self.root: Optional[Scope] = None
        self.cur_file = ""
        self.continuous: list[Listener] = []
        self.processes: list[Callable[[], object]] = []
        self.dump_requests: list[tuple[int, list[Scope]]] = []
        self.dump_file: Optional[str] = None
        self.monitors: list[tuple[Callable[[], str], list]] = []
        self._compiled_fns: dict[int, object] = {}
        self._rand_state = seed & 0xFFFFFFFF or 0x1234567
        self._implicit_ok = False

    # ------------------------------------------------------------ diagnostics
    def error(self, line: int, message: str, file: Optional[str] = None) -> None:
        self.diags.append(Diagnostic(file or self.cur_file, line, "error", message))

    def warn(self, line: int, message: str, file: Optional[str] = None) -> None:
        self.diags.append(Diagnostic(file or self.cur_file, line, "warning", message))

    @property
    def errors(self) -> list[Diagnostic]:
        return [d for d in self.diags if d.severity == "error"]

    # ------------------------------------------------------------ elaboration
    def elaborate(self, top: str) -> Scope:
        module = self.modules.get(top)
        if module is None:
            files = self.design.files
            self.error(1, f"top module '{top}' not found", files[0].path if files else "<none>")
            raise ElabError(f"top module '{top}' not found")
        self.root = self.instantiate(module, top, (top,), {}, None)
        return self.root

    def instantiate(self, module: A.ModuleDecl, name: str, path: tuple[str, ...],
                    overrides: dict, parent: Optional[Scope], depth: int = 0) -> Scope:
        sc = Scope(name, path, module, parent)
        if self.root is None:
            self.root = sc
        saved = self.cur_file
        self.cur_file = module.span.file
        self._params(sc, module, overrides)
        self._declare(sc, module)
        for item in module.items:
            if isinstance(item, A.FunctionDecl):
                sc.functions[item.name] = item
            elif isinstance(item, A.TaskDecl):
                sc.tasks[item.name] = item
        for item in module.items:
            if isinstance(item, A.Instance):
                self._instance(sc, item, depth)
        for item in module.items:
            self.cur_file = item.span.file
            if isinstance(item, A.ContinuousAssign):
                for lhs, rhs in item.assigns:
                    self.cont_assign(lhs, sc, rhs, sc, item.span.start, implicit=True)
            elif isinstance(item, A.NetDecl):
                for d in item.names:
                    if d.init is None:
                        continue
                    sig = sc.signals.get(d.name)
                    if sig is not None and sig.is_net:
                        self.cont_assign(A.Ident(d.name, line=item.span.start), sc, d.init, sc,
                                         item.span.start)
                    elif sig is not None:
                        stmt = A.Assign(item.span, A.Ident(d.name, line=item.span.start), d.init, True)
                        fn, _ = self.stmt(stmt, sc)
                        self._add_process(lambda fn=fn: self._once(fn))
            elif isinstance(item, A.Always):
                self._always(item, sc)
            elif isinstance(item, A.Initial):
                fn, timed = self.stmt(item.body, sc)
                self._add_process((lambda fn=fn: fn()) if timed else (lambda fn=fn: self._once(fn)))
            elif isinstance(item, A.OpaqueItem):
                if item.keyword == "generate":
                    self.error(item.span.start, "unsupported construct 'generate'")
                else:
                    self.warn(item.span.start, f"ignoring '{item.keyword}'")
        self.cur_file = saved
        return sc

    @staticmethod
    def _once(fn):
        fn()
        return
        yield  # pragma: no cover

    def _add_process(self, factory: Callable[[], object]) -> None:
        self.processes.append(factory)

    def _params(self, sc: Scope, module: A.ModuleDecl, overrides: dict) -> None:
        decls = list(module.params) + [i for i in module.items if isinstance(i, A.ParamDecl)]
        positional = overrides.get(None, [])
        order = [n for d in decls if not d.local for n, _ in d.assigns]
        named = {k: v for k, v in overrides.items() if k is not None}
        for i, val in enumerate(positional):
            if i < len(order):
                named[order[i]] = val
        for k in named:
            if k not in order:
                self.error(module.span.start, f"module '{module.name}' has no parameter '{k}'")
        for d in decls:
            for pname, expr in d.assigns:
                if not d.local and pname in named:
                    value, signed = named[pname]
                else:
                    value = self.const(expr, sc)
                    signed = self.info(expr, sc)[1]
                if d.range is not None:
                    msb = self.const_int(d.range.msb, sc)
                    lsb = self.const_int(d.range.lsb, sc)
                    value = value.resize(abs(msb - lsb) + 1, signed)
                sc.params[pname] = Param(value, signed)

    def _range(self, rng: Optional[A.Range], sc: Scope) -> tuple[int, int]:
        if rng is None:
            return 0, 0
        return self.const_int(rng.msb, sc), self.const_int(rng.lsb, sc)

    def _declare(self, sc: Scope, module: A.ModuleDecl) -> None:
        info: dict[str, dict] = {}
        for p in module.ports:
            info[p.name] = {"dir": p.direction, "range": p.range, "reg": p.is_reg,
                            "signed": p.signed, "kind": "reg" if p.is_reg else "wire",
                            "array": None, "line": p.line}
        for item in module.items:
            if isinstance(item, A.PortDecl):
                for d in item.names:
                    ent = info.setdefault(d.name, {"dir": None, "range": None, "reg": False,
                                                   "signed": False, "kind": "wire", "array": None,
                                                   "line": item.span.start})
                    if ent["dir"] is None and module.port(d.name) is None:
                        self.error(item.span.start, f"'{d.name}' is not in the port list")
                    ent["dir"] = item.direction
                    if item.range is not None:
                        ent["range"] = item.range
                    if item.is_reg:
                        ent["reg"] = True
                        ent["kind"] = "reg"
                    ent["signed"] = ent["signed"] or item.signed
            elif isinstance(item, A.NetDecl):
                kind = item.kind
                if kind == "real":
                    self.error(item.span.start, "real variables are not supported")
                    continue
                for d in item.names:
                    ent = info.get(d.name)
                    if ent is not None and ent.get("declared"):
                        self.error(item.span.start, f"'{d.name}' is already declared")
                        continue
                    if ent is None:
                        ent = {"dir": None, "range": None, "reg": False, "signed": False,
                               "kind": "wire", "array": None, "line": item.span.start}
                        info[d.name] = ent
                    ent["declared"] = True
                    if kind in ("reg", "integer", "time", "genvar"):
                        ent["reg"] = True
                    ent["kind"] = {"genvar": "integer", "tri": "wire", "wand": "wire",
                                   "wor": "wire"}.get(kind, kind)
                    if item.range is not None:
                        ent["range"] = item.range
                    ent["signed"] = ent["signed"] or item.signed
                    ent["array"] = d.array
        for name, ent in info.items():
            if ent["dir"] is None and module.port(name) is not None:
                self.error(ent["line"], f"port '{name}' has no direction declaration")
            kind = ent["kind"]
            if kind in ("integer", "genvar"):
                msb, lsb, signed = 31, 0, True
            elif kind == "time":
                msb, lsb, signed = 63, 0, False
            else:
                msb, lsb = self._range(ent["range"], sc)
                signed = ent["signed"]
            array = None
            if ent["array"] is not None:
                array = self._range(ent["array"], sc)
            is_net = not ent["reg"] and kind not in ("supply0", "supply1")
            if ent["dir"] == "input" and ent["reg"]:
                self.error(ent["line"], f"input port '{name}' cannot be a reg")
            sc.signals[name] = Signal(name, sc.path, abs(msb - lsb) + 1, msb, lsb, signed, is_net,
                                      kind, array, self.cur_file, ent["line"])

    def _instance(self, sc: Scope, inst: A.Instance, depth: int) -> None:
        self.cur_file = inst.span.file
        line = inst.span.start
        module = self.modules.get(inst.module)
        if module is None:
            self.error(line, f"cannot find module '{inst.module}'")
            return
        if depth > 64:
            self.error(line, "instance hierarchy too deep (recursive instantiation?)")
            return
        if inst.name in sc.children or inst.name in sc.signals:
            self.error(line, f"duplicate name '{inst.name}'")
            return
        overrides: dict = {}
        positional = []
        for conn in inst.params:
            if conn.expr is None:
                continue
            val = (self.const(conn.expr, sc), self.info(conn.expr, sc)[1])
            if conn.port is None:
                positional.append(val)
            else:
                overrides[conn.port] = val
        if positional:
            overrides[None] = positional
        child = self.instantiate(module, inst.name, sc.path + (inst.name,), overrides, sc, depth + 1)
        sc.children[inst.name] = child
        self.cur_file = inst.span.file
        named = all(c.port is not None for c in inst.connections)
        if inst.connections and not named and any(c.port is not None for c in inst.connections):
            self.error(line, "cannot mix named and positional port connections")
            return
        pairs = []
        for i, conn in enumerate(inst.connections):
            if conn.port is not None:
                port = module.port(conn.port)
                if port is None:
                    self.error(line, f"module '{module.name}' has no port '{conn.port}'")
                    continue
            else:
                if i >= len(module.ports):
                    if conn.expr is not None:
                        self.error(line, f"too many port connections for '{module.name}'")
                    continue
                port = module.ports[i]
            pairs.append((port, conn.expr))
        for port, expr in pairs:
            if expr is None:
                continue
            csig = child.signals.get(port.name)
            if csig is None:
                continue
            lw = csig.width
            rw = self.info(expr, sc)[0] if not isinstance(expr, A.Ident) or sc.lookup(expr.name) else lw
            if lw != rw:
                self.warn(expr.line or line, f"port '{port.name}' of '{inst.name}' is {lw} bits "
                          f"but the connected expression is {rw} bits")
            if port.direction == "output":
                self.cont_assign(expr, sc, A.Ident(port.name, line=line), child, line, implicit=True)
            else:
                self.cont_assign(A.Ident(port.name, line=line), child, expr, sc, line, implicit=True)

    def _always(self, item: A.Always, sc: Scope) -> None:
        body = item.body
        fn, timed = self.stmt(body, sc)
        if not timed:
            self.error(item.span.start, "always block has no timing control")
            return
        comb = isinstance(body, A.EventStmt) and body.events is None
        inner = None
        if comb:
            inner, _ = self.stmt(body.body, sc) if body.body is not None else ((lambda: None), False)

        def gen(fn=fn, inner=inner, comb=comb):
            if comb and inner is not None:
                r = inner()
                if r is not None:
                    yield from r
            while True:
                yield from fn()
        self._add_process(gen)

    # ------------------------------------------------------------- resolution
    def resolve(self, e: A.Expr, sc: Scope):
        if isinstance(e, A.Ident):
            return sc.lookup(e.name)
        if isinstance(e, A.HierIdent):
            return self.resolve_hier(e.parts, sc)
        return None

    def resolve_scope(self, parts: list[str], sc: Scope) -> Optional[Scope]:
        base = sc.module_scope()
        cur: Optional[Scope] = None
        if parts[0] in base.children:
            cur = base.children[parts[0]]
        elif self.root is not None and parts[0] == self.root.name:
            cur = self.root
        else:
            up = base.parent
            while up is not None and cur is None:
                if parts[0] in up.children:
                    cur = up.children[parts[0]]
                up = up.parent
        if cur is None:
            return None
        for p in parts[1:]:
            if p not in cur.children:
                return None
            cur = cur.children[p]
        return cur

    def resolve_hier(self, parts: list[str], sc: Scope):
        target = self.resolve_scope(parts[:-1], sc)
        if target is None:
            return None
        return target.lookup(parts[-1])

    def _undeclared(self, e: A.Expr) -> None:
        name = e.name if isinstance(e, (A.Ident, A.HierIdent)) else "?"
        self.error(e.line, f"'{name}' is not declared")

    # ---------------------------------------------------------------- widths
    def info(self, e: A.Expr, sc: Scope) -> tuple[int, bool]:
        if isinstance(e, A.Number):
            return number_vec(e).width, e.signed or e.width is None
        if isinstance(e, (A.Ident, A.HierIdent)):
            obj = self.resolve(e, sc)
            if isinstance(obj, Signal):
                return obj.width, obj.signed
            if isinstance(obj, Param):
                return obj.value.width, obj.signed
            return 1, False
        if isinstance(e, A.StringLit):
            return max(8 * len(e.value.encode("latin-1", "replace")), 8), False
        if isinstance(e, A.RealNumber):
            return 64, True
        if isinstance(e, A.Index):
            base = self.resolve(e.base, sc) if isinstance(e.base, (A.Ident, A.HierIdent)) else None
            if isinstance(base, Signal) and base.words is not None:
                return base.width, base.signed
            return 1, False
        if isinstance(e, A.Slice):
            try:
                return abs(self.const_int(e.msb, sc, quiet=True) - self.const_int(e.lsb, sc, quiet=True)) + 1, False
            except ElabError:
                return 1, False
        if isinstance(e, A.IndexedSlice):
            try:
                return max(self.const_int(e.width, sc, quiet=True), 1), False
            except ElabError:
                return 1, False
        if isinstance(e, A.Concat):
            return sum(self.info(p, sc)[0] for p in e.parts), False
        if isinstance(e, A.Repeat):
            try:
                n = self.const_int(e.count, sc, quiet=True)
            except ElabError:
                n = 1
            return max(n, 0) * sum(self.info(p, sc)[0] for p in e.parts), False
        if isinstance(e, A.Unary):
            if e.op in ("!",) or e.op in _REDUCE_OPS:
                return 1, False
            return self.info(e.operand, sc)
        if isinstance(e, A.Binary):
            lw, ls = self.info(e.left, sc)
            rw, rs = self.info(e.right, sc)
            if e.op in _COMPARE_OPS or e.op in _LOGIC_OPS:
                return 1, False
            if e.op in _SHIFT_OPS:
                return lw, ls
            return max(lw, rw), ls and rs
        if isinstance(e, A.Ternary):
            tw, ts = self.info(e.then, sc)
            ow, os_ = self.info(e.other, sc)
            return max(tw, ow), ts and os_
        if isinstance(e, A.Call):
            return self._call_info(e, sc)
        return 1, False

    def _call_info(self, e: A.Call, sc: Scope) -> tuple[int, bool]:
        n = e.name
        if n in ("$signed", "$unsigned"):
            w = self.info(e.args[0], sc)[0] if e.args else 1
            return w, n == "$signed"
        if n in ("$time", "$stime", "$realtime"):
            return 64 if n != "$stime" else 32, False
        if n in ("$random", "$urandom", "$clog2", "$bits", "$urandom_range"):
            return 32, n == "$random"
        if n.startswith("$"):
            return 32, False
        fdecl = sc.module_scope().functions.get(n)
        if fdecl is None:
            return 1, False
        if fdecl.range is None:
            return 1, fdecl.signed
        msb, lsb = self._range(fdecl.range, sc.module_scope())
        return abs(msb - lsb) + 1, fdecl.signed

    # ---------------------------------------------------------- const values
    def const(self, e: A.Expr, sc: Scope) -> Vec:
        w, s = self.info(e, sc)
        fn = self.expr(e, sc, w, s, const=True)
        return fn()

    def const_int(self, e: A.Expr, sc: Scope, quiet: bool = False) -> int:
        n_diags = len(self.diags)
        try:
            w, s = self.info(e, sc)
            v = self.expr(e, sc, w, s, const=True)()
        finally:
            if quiet:
                del self.diags[n_diags:]
        if v.unk:
            if quiet:
                raise ElabError("not constant")
            self.error(e.line, "expression must be a known constant")
            return 0
        out = v.to_signed() if s else v.val
        assert out is not None
        return out

    # ------------------------------------------------------------ expressions
    def value(self, e: A.Expr, sc: Scope) -> ExprFn:
        w, s = self.info(e, sc)
        return self.expr(e, sc, w, s)

    def expr(self, e: A.Expr, sc: Scope, w: int, signed: bool, const: bool = False) -> ExprFn:
        """Compile ``e`` to produce a ``w``-bit value; ``signed`` is the
        signedness of the enclosing context-determined expression."""
        fn = self._expr(e, sc, w, signed, const)
        return fn

    def _x(self, w: int) -> ExprFn:
        v = Vec.x(w)
        return lambda: v

    def _expr(self, e, sc, w, signed, const) -> ExprFn:
        kernel = self.kernel
        if isinstance(e, A.Number):
            v = number_vec(e).resize(w, signed and (e.signed or e.width is None))
            return lambda: v
        if isinstance(e, A.StringLit):
            raw = e.value.encode("latin-1", "replace")
            v = Vec(max(8 * len(raw), 8), int.from_bytes(raw, "big") if raw else 0).resize(w)
            return lambda: v
        if isinstance(e, A.RealNumber):
            v = Vec.from_int(int(round(e.value)), w)
            return lambda: v
        if isinstance(e, (A.Ident, A.HierIdent)):
            obj = self.resolve(e, sc)
            if isinstance(obj, Param):
                v = obj.value.resize(w, signed and obj.signed)
                return lambda: v
            if obj is None:
                self._undeclared(e)
                return self._x(w)
            if const:
                self.error(e.line, f"'{obj.name}' is not a constant")
                return self._x(w)
            sig: Signal = obj
            if sig.words is not None:
                self.error(e.line, f"array '{sig.name}' used without an index")
                return self._x(w)
            ext = signed and sig.signed
            if sig.width == w:
                return lambda: sig.value
            return lambda: sig.value.resize(w, ext)
        if isinstance(e, A.Index):
            return self._index(e, sc, w, const)
        if isinstance(e, (A.Slice, A.IndexedSlice)):
            return self._slice(e, sc, w, const)
        if isinstance(e, A.Concat):
            parts = [self.value(p, sc) if not const else self.expr(p, sc, *self.info(p, sc), const=True)
                     for p in e.parts]
            return lambda: V.concat([p() for p in parts]).resize(w)
        if isinstance(e, A.Repeat):
            n = self.const_int(e.count, sc)
            parts = [self.expr(p, sc, *self.info(p, sc), const=const) for p in e.parts]
            return lambda: V.concat([p() for p in parts] * max(n, 0)).resize(w) if n > 0 else Vec(w, 0)
        if isinstance(e, A.Unary):
            return self._unary(e, sc, w, signed, const)
        if isinstance(e, A.Binary):
            return self._binary(e, sc, w, signed, const)
        if isinstance(e, A.Ternary):
            cond = self.value(e.cond, sc) if not const else self.expr(e.cond, sc, *self.info(e.cond, sc), const=True)
            then = self.expr(e.then, sc, w, signed, const)
            other = self.expr(e.other, sc, w, signed, const)

            def tern():
                t = cond().truth()
                if t is None:
                    return V.merge(then(), other())
                return then() if t else other()
            return tern
        if isinstance(e, A.Call):
            return self._call(e, sc, w, signed, const)
        self.error(getattr(e, "line", 0), f"unsupported expression {type(e).__name__}")
        return self._x(w)

    def _select_base(self, base: A.Expr, sc: Scope, const: bool):
        """Returns (signal_or_None, word_index_fn_or_None, value_fn, msb, lsb)."""
        if isinstance(base, (A.Ident, A.HierIdent)):
            obj = self.resolve(base, sc)
            if isinstance(obj, Param):
                v = obj.value
                return None, None, (lambda: v), v.width - 1, 0
            if obj is None:
                self._undeclared(base)
                return None, None, self._x(1), 0, 0
            if const:
                self.error(base.line, f"'{obj.name}' is not a constant")
            if obj.words is not None:
                self.error(base.line, f"array '{obj.name}' needs a word index")
                return None, None, self._x(obj.width), obj.width - 1, 0
            return obj, None, (lambda: obj.value), obj.msb, obj.lsb
        if isinstance(base, A.Index) and isinstance(base.base, (A.Ident, A.HierIdent)):
            obj = self.resolve(base.base, sc)
            if isinstance(obj, Signal) and obj.words is not None:
                idx = self.value(base.index, sc)

                def word():
                    i = idx()
                    return obj.word(i.to_int())
                return obj, idx, word, obj.msb, obj.lsb
        fn = self.value(base, sc)
        w = self.info(base, sc)[0]
        return None, None, fn, w - 1, 0

    @staticmethod
    def _offset(msb: int, lsb: int, i: int) -> int:
        return i - lsb if msb >= lsb else lsb - i

    def _index(self, e: A.Index, sc: Scope, w: int, const: bool) -> ExprFn:
        if isinstance(e.base, (A.Ident, A.HierIdent)):
            obj = self.resolve(e.base, sc)
            if isinstance(obj, Signal) and obj.words is not None:
                if const:
                    self.error(e.line, f"'{obj.name}' is not a constant")
                idx = self.value(e.index, sc)
                ext = obj.signed
                return lambda: obj.word(idx().to_int()).resize(w, ext)
        _, _, base_fn, msb, lsb = self._select_base(e.base, sc, const)
        idx = self.expr(e.index, sc, *self.info(e.index, sc), const=const)
        off = self._offset

        def index():
            i = idx().to_int()
            if i is None:
                return Vec.x(w)
            return base_fn().slice(off(msb, lsb, i), 1).resize(w)
        return index

    def _slice(self, e, sc: Scope, w: int, const: bool) -> ExprFn:
        _, _, base_fn, msb, lsb = self._select_base(e.base, sc, const)
        off = self._offset
        if isinstance(e, A.Slice):
            a = self.const_int(e.msb, sc)
            b = self.const_int(e.lsb, sc)
            lo = min(off(msb, lsb, a), off(msb, lsb, b))
            width = abs(a - b) + 1
            return lambda: base_fn().slice(lo, width).resize(w)
        width = max(self.const_int(e.width, sc), 1)
        start = self.expr(e.start, sc, *self.info(e.start, sc), const=const)
        asc = e.ascending

        def islice():
            s = start().to_int()
            if s is None:
                return Vec.x(w)
            other = s + width - 1 if asc else s - width + 1
            lo = min(off(msb, lsb, s), off(msb, lsb, other))
            return base_fn().slice(lo, width).resize(w)
        return islice

    def _unary(self, e: A.Unary, sc, w, signed, const) -> ExprFn:
        op = e.op
        if op == "!":
            a = self.expr(e.operand, sc, *self.info(e.operand, sc), const=const)
            return lambda: V.op_logic_not(a()).resize(w)
        if op in _REDUCE_OPS:
            a = self.expr(e.operand, sc, *self.info(e.operand, sc), const=const)
            return lambda: V.reduce(op, a()).resize(w)
        a = self.expr(e.operand, sc, w, signed, const)
        if op == "~":
            return lambda: V.op_not(a())
        if op == "-":
            return lambda: V.op_neg(a())
        return a

    def _binary(self, e: A.Binary, sc, w, signed, const) -> ExprFn:
        op = e.op
        if op in _COMPARE_OPS:
            lw, ls = self.info(e.left, sc)
            rw, rs = self.info(e.right, sc)
            cw, cs = max(lw, rw), ls and rs
            a = self.expr(e.left, sc, cw, cs, const)
            b = self.expr(e.right, sc, cw, cs, const)
            if op == "==":
                f = V.op_eq
            elif op == "!=":
                f = V.op_ne
            elif op == "===":
                f = V.op_case_eq
            elif op == "!==":
                return lambda: Vec(1, V.op_case_eq(a(), b()).val ^ 1).resize(w)
            else:
                return lambda: V.op_compare(a(), b(), op, cs).resize(w)
            return lambda: f(a(), b()).resize(w)
        if op in _LOGIC_OPS:
            a = self.expr(e.left, sc, *self.info(e.left, sc), const=const)
            b = self.expr(e.right, sc, *self.info(e.right, sc), const=const)
            f = V.op_logic_and if op == "&&" else V.op_logic_or
            return lambda: f(a(), b()).resize(w)
        if op in _SHIFT_OPS:
            a = self.expr(e.left, sc, w, signed, const)
            b = self.expr(e.right, sc, *self.info(e.right, sc), const=const)
            if op == "**":
                return lambda: V.op_pow(a(), b())
            if op in ("<<", "<<<"):
                return lambda: V.op_shl(a(), b())
            arith = op == ">>>" and signed
            return lambda: V.op_shr(a(), b(), arith)
        a = self.expr(e.left, sc, w, signed, const)
        b = self.expr(e.right, sc, w, signed, const)
        table = {"+": V.op_add, "-": V.op_sub, "*": V.op_mul, "&": V.op_and, "|": V.op_or,
                 "^": V.op_xor, "~^": V.op_xnor, "^~": V.op_xnor}
        if op in table:
            f = table[op]
            return lambda: f(a(), b())
        if op == "/":
            return lambda: V.op_div(a(), b(), signed)
        if op == "%":
            return lambda: V.op_mod(a(), b(), signed)
        self.error(e.line, f"unsupported operator '{op}'")
        return self._x(w)

    def _random(self) -> int:
        # xorshift32, deterministic per run
        x = self._rand_state
        x ^= (x << 13) & 0xFFFFFFFF
        x ^= x >> 17
        x ^= (x << 5) & 0xFFFFFFFF
        self._rand_state = x
        return x

    def _call(self, e: A.Call, sc: Scope, w: int, signed: bool, const: bool) -> ExprFn:
        n = e.name
        kernel = self.kernel
        if n in ("$signed", "$unsigned"):
            if len(e.args) != 1:
                self.error(e.line, f"{n} takes one argument")
                return self._x(w)
            iw = self.info(e.args[0], sc)[0]
            inner = self.expr(e.args[0], sc, iw, n == "$signed", const)
            ext = signed and n == "$signed"
            return lambda: inner().resize(w, ext)
        if n in ("$time", "$stime", "$realtime"):
            return lambda: Vec.from_int(kernel.time, w)
        if n in ("$random", "$urandom"):
            return lambda: Vec.from_int(self._random(), 32).resize(w, n == "$random" and signed)
        if n == "$urandom_range":
            hi = self.value(e.args[0], sc) if e.args else self._x(32)
            lo = self.value(e.args[1], sc) if len(e.args) > 1 else (lambda: Vec(32, 0))

            def urange():
                a, b = hi().to_int() or 0, lo().to_int() or 0
                a, b = max(a, b), min(a, b)
                return Vec.from_int(b + self._random() % (a - b + 1), w)
            return urange
        if n == "$clog2":
            if not e.args:
                self.error(e.line, "$clog2 takes one argument")
                return self._x(w)
            a = self.expr(e.args[0], sc, *self.info(e.args[0], sc), const=const)

            def clog2():
                v = a().to_int()
                if v is None:
                    return Vec.x(w)
                return Vec.from_int(max(v - 1, 0).bit_length(), w)
            return clog2
        if n == "$bits":
            v = Vec.from_int(self.info(e.args[0], sc)[0] if e.args else 0, w)
            return lambda: v
        if n.startswith("$"):
            self.error(e.line, f"unsupported system function '{n}'")
            return self._x(w)
        if const:
            self.error(e.line, f"function call '{n}' in constant expression is not supported")
            return self._x(w)
        return self._user_call(e, sc, w, signed)

    def _user_call(self, e: A.Call, sc: Scope, w: int, signed: bool) -> ExprFn:
        msc = sc.module_scope()
        fdecl = msc.functions.get(e.name)
        if fdecl is None:
            self.error(e.line, f"function '{e.name}' is not declared")
            return self._x(w)
        compiled = self._compile_function(fdecl, msc)
        if compiled is None:
            return self._x(w)
        fsc, body, inputs, ret = compiled
        if len(e.args) != len(inputs):
            self.error(e.line, f"function '{e.name}' expects {len(inputs)} arguments, got {len(e.args)}")
            return self._x(w)
        args = []
        for arg, sig in zip(e.args, inputs):
            aw, asg = self.info(arg, sc)
            cw = max(aw, sig.width)
            args.append((self.expr(arg, sc, cw, asg), sig))
        ext = signed and ret.signed

        def call():
            vals = [(fn().resize(sig.width), sig) for fn, sig in args]
            for v, sig in vals:
                sig.value = v
            ret.value = Vec.x(ret.width)
            body()
            return ret.value.resize(w, ext)
        return call

    def _local_scope(self, name: str, msc: Scope, inputs: list[A.PortDecl],
                     decls: list[A.NetDecl]) -> tuple[Scope, list[Signal]]:
        fsc = Scope(name, msc.path + (name,), msc.module, msc, local=True)
        ports = []
        for pd in inputs:
            msb, lsb = self._range(pd.range, msc)
            for d in pd.names:
                sig = Signal(d.name, fsc.path, abs(msb - lsb) + 1, msb, lsb, pd.signed, False,
                             "reg", None, self.cur_file, pd.span.start)
                fsc.signals[d.name] = sig
                ports.append((pd.direction, sig))
        for nd in decls:
            if nd.kind in ("integer", "genvar"):
                msb, lsb, sg = 31, 0, True
            else:
                (msb, lsb), sg = self._range(nd.range, msc), nd.signed
            for d in nd.names:
                array = self._range(d.array, msc) if d.array is not None else None
                fsc.signals[d.name] = Signal(d.name, fsc.path, abs(msb - lsb) + 1, msb, lsb, sg,
                                             False, "reg", array, self.cur_file, nd.span.start)
        return fsc, ports

    def _compile_function(self, fdecl: A.FunctionDecl, msc: Scope):
        key = ("fn", id(fdecl), id(msc))
        if key in self._compiled_fns:
            return self._compiled_fns[key]
        self._compiled_fns[key] = None  # recursion guard
        saved = self.cur_file
        self.cur_file = fdecl.span.file
        fsc, ports = self._local_scope(fdecl.name, msc, fdecl.inputs, fdecl.decls)
        if fdecl.range is not None:
            msb, lsb = self._range(fdecl.range, msc)
        else:
            msb = lsb = 0
        ret = Signal(fdecl.name, fsc.path, abs(msb - lsb) + 1, msb, lsb, fdecl.signed, False, "reg",
                     None, self.cur_file, fdecl.span.start)
        fsc.signals[fdecl.name] = ret
        body, timed = self.stmt(fdecl.body, fsc)
        if timed:
            self.error(fdecl.span.start, f"function '{fdecl.name}' contains timing controls")
            self.cur_file = saved
            return None
        inputs = [s for d, s in ports if d == "input"]
        result = (fsc, body, inputs, ret)
        self._compiled_fns[key] = result
        self.cur_file = saved
        return result

    def _compile_task(self, tdecl: A.TaskDecl, msc: Scope):
        key = ("task", id(tdecl), id(msc))
        if key in self._compiled_fns:
            return self._compiled_fns[key]
        self._compiled_fns[key] = None
        saved = self.cur_file
        self.cur_file = tdecl.span.file
        fsc, ports = self._local_scope(tdecl.name, msc, tdecl.inputs, tdecl.decls)
        body, timed = self.stmt(tdecl.body, fsc)
        result = (fsc, body, timed, ports)
        self._compiled_fns[key] = result
        self.cur_file = saved
        return result

    # ------------------------------------------------------------ dependencies
    def deps(self, e: Optional[A.Expr], sc: Scope) -> set[Signal]:
        out: set[Signal] = set()
        for sub in A.walk_expr(e):
            if isinstance(sub, (A.Ident, A.HierIdent)):
                obj = self.resolve(sub, sc)
                # function and task locals never trigger anything
                if isinstance(obj, Signal) and not (sc.local and sc.signals.get(obj.name) is obj):
                    out.add(obj)
        return out

    def stmt_reads(self, stmt: Optional[A.Stmt], sc: Scope) -> set[Signal]:
        out: set[Signal] = set()
        for s in A.walk_statements(stmt):
            exprs: list = []
            if isinstance(s, A.Assign):
                exprs.append(s.rhs)
                exprs.extend(self._lvalue_index_exprs(s.lhs))
            elif isinstance(s, (A.If, A.WaitStmt, A.While)):
                exprs.append(s.cond)
            elif isinstance(s, A.Case):
                exprs.append(s.expr)
                for it in s.items:
                    exprs.extend(it.exprs or [])
            elif isinstance(s, A.For):
                exprs.extend([s.init.rhs, s.cond, s.step.rhs])
            elif isinstance(s, A.RepeatStmt):
                exprs.append(s.count)
            elif isinstance(s, (A.SysTask, A.TaskCall)):
                exprs.extend(s.args)
            for x in exprs:
                out |= self.deps(x, sc)
        loop_vars = set()
        for s in A.walk_statements(stmt):
            if isinstance(s, A.For) and isinstance(s.init.lhs, A.Ident):
                v = sc.lookup(s.init.lhs.name)
                if isinstance(v, Signal):
                    loop_vars.add(v)
        return out - loop_vars

    def _lvalue_index_exprs(self, e: A.Expr) -> list[A.Expr]:
        if isinstance(e, A.Index):
            return [e.index] + self._lvalue_index_exprs(e.base)
        if isinstance(e, A.Slice):
            return self._lvalue_index_exprs(e.base)
        if isinstance(e, A.IndexedSlice):
            return [e.start] + self._lvalue_index_exprs(e.base)
        if isinstance(e, A.Concat):
            return [x for p in e.parts for x in self._lvalue_index_exprs(p)]
        return []

    # --------------------------------------------------------------- lvalues
    def lvalue(self, e: A.Expr, sc: Scope, implicit: bool = False):
        """Compile an assignment target.

        Returns ``(targets_fn, width, signals)``; ``targets_fn()`` yields
        ``(signal, word_index, lo, width)`` tuples MSB-first, where ``lo`` is
        None when a dynamic index is unknown.
        """
        if isinstance(e, A.Concat):
            parts = [self.lvalue(p, sc, implicit) for p in e.parts]
            width = sum(p[1] for p in parts)
            sigs = [s for p in parts for s in p[2]]

            def cat():
                out = []
                for fn, _, _ in parts:
                    out.extend(fn())
                return out
            return cat, width, sigs
        if isinstance(e, (A.Ident, A.HierIdent)):
            obj = self.resolve(e, sc)
            if obj is None and implicit and isinstance(e, A.Ident):
                msc = sc.module_scope()
                obj = Signal(e.name, msc.path, 1, 0, 0, False, True, "wire", None, self.cur_file, e.line)
                msc.signals[e.name] = obj
                self.warn(e.line, f"implicit declaration of net '{e.name}'")
            if obj is None:
                self._undeclared(e)
                return (lambda: []), 1, []
            if isinstance(obj, Param):
                self.error(e.line, f"cannot assign to parameter '{e.name}'")
                return (lambda: []), obj.value.width, []
            if obj.words is not None:
                self.error(e.line, f"cannot assign to whole array '{obj.name}'")
                return (lambda: []), obj.width, []
            t = [(obj, None, 0, obj.width)]
            return (lambda: t), obj.width, [obj]
        if isinstance(e, A.Index):
            if isinstance(e.base, (A.Ident, A.HierIdent)):
                obj = self.resolve(e.base, sc)
                if isinstance(obj, Signal) and obj.words is not None:
                    idx = self.value(e.index, sc)
                    return (lambda: [(obj, idx().to_int(), 0, obj.width)]), obj.width, [obj]
            sig, word_fn, msb, lsb = self._lv_base(e.base, sc)
            if sig is None:
                return (lambda: []), 1, []
            idx = self.value(e.index, sc)
            off = self._offset

            def bit():
                i = idx().to_int()
                word = word_fn().to_int() if word_fn else None
                return [(sig, word, None if i is None else off(msb, lsb, i), 1)]
            return bit, 1, [sig]
        if isinstance(e, A.Slice):
            sig, word_fn, msb, lsb = self._lv_base(e.base, sc)
            a = self.const_int(e.msb, sc)
            b = self.const_int(e.lsb, sc)
            width = abs(a - b) + 1
            if sig is None:
                return (lambda: []), width, []
            lo = min(self._offset(msb, lsb, a), self._offset(msb, lsb, b))
            if word_fn is None:
                t = [(sig, None, lo, width)]
                return (lambda: t), width, [sig]
            return (lambda: [(sig, word_fn().to_int(), lo, width)]), width, [sig]
        if isinstance(e, A.IndexedSlice):
            sig, word_fn, msb, lsb = self._lv_base(e.base, sc)
            width = max(self.const_int(e.width, sc), 1)
            if sig is None:
                return (lambda: []), width, []
            start = self.value(e.start, sc)
            off = self._offset
            asc = e.ascending

            def islice():
                s = start().to_int()
                word = word_fn().to_int() if word_fn else None
                if s is None:
                    return [(sig, word, None, width)]
                other = s + width - 1 if asc else s - width + 1
                return [(sig, word, min(off(msb, lsb, s), off(msb, lsb, other)), width)]
            return islice, width, [sig]
        self.error(getattr(e, "line", 0), "invalid assignment target")
        return (lambda: []), 1, []

    def _lv_base(self, base: A.Expr, sc: Scope):
        if isinstance(base, (A.Ident, A.HierIdent)):
            obj = self.resolve(base, sc)
            if isinstance(obj, Signal) and obj.words is None:
                return obj, None, obj.msb, obj.lsb
            if obj is None:
                self._undeclared(base)
            else:
                self.error(base.line, "invalid assignment target")
            return None, None, 0, 0
        if isinstance(base, A.Index) and isinstance(base.base, (A.Ident, A.HierIdent)):
            obj = self.resolve(base.base, sc)
            if isinstance(obj, Signal) and obj.words is not None:
                return obj, self.value(base.index, sc), obj.msb, obj.lsb
        self.error(getattr(base, "line", 0), "invalid assignment target")
        return None, None, 0, 0

    def write(self, targets, value: Vec) -> None:
        kernel = self.kernel
        pos = value.width
        for sig, word, lo, width in targets:
            pos -= width
            if lo is None:
                continue
            part = value.slice(pos, width)
            if sig.words is not None:
                if word is None:
                    continue
                kernel.set_word(sig, word, sig.word(word).replace(lo, part))
            elif lo == 0 and width == sig.width:
                kernel.set_value(sig, part)
            else:
                kernel.set_value(sig, sig.value.replace(lo, part))

    # -------------------------------------------------------- continuous assign
    def cont_assign(self, lhs: A.Expr, lsc: Scope, rhs: A.Expr, rsc: Scope, line: int,
                    implicit: bool = False) -> None:
        targets_fn, lw, sigs = self.lvalue(lhs, lsc, implicit)
        for s in sigs:
            if not s.is_net:
                self.error(line, f"continuous assignment to reg '{s.name}'")
                return
        rw, rs = self.info(rhs, rsc)
        if rw > lw and isinstance(rhs, (A.Ident, A.HierIdent, A.Slice, A.Index, A.Concat)):
            self.warn(line, f"width mismatch: {rw}-bit value assigned to {lw}-bit target (truncated)")
        rfn = self.expr(rhs, rsc, max(lw, rw), rs)
        drivers: dict[Signal, Driver] = {}
        for s in sigs:
            if s not in drivers:
                d = Driver(s.width)
                drivers[s] = d
                s.drivers.append(d)
        kernel = self.kernel

        def update():
            v = rfn().resize(lw)
            acc: dict[Signal, list] = {s: [Vec.zz(s.width), 0] for s in drivers}
            pos = lw
            for sig, _, lo, width in targets_fn():
                pos -= width
                if lo is None:
                    continue
                ent = acc[sig]
                ent[0] = ent[0].replace(lo, v.slice(pos, width))
                m = ((1 << width) - 1) << lo if lo >= 0 else ((1 << width) - 1) >> -lo
                ent[1] |= m & ((1 << sig.width) - 1)
            for sig, (val, mask) in acc.items():
                kernel.drive(sig, drivers[sig], val, mask)
        lst = Listener(update)
        deps = self.deps(rhs, rsc) | {d for x in self._lvalue_index_exprs(lhs) for d in self.deps(x, lsc)}
        for d in deps:
            d.listeners.append(lst)
        self.continuous.append(lst)

    # ------------------------------------------------------------ statements
    def stmt(self, s: Optional[A.Stmt], sc: Scope):
        if s is None or isinstance(s, A.NullStmt):
            return (lambda: None), False
        method = getattr(self, "_s_" + type(s).__name__, None)
        if method is None:
            self.error(s.span.start, f"unsupported statement {type(s).__name__}")
            return (lambda: None), False
        saved = self.cur_file
        self.cur_file = s.span.file or saved
        try:
            return method(s, sc)
        finally:
            self.cur_file = saved

    def _s_Block(self, s: A.Block, sc: Scope):
        parts = [self.stmt(c, sc) for c in s.stmts]
        name = s.name
        if not any(t for _, t in parts):
            fns = [f for f, _ in parts]

            def block():
                try:
                    for f in fns:
                        f()
                except DisableBlock as d:
                    if d.name != name:
                        raise
            return block, False

        def tblock():
            try:
                for f, t in parts:
                    if t:
                        yield from f()
                    else:
                        f()
            except DisableBlock as d:
                if d.name != name:
                    raise
        return tblock, True

    def _assign_parts(self, s: A.Assign, sc: Scope):
        targets_fn, lw, sigs = self.lvalue(s.lhs, sc)
        for sig in sigs:
            if sig.is_net:
                self.error(s.span.start, f"procedural assignment to net '{sig.name}'")
        rw, rs = self.info(s.rhs, sc)
        if rw > lw and isinstance(s.rhs, (A.Ident, A.HierIdent, A.Slice, A.Index, A.Concat)):
            self.warn(s.span.start, f"width mismatch: {rw}-bit value assigned to {lw}-bit target (truncated)")
        rfn = self.expr(s.rhs, sc, max(lw, rw), rs)
        return targets_fn, lw, rfn

    def _s_Assign(self, s: A.Assign, sc: Scope):
        targets_fn, lw, rfn = self._assign_parts(s, sc)
        write = self.write
        kernel = self.kernel
        delay = self._delay_fn(s.delay, sc) if s.delay is not None else None
        if s.blocking:
            if delay is None:
                return (lambda: write(targets_fn(), rfn().resize(lw))), False

            def delayed():
                v = rfn().resize(lw)
                yield ("delay", delay())
                write(targets_fn(), v)
            return delayed, True

        def nba():
            v = rfn().resize(lw)
            t = targets_fn()
            kernel.schedule_nba(delay() if delay else 0, lambda: write(t, v))
        return nba, False

    def _delay_fn(self, e: A.Expr, sc: Scope):
        if isinstance(e, A.RealNumber):
            n = int(round(e.value))
            return lambda: n
        fn = self.value(e, sc)

        def amount():
            v = fn().to_int()
            return 0 if v is None else v
        return amount

    def _s_If(self, s: A.If, sc: Scope):
        cond = self.value(s.cond, sc)
        then, tt = self.stmt(s.then, sc)
        other, ot = self.stmt(s.other, sc)
        if not (tt or ot):
            def if_():
                if cond().truth():
                    then()
                else:
                    other()
            return if_, False

        def tif():
            branch, timed = (then, tt) if cond().truth() else (other, ot)
            if timed:
                yield from branch()
            else:
                branch()
        return tif, True

    def _s_Case(self, s: A.Case, sc: Scope):
        width = self.info(s.expr, sc)[0]
        signed = self.info(s.expr, sc)[1]
        for it in s.items:
            for x in it.exprs or []:
                w, sg = self.info(x, sc)
                width = max(width, w)
                signed = signed and sg
        sel = self.expr(s.expr, sc, width, signed)
        items = []
        default = None
        for it in s.items:
            body = self.stmt(it.body, sc)
            if it.exprs is None:
                default = body
            else:
                items.append(([self.expr(x, sc, width, signed) for x in it.exprs], body))
        kind = s.kind
        timed = any(b[1] for _, b in items) or (default is not None and default[1])

        def choose():
            v = sel()
            for exprs, body in items:
                for x in exprs:
                    if V.case_match(kind, v, x()):
                        return body
            return default
        if not timed:
            def case():
                body = choose()
                if body is not None:
                    body[0]()
            return case, False

        def tcase():
            body = choose()
            if body is None:
                return
            if body[1]:
                yield from body[0]()
            else:
                body[0]()
        return tcase, True

    def _s_DelayStmt(self, s: A.DelayStmt, sc: Scope):
        amount = self._delay_fn(s.amount, sc)
        body, timed = self.stmt(s.body, sc)

        def delay():
            yield ("delay", amount())
            if timed:
                yield from body()
            else:
                body()
        return delay, True

    def _event_items(self, events: Optional[list[A.Event]], body: Optional[A.Stmt], sc: Scope):
        if events is None:
            sigs = sorted(self.stmt_reads(body, sc), key=lambda x: x.full_name)
            return [((lambda s=s: s.value), (s,), None) for s in sigs]
        items = []
        for ev in events:
            obj = self.resolve(ev.expr, sc)
            if isinstance(obj, Signal):
                items.append(((lambda s=obj: s.value), (obj,), ev.edge))
            else:
                fn = self.value(ev.expr, sc)
                deps = tuple(self.deps(ev.expr, sc))
                items.append((fn, deps, ev.edge))
        return items

    def _s_EventStmt(self, s: A.EventStmt, sc: Scope):
        items = self._event_items(s.events, s.body, sc)
        body, timed = self.stmt(s.body, sc)
        cmd = ("event", items)

        def event():
            yield cmd
            if timed:
                yield from body()
            else:
                body()
        return event, True

    def _s_WaitStmt(self, s: A.WaitStmt, sc: Scope):
        cond = self.value(s.cond, sc)
        deps = tuple(self.deps(s.cond, sc))
        body, timed = self.stmt(s.body, sc)
        cmd = ("event", [(lambda d=d: d.value, (d,), None) for d in deps])

        def wait():
            while not cond().truth():
                if not deps:
                    # never satisfiable: block forever
                    yield ("event", [])
                    return
                yield cmd
            if timed:
                yield from body()
            else:
                body()
        return wait, True

    def _s_For(self, s: A.For, sc: Scope):
        init, _ = self.stmt(s.init, sc)
        step, _ = self.stmt(s.step, sc)
        cond = self.value(s.cond, sc)
        body, timed = self.stmt(s.body, sc)
        if not timed:
            def for_():
                init()
                while cond().truth():
                    body()
                    step()
            return for_, False

        def tfor():
            init()
            while cond().truth():
                yield from body()
                step()
        return tfor, True

    def _s_While(self, s: A.While, sc: Scope):
        cond = self.value(s.cond, sc)
        body, timed = self.stmt(s.body, sc)
        if not timed:
            def while_():
                while cond().truth():
                    body()
            return while_, False

        def twhile():
            while cond().truth():
                yield from body()
        return twhile, True

    def _s_RepeatStmt(self, s: A.RepeatStmt, sc: Scope):
        count = self.value(s.count, sc)
        body, timed = self.stmt(s.body, sc)
        if not timed:
            def repeat():
                n = count().to_int() or 0
                for _ in range(n):
                    body()
            return repeat, False

        def trepeat():
            n = count().to_int() or 0
            for _ in range(n):
                yield from body()
        return trepeat, True

    def _s_Forever(self, s: A.Forever, sc: Scope):
        body, timed = self.stmt(s.body, sc)
        if not timed:
            self.error(s.span.start, "forever loop has no timing control")
            return (lambda: None), False

        def forever():
            while True:
                yield from body()
        return forever, True

    def _s_Disable(self, s: A.Disable, sc: Scope):
        name = s.target

        def disable():
            raise DisableBlock(name)
        return disable, False

    def _s_TaskCall(self, s: A.TaskCall, sc: Scope):
        msc = sc.module_scope()
        tdecl = msc.tasks.get(s.name)
        if tdecl is None:
            self.error(s.span.start, f"task '{s.name}' is not declared")
            return (lambda: None), False
        compiled = self._compile_task(tdecl, msc)
        if compiled is None:
            self.error(s.span.start, f"recursive task '{s.name}' is not supported")
            return (lambda: None), False
        _, body, timed, ports = compiled
        if len(s.args) != len(ports):
            self.error(s.span.start, f"task '{s.name}' expects {len(ports)} arguments, got {len(s.args)}")
            return (lambda: None), False
        ins = []
        outs = []
        for arg, (direction, sig) in zip(s.args, ports):
            if direction in ("input", "inout"):
                aw, asg = self.info(arg, sc)
                ins.append((self.expr(arg, sc, max(aw, sig.width), asg), sig))
            if direction in ("output", "inout"):
                tfn, lw, _ = self.lvalue(arg, sc)
                outs.append((tfn, lw, sig))
        write = self.write

        def enter():
            for fn, sig in ins:
                sig.value = fn().resize(sig.width)

        def leave():
            for tfn, lw, sig in outs:
                write(tfn(), sig.value.resize(lw, sig.signed))
        if not timed:
            def call():
                enter()
                body()
                leave()
            return call, False

        def tcall():
            enter()
            yield from body()
            leave()
        return tcall, True

    # ----------------------------------------------------------- system tasks
    def _display_args(self, args: list[A.Expr], sc: Scope):
        compiled = []
        for a in args:
            if isinstance(a, A.StringLit):
                compiled.append(("fmt", a.value))
            else:
                fn = self.value(a, sc)
                sg = self.info(a, sc)[1]
                compiled.append(("val", (lambda fn=fn, sg=sg: (fn(), sg))))
        scope_name = ".".join(sc.module_scope().path)
        kernel = self.kernel

        def render() -> str:
            out = []
            i = 0
            while i < len(compiled):
                kind, payload = compiled[i]
                i += 1
                if kind == "fmt":
                    n_specs = payload.replace("%%", "").count("%")
                    vals = []
                    while len(vals) < n_specs and i < len(compiled) and compiled[i][0] == "val":
                        vals.append(compiled[i][1])
                        i += 1
                    out.append(format_display(payload, vals, kernel.time, scope_name))
                else:
                    out.append(format_display("%d", [payload], kernel.time, scope_name))
            return "".join(out)
        return render

    def _s_SysTask(self, s: A.SysTask, sc: Scope):
        n = s.name
        kernel = self.kernel
        line = s.span.start
        if n in ("$display", "$displayb", "$displayh", "$strobe", "$write", "$error", "$warning",
                 "$info", "$fatal"):
            args = s.args
            if n == "$fatal" and args and not isinstance(args[0], A.StringLit):
                args = args[1:]
            render = self._display_args(args, sc)
            newline = "" if n == "$write" else "\n"
            prefix = {"$error": "ERROR: ", "$warning": "WARNING: ", "$fatal": "FATAL: "}.get(n, "")
            out = self.out

            def display():
                out.write(prefix + render() + newline)
                if n == "$fatal":
                    raise Finish()
            return display, False
        if n == "$monitor":
            render = self._display_args(s.args, sc)
            out = self.out

            def monitor():
                state = {"last": None}

                def check():
                    text = render()
                    if text != state["last"]:
                        state["last"] = text
                        out.write(text + "\n")
                self.monitors.append(check)
                check()
            return monitor, False
        if n in ("$finish", "$stop"):
            def finish():
                raise Finish()
            return finish, False
        if n == "$dumpfile":
            if s.args and isinstance(s.args[0], A.StringLit):
                self.dump_file = s.args[0].value
            return (lambda: None), False
        if n == "$dumpvars":
            levels = 0
            scopes: list[Scope] = []
            if s.args:
                levels = self.const_int(s.args[0], sc)
                for a in s.args[1:]:
                    parts = a.parts if isinstance(a, A.HierIdent) else [a.name] if isinstance(a, A.Ident) else None
                    target = self.resolve_scope(parts, sc) if parts else None
                    if target is None:
                        self.error(line, "$dumpvars argument is not a module instance")
                    else:
                        scopes.append(target)
            req = (levels, scopes)

            def dumpvars():
                self.dump_requests.append(req)
            return dumpvars, False
        if n in ("$readmemh", "$readmemb"):
            if len(s.args) < 2 or not isinstance(s.args[0], A.StringLit):
                self.error(line, f"{n} expects a file name and a memory")
                return (lambda: None), False
            mem = self.resolve(s.args[1], sc)
            if not isinstance(mem, Signal) or mem.words is None:
                self.error(line, f"{n} target must be a memory")
                return (lambda: None), False
            path = s.args[0].value
            radix = 16 if n == "$readmemh" else 2

            def readmem():
                try:
                    with open(path, encoding="utf-8") as fh:
                        text = fh.read()
                except OSError as exc:
                    self.out.write(f"WARNING: {n}: cannot open {path}: {exc}\n")
                    return
                addr = mem.arr_lo
                for line_text in text.splitlines():
                    line_text = line_text.split("//")[0]
                    for tok in line_text.split():
                        if tok.startswith("@"):
                            addr = int(tok[1:], 16)
                            continue
                        tok = tok.replace("_", "")
                        if radix == 16:
                            bits = "".join(c * 4 if c in "xXzZ" else format(int(c, 16), "04b") for c in tok)
                        else:
                            bits = tok
                        kernel.set_word(mem, addr, Vec.from_bin(bits).resize(mem.width))
                        addr += 1
            return readmem, False
        if n in ("$timeformat", "$fflush", "$dumpoff", "$dumpon", "$dumpall", "$dumpflush"):
            return (lambda: None), False
        self.warn(line, f"ignoring unsupported system task '{n}'")
        return (lambda: None), False


__all__ = ["Elaborator", "Diagnostic", "ElabError", "Scope", "number_vec", "format_display"]
