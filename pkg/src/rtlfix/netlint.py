"""Structural net checks over a per-bit driver map.

Every declared net or variable gets, for each bit, the list of driver sites
that assign it and the list of reader sites that observe it.  Each always
block, continuous assignment and instance output connection is one *driver
unit*; mutually exclusive branches inside one always block therefore count
once.  Initial blocks drive bits but never take part in conflicts.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional

from .verilog import ast as A
from .verilog.consteval import const_eval, module_params

MULTI_DRIVEN = "MultiDriven"
UNDRIVEN = "Undriven"
PARTIALLY_DRIVEN = "PartiallyDriven"
UNUSED = "Unused"
EXTERNAL = "External"
KINDS = (MULTI_DRIVEN, UNDRIVEN, PARTIALLY_DRIVEN, UNUSED, EXTERNAL)

SEVERITY = {MULTI_DRIVEN: "error", UNDRIVEN: "warning", PARTIALLY_DRIVEN: "warning",
            UNUSED: "warning", EXTERNAL: "warning"}


class UnresolvedInstance(Exception):
    def __init__(self, name: str, module: str):
        super().__init__(f"instance '{name}' of unknown module '{module}'")
        self.name = name
        self.module = module


@dataclass(frozen=True)
class Site:
    span: A.Span
    kind: str  # continuous | procedural | instance | initial | port | read
    unit: str  # driver unit identity; distinct units on one bit conflict


@dataclass
class NetInfo:
    module: str
    name: str
    msb: int
    lsb: int
    kind: str
    direction: Optional[str]
    span: A.Span
    drivers: list[list[Site]] = field(default_factory=list)
    readers: list[list[Site]] = field(default_factory=list)
    external: bool = False

    def __post_init__(self):
        if not self.drivers:
            self.drivers = [[] for _ in range(self.width)]
        if not self.readers:
            self.readers = [[] for _ in range(self.width)]

    @property
    def width(self) -> int:
        return abs(self.msb - self.lsb) + 1

    def index(self, offset: int) -> int:
        """Declared bit index for an LSB-relative offset."""
        return self.lsb + offset if self.msb >= self.lsb else self.lsb - offset

    def offset(self, index: int) -> Optional[int]:
        off = index - self.lsb if self.msb >= self.lsb else self.lsb - index
        return off if 0 <= off < self.width else None


@dataclass
class DriverMap:
    nets: dict[tuple[str, str], NetInfo] = field(default_factory=dict)
    unresolved: list[tuple[str, str, A.Span]] = field(default_factory=list)
    hierarchy: dict[str, list[str]] = field(default_factory=dict)

    def net(self, module: str, name: str) -> NetInfo:
        return self.nets[(module, name)]


@dataclass(frozen=True)
class LintDiagnostic:
    kind: str
    module: str
    net: str
    bits: tuple[int, ...]
    sites: tuple[A.Span, ...]
    message: str
    severity: str
    file: str
    line: int

    def render(self) -> str:
        return f"{self.file}:{self.line}: {self.severity.upper()} [{self.kind}] {self.message}"


def format_bits(bits: Iterable[int]) -> str:
    """``[7:4],[1]`` style listing of declared bit indices, high to low."""
    ordered = sorted(set(bits), reverse=True)
    runs: list[tuple[int, int]] = []
    for b in ordered:
        if runs and runs[-1][1] - 1 == b:
            runs[-1] = (runs[-1][0], b)
        else:
            runs.append((b, b))
    return ",".join(f"[{hi}]" if hi == lo else f"[{hi}:{lo}]" for hi, lo in runs)


# --------------------------------------------------------------------------
# driver map construction
# --------------------------------------------------------------------------
class _ModuleWalker:
    def __init__(self, dmap: DriverMap, module: A.ModuleDecl, modules: dict[str, A.ModuleDecl],
                 strict: bool):
        self.dmap = dmap
        self.module = module
        self.modules = modules
        self.strict = strict
        self.params = module_params(module)
        self.nets: dict[str, NetInfo] = {}

    def declare(self) -> None:
        m = self.module
        entries: dict[str, dict] = {}
        for p in m.ports:
            entries[p.name] = {"range": p.range, "kind": "reg" if p.is_reg else "wire",
                               "dir": p.direction, "line": p.line}
        for item in m.items:
            if isinstance(item, A.PortDecl):
                for d in item.names:
                    e = entries.setdefault(d.name, {"range": None, "kind": "wire", "dir": None,
                                                    "line": item.span.start})
                    e["dir"] = item.direction
                    if item.range is not None:
                        e["range"] = item.range
                    if item.is_reg:
                        e["kind"] = "reg"
            elif isinstance(item, A.NetDecl):
                for d in item.names:
                    e = entries.setdefault(d.name, {"range": None, "kind": item.kind, "dir": None,
                                                    "line": item.span.start})
                    if e["dir"] is None:
                        e["line"] = item.span.start
                    e["kind"] = item.kind
                    if item.range is not None:
                        e["range"] = item.range
        for name, e in entries.items():
            if e["kind"] in ("integer", "genvar"):
                msb, lsb = 31, 0
            elif e["kind"] == "time":
                msb, lsb = 63, 0
            elif e["range"] is not None:
                msb = const_eval(e["range"].msb, self.params)
                lsb = const_eval(e["range"].lsb, self.params)
                if msb is None or lsb is None:
                    msb = lsb = 0
            else:
                msb = lsb = 0
            span = A.Span(m.span.file, e["line"], e["line"])
            info = NetInfo(m.name, name, msb, lsb, e["kind"], e["dir"], span)
            self.nets[name] = info
            self.dmap.nets[(m.name, name)] = info
            if e["dir"] in ("input", "inout"):
                unit = f"port:{name}"
                for b in range(info.width):
                    info.drivers[b].append(Site(span, "port", unit))
            if e["dir"] in ("output", "inout"):
                for b in range(info.width):
                    info.readers[b].append(Site(span, "port", "port"))

    # ------------------------------------------------------------- bit sets
    def bits_of(self, e: A.Expr) -> list[tuple[NetInfo, list[int]]]:
        """Offsets targeted by an lvalue expression, per net."""
        if isinstance(e, A.Concat):
            out = []
            for p in e.parts:
                out.extend(self.bits_of(p))
            return out
        if isinstance(e, A.Ident):
            n = self.nets.get(e.name)
            return [(n, list(range(n.width)))] if n else []
        if isinstance(e, A.Index) and isinstance(e.base, A.Ident):
            n = self.nets.get(e.base.name)
            if n is None:
                return []
            if n.kind in ("reg", "integer") and self._is_memory(n.name):
                return [(n, list(range(n.width)))]
            i = const_eval(e.index, self.params)
            if i is None:
                return [(n, list(range(n.width)))]
            off = n.offset(i)
            return [(n, [off] if off is not None else [])]
        if isinstance(e, A.Index) and isinstance(e.base, A.Index):
            return self._whole(e.base.base)
        if isinstance(e, A.Slice) and isinstance(e.base, A.Ident):
            n = self.nets.get(e.base.name)
            if n is None:
                return []
            a = const_eval(e.msb, self.params)
            b = const_eval(e.lsb, self.params)
            if a is None or b is None:
                return [(n, list(range(n.width)))]
            offs = [n.offset(i) for i in range(min(a, b), max(a, b) + 1)]
            return [(n, sorted(o for o in offs if o is not None))]
        if isinstance(e, A.IndexedSlice) and isinstance(e.base, A.Ident):
            n = self.nets.get(e.base.name)
            if n is None:
                return []
            s = const_eval(e.start, self.params)
            w = const_eval(e.width, self.params)
            if s is None or w is None:
                return [(n, list(range(n.width)))]
            lo, hi = (s, s + w - 1) if e.ascending else (s - w + 1, s)
            offs = [n.offset(i) for i in range(lo, hi + 1)]
            return [(n, sorted(o for o in offs if o is not None))]
        if isinstance(e, (A.Slice, A.IndexedSlice, A.Index)):
            return self._whole(e.base)
        return []

    def _whole(self, e: A.Expr) -> list[tuple[NetInfo, list[int]]]:
        while isinstance(e, (A.Index, A.Slice, A.IndexedSlice)):
            e = e.base
        if isinstance(e, A.Ident) and e.name in self.nets:
            n = self.nets[e.name]
            return [(n, list(range(n.width)))]
        return []

    def _is_memory(self, name: str) -> bool:
        for item in self.module.items:
            if isinstance(item, A.NetDecl):
                for d in item.names:
                    if d.name == name and d.array is not None:
                        return True
        return False

    def read_bits(self, e: Optional[A.Expr]) -> list[tuple[NetInfo, list[int]]]:
        """Offsets observed by an rvalue expression, per net."""
        out: list[tuple[NetInfo, list[int]]] = []
        if e is None:
            return out
        if isinstance(e, A.Ident):
            if e.name in self.nets:
                n = self.nets[e.name]
                out.append((n, list(range(n.width))))
            return out
        if isinstance(e, (A.Index, A.Slice, A.IndexedSlice)):
            if isinstance(e.base, A.Ident) and e.base.name in self.nets:
                out.extend(self.bits_of(e))
            else:
                out.extend(self.read_bits(e.base))
            for sub in ((e.index,) if isinstance(e, A.Index) else
                        (e.msb, e.lsb) if isinstance(e, A.Slice) else (e.start, e.width)):
                out.extend(self.read_bits(sub))
            return out
        if isinstance(e, (A.Concat, A.Repeat)):
            if isinstance(e, A.Repeat):
                out.extend(self.read_bits(e.count))
            for p in e.parts:
                out.extend(self.read_bits(p))
            return out
        if isinstance(e, A.Unary):
            return self.read_bits(e.operand)
        if isinstance(e, A.Binary):
            return self.read_bits(e.left) + self.read_bits(e.right)
        if isinstance(e, A.Ternary):
            return self.read_bits(e.cond) + self.read_bits(e.then) + self.read_bits(e.other)
        if isinstance(e, A.Call):
            for a in e.args:
                out.extend(self.read_bits(a))
        return out

    def lvalue_reads(self, e: A.Expr) -> list[A.Expr]:
        """Index expressions inside an assignment target (they are reads)."""
        if isinstance(e, A.Concat):
            return [x for p in e.parts for x in self.lvalue_reads(p)]
        if isinstance(e, A.Index):
            out = [e.index] + self.lvalue_reads(e.base)
            if isinstance(e.base, A.Ident) and self._is_memory(e.base.name):
                return [e.index]
            return out
        if isinstance(e, A.Slice):
            return self.lvalue_reads(e.base)
        if isinstance(e, A.IndexedSlice):
            return [e.start] + self.lvalue_reads(e.base)
        return []

    # -------------------------------------------------------------- recording
    def drive(self, lhs: A.Expr, site: Site) -> None:
        for net, offs in self.bits_of(lhs):
            for o in offs:
                net.drivers[o].append(site)
        self.read(self.lvalue_reads(lhs), site.span)

    def read(self, exprs: Iterable[Optional[A.Expr]], span: A.Span) -> None:
        site = Site(span, "read", "read")
        for e in exprs:
            for net, offs in self.read_bits(e):
                for o in offs:
                    net.readers[o].append(site)

    def walk(self) -> None:
        m = self.module
        for idx, item in enumerate(m.items):
            span = item.span
            if isinstance(item, A.ContinuousAssign):
                for k, (lhs, rhs) in enumerate(item.assigns):
                    self.drive(lhs, Site(span, "continuous", f"assign:{span.start}:{idx}:{k}"))
                    self.read([rhs], span)
            elif isinstance(item, A.NetDecl):
                for d in item.names:
                    if d.init is None:
                        continue
                    target = A.Ident(d.name, line=span.start)
                    if item.kind in ("reg", "integer", "time"):
                        self.drive(target, Site(span, "initial", f"init:{d.name}"))
                    else:
                        self.drive(target, Site(span, "continuous", f"declassign:{d.name}"))
                    self.read([d.init], span)
            elif isinstance(item, (A.Always, A.Initial)):
                kind = "procedural" if isinstance(item, A.Always) else "initial"
                self.statement(item.body, Site(span, kind, f"{kind}:{span.start}:{idx}"))
            elif isinstance(item, (A.FunctionDecl, A.TaskDecl)):
                local = {d.name for pd in item.inputs for d in pd.names}
                local |= {d.name for nd in item.decls for d in nd.names}
                if isinstance(item, A.FunctionDecl):
                    local.add(item.name)
                self.subroutine(item, local)
            elif isinstance(item, A.Instance):
                self.instance(item)

    def subroutine(self, item, local: set[str]) -> None:
        # only reads of module-level nets matter inside functions and tasks
        saved = self.nets
        self.nets = {k: v for k, v in saved.items() if k not in local}
        site = Site(item.span, "procedural", f"task:{item.name}")
        for s in A.walk_statements(item.body):
            self._stmt_reads(s)
            if isinstance(s, A.Assign) and isinstance(item, A.TaskDecl):
                for net, offs in self.bits_of(s.lhs):
                    for o in offs:
                        net.drivers[o].append(site)
        self.nets = saved

    def statement(self, stmt: Optional[A.Stmt], site: Site) -> None:
        for s in A.walk_statements(stmt):
            self._stmt_reads(s)
            if isinstance(s, A.Assign):
                self.drive(s.lhs, Site(s.span, site.kind, site.unit))
            elif isinstance(s, A.For):
                self.drive(s.init.lhs, Site(s.span, site.kind, site.unit))
                self.drive(s.step.lhs, Site(s.span, site.kind, site.unit))
            elif isinstance(s, A.TaskCall):
                task = next((i for i in self.module.items
                             if isinstance(i, A.TaskDecl) and i.name == s.name), None)
                if task is not None:
                    dirs = [pd.direction for pd in task.inputs for _ in pd.names]
                    for arg, d in zip(s.args, dirs):
                        if d in ("output", "inout"):
                            self.drive(arg, Site(s.span, site.kind, site.unit))

    def _stmt_reads(self, s: A.Stmt) -> None:
        span = s.span
        if isinstance(s, A.Assign):
            self.read([s.rhs, s.delay], span)
        elif isinstance(s, (A.If, A.WaitStmt, A.While)):
            self.read([s.cond], span)
        elif isinstance(s, A.Case):
            self.read([s.expr] + [x for it in s.items for x in (it.exprs or [])], span)
        elif isinstance(s, A.For):
            self.read([s.init.rhs, s.cond, s.step.rhs], span)
        elif isinstance(s, A.RepeatStmt):
            self.read([s.count], span)
        elif isinstance(s, A.DelayStmt):
            self.read([s.amount], span)
        elif isinstance(s, A.EventStmt) and s.events:
            self.read([ev.expr for ev in s.events], span)
        elif isinstance(s, A.SysTask):
            self.read(s.args, span)
        elif isinstance(s, A.TaskCall):
            task = next((i for i in self.module.items
                         if isinstance(i, A.TaskDecl) and i.name == s.name), None)
            dirs = [pd.direction for pd in task.inputs for _ in pd.names] if task else []
            for k, arg in enumerate(s.args):
                if k >= len(dirs) or dirs[k] in ("input", "inout"):
                    self.read([arg], span)

    def instance(self, inst: A.Instance) -> None:
        span = inst.span
        for c in inst.params:
            self.read([c.expr], span)
        child = self.modules.get(inst.module)
        if child is None:
            self.dmap.unresolved.append((self.module.name, inst.name, span))
            if self.strict:
                raise UnresolvedInstance(inst.name, inst.module)
            for c in inst.connections:
                for e in A.walk_expr(c.expr):
                    if isinstance(e, A.Ident) and e.name in self.nets:
                        self.nets[e.name].external = True
            return
        self.dmap.hierarchy.setdefault(self.module.name, []).append(child.name)
        for i, c in enumerate(inst.connections):
            if c.expr is None:
                continue
            if c.port is not None:
                port = child.port(c.port)
            else:
                port = child.ports[i] if i < len(child.ports) else None
            if port is None:
                continue
            if port.direction in ("output", "inout"):
                self.drive(c.expr, Site(span, "instance", f"inst:{inst.name}.{port.name}"))
            if port.direction in ("input", "inout", None):
                self.read([c.expr], span)


def build_driver_map(ast: A.SourceAST, strict: bool = False) -> DriverMap:
    """Per-bit driver and reader sites for every net of every module.

    Instances of modules missing from ``ast`` mark their connected nets as
    external; with ``strict`` they raise :class:`UnresolvedInstance`.
    """
    dmap = DriverMap()
    modules = {m.name: m for m in ast.modules}
    walkers = []
    for m in ast.modules:
        w = _ModuleWalker(dmap, m, modules, strict)
        w.declare()
        walkers.append(w)
    for w in walkers:
        w.walk()
    return dmap


# --------------------------------------------------------------------------
# checks
# --------------------------------------------------------------------------
def _reachable(dmap: DriverMap, top: str) -> set[str]:
    seen = set()
    stack = [top]
    while stack:
        m = stack.pop()
        if m in seen:
            continue
        seen.add(m)
        stack.extend(dmap.hierarchy.get(m, []))
    return seen


def _conflict_units(sites: list[Site]) -> dict[str, Site]:
    units: dict[str, Site] = {}
    for s in sites:
        if s.kind in ("initial",):
            continue
        units.setdefault(s.unit, s)
    return units


def check_net(net: NetInfo) -> list[LintDiagnostic]:
    """Diagnostics for one net, independent of every other net."""
    if net.external:
        return []
    out = []
    file, line = net.span.file, net.span.start
    multi_bits = []
    multi_sites: dict[str, Site] = {}
    for off, sites in enumerate(net.drivers):
        units = _conflict_units(sites)
        if len(units) >= 2:
            multi_bits.append(net.index(off))
            for u, s in units.items():
                multi_sites.setdefault(u, s)
    if multi_bits:
        sites = sorted({s.span for s in multi_sites.values()}, key=lambda sp: (sp.file, sp.start))
        where = ", ".join(f"{sp.file}:{sp.start}" for sp in sites)
        label = "bit" if len(multi_bits) == 1 else "bits"
        out.append(LintDiagnostic(
            MULTI_DRIVEN, net.module, net.name, tuple(sorted(multi_bits)), tuple(sites),
            f"'{net.name}' {label} {format_bits(multi_bits)} driven by {len(multi_sites)} sources ({where})",
            SEVERITY[MULTI_DRIVEN], file, line))
    driven = [off for off, s in enumerate(net.drivers) if s]
    read = any(net.readers)
    undriven_bits = [net.index(off) for off, s in enumerate(net.drivers) if not s]
    if not driven and read:
        readers = sorted({s.span for r in net.readers for s in r if s.kind == "read"},
                         key=lambda sp: (sp.file, sp.start))
        out.append(LintDiagnostic(
            UNDRIVEN, net.module, net.name, tuple(sorted(undriven_bits)), tuple(readers),
            f"'{net.name}' is read but never driven", SEVERITY[UNDRIVEN], file, line))
    elif driven and undriven_bits:
        drivers = sorted({s.span for d in net.drivers for s in d if s.kind != "port"},
                         key=lambda sp: (sp.file, sp.start))
        driven_bits = [net.index(off) for off in driven]
        out.append(LintDiagnostic(
            PARTIALLY_DRIVEN, net.module, net.name, tuple(sorted(undriven_bits)), tuple(drivers),
            f"'{net.name}' bits {format_bits(undriven_bits)} are never driven "
            f"(only {format_bits(driven_bits)} have drivers)", SEVERITY[PARTIALLY_DRIVEN], file, line))
    if not read:
        out.append(LintDiagnostic(
            UNUSED, net.module, net.name, (), (net.span,),
            f"'{net.name}' is never read", SEVERITY[UNUSED], file, line))
    return out


def sort_key(d: LintDiagnostic):
    return (d.file, d.line, KINDS.index(d.kind), d.module, d.net)


def lint(dmap: DriverMap, top_module: Optional[str] = None) -> list[LintDiagnostic]:
    """Structural diagnostics for ``top_module`` and everything it instantiates
    (every module when ``top_module`` is None or unknown), sorted by
    (file, line)."""
    modules = {m for m, _ in dmap.nets}
    if top_module is not None and top_module in modules | set(dmap.hierarchy):
        modules = _reachable(dmap, top_module)
    out: list[LintDiagnostic] = []
    for (mod, _), net in dmap.nets.items():
        if mod in modules:
            out.extend(check_net(net))
    return sorted(out, key=sort_key)


def external(file: str, line: int, message: str, severity: str = "warning") -> LintDiagnostic:
    """Wrap a toolchain diagnostic so it renders alongside structural ones."""
    return LintDiagnostic(EXTERNAL, "", "", (), (), message, severity, file, line)


def render(diags: Iterable[LintDiagnostic]) -> str:
    return "\n".join(d.render() for d in diags)


__all__ = ["DriverMap", "NetInfo", "Site", "LintDiagnostic", "UnresolvedInstance",
           "build_driver_map", "lint", "render", "external", "format_bits", "check_net",
           "MULTI_DRIVEN", "UNDRIVEN", "PARTIALLY_DRIVEN", "UNUSED", "EXTERNAL"]
