"""Entry points tying parsing, elaboration, scheduling and VCD output together."""
from __future__ import annotations

import io
import sys
from dataclasses import dataclass, field
from typing import Optional, TextIO

from ..verilog import UnsupportedConstruct, VerilogSyntaxError, parse_source
from ..waveform import VcdWriter
from .elaborate import Diagnostic, ElabError, Elaborator, Scope
from .kernel import Kernel, Process, SimulationError


@dataclass
class SimResult:
    diagnostics: list[Diagnostic] = field(default_factory=list)
    status: str = "ok"  # ok | compile_error | runtime_error
    message: str = ""
    end_time: int = 0
    finished: bool = False

    @property
    def errors(self) -> list[Diagnostic]:
        return [d for d in self.diagnostics if d.severity == "error"]


def _read(paths: list[str]) -> list[tuple[str, str]]:
    out = []
    for p in paths:
        with open(p, encoding="utf-8", errors="replace") as fh:
            out.append((p, fh.read()))
    return out


def elaborate_files(files: list[tuple[str, str]], top: str, out: Optional[TextIO] = None,
                    seed: int = 0) -> tuple[Optional[Elaborator], SimResult]:
    result = SimResult()
    try:
        design = parse_source(files)
    except VerilogSyntaxError as exc:
        result.diagnostics.append(Diagnostic(exc.path, exc.line, "error", exc.message))
        result.status = "compile_error"
        return None, result
    except UnsupportedConstruct as exc:
        result.diagnostics.append(Diagnostic(exc.path, exc.line, "error",
                                             f"unsupported construct: {exc.message}"))
        result.status = "compile_error"
        return None, result
    elab = Elaborator(design, out=out, seed=seed)
    try:
        elab.elaborate(top)
    except ElabError:
        pass
    except RecursionError:
        elab.error(1, "design too deeply nested", files[0][0] if files else "")
    # stable, de-duplicated ordering
    seen = set()
    for d in sorted(elab.diags, key=lambda d: (d.file, d.line, d.severity, d.message)):
        if d not in seen:
            seen.add(d)
            result.diagnostics.append(d)
    if result.errors:
        result.status = "compile_error"
    return elab, result


def lint_files(files: list[tuple[str, str]], top: str) -> SimResult:
    _, result = elaborate_files(files, top, out=io.StringIO())
    return result


def _scope_signals(scope: Scope, levels: int, depth: int = 1):
    for sig in scope.signals.values():
        if sig.words is None:
            yield sig
    if levels == 0 or depth < levels:
        for child in scope.children.values():
            yield from _scope_signals(child, levels, depth + 1)


def simulate_files(files: list[tuple[str, str]], top: str, vcd_out: Optional[TextIO] = None,
                   out: Optional[TextIO] = None, max_time: Optional[int] = None,
                   seed: int = 0) -> SimResult:
    """Elaborate ``top`` and run it, streaming value changes to ``vcd_out``."""
    out = out or sys.stdout
    elab, result = elaborate_files(files, top, out=out, seed=seed)
    if elab is None or result.status != "ok":
        return result
    kernel: Kernel = elab.kernel
    writer = VcdWriter(vcd_out) if vcd_out is not None else None
    dumped: list = []
    order: dict = {}
    state = {"started": False}

    def start_dump():
        seen = set()
        requests = elab.dump_requests or [(0, [elab.root])]
        for levels, scopes in requests:
            for sc in scopes or [elab.root]:
                for sig in _scope_signals(sc, levels):
                    if sig not in seen:
                        seen.add(sig)
                        dumped.append(sig)
        for i, sig in enumerate(dumped):
            order[sig] = i
            sig.vcd_id = writer.declare(sig.scope, sig.name, sig.width, "wire" if sig.is_net else "reg")
        writer.start(kernel.time, {s.vcd_id: s.value.to_bin() for s in dumped})
        kernel.dirty.clear()
        state["started"] = True

    def end_of_step():
        for check in elab.monitors:
            check()
        if writer is None:
            return
        if not state["started"]:
            if elab.dump_requests or kernel.time == 0:
                start_dump()
            return
        if kernel.dirty:
            changed = sorted(kernel.dirty, key=order.__getitem__)
            writer.emit(kernel.time, [(s.vcd_id, s.value.to_bin(), s.width) for s in changed])
            kernel.dirty.clear()

    kernel.end_of_step.append(end_of_step)
    for lst in elab.continuous:
        kernel.trigger(lst)
    for i, factory in enumerate(elab.processes):
        proc = Process(kernel, factory(), f"p{i}")
        kernel.active.append(proc.resume)
    try:
        kernel.run(max_time)
    except SimulationError as exc:
        result.status = "runtime_error"
        result.message = str(exc)
    except RecursionError:
        result.status = "runtime_error"
        result.message = "recursion limit reached during simulation"
    if writer is not None:
        writer.finish(kernel.time)
    result.end_time = kernel.time
    result.finished = kernel.finished
    return result


def lint(paths: list[str], top: str) -> SimResult:
    return lint_files(_read(paths), top)


def simulate(paths: list[str], top: str, vcd_path: Optional[str] = None, out: Optional[TextIO] = None,
             max_time: Optional[int] = None) -> SimResult:
    files = _read(paths)
    if vcd_path is None:
        return simulate_files(files, top, None, out, max_time)
    with open(vcd_path, "w", encoding="utf-8") as fh:
        return simulate_files(files, top, fh, out, max_time)
