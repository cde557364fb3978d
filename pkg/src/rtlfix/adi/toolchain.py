"""Compile and simulate proxies over the external lint/simulation commands."""
from __future__ import annotations

import os
import re
import shlex
import shutil
import subprocess
import sys
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .. import netlint
from ..netlint import LintDiagnostic
from ..verilog import UnsupportedConstruct, VerilogSyntaxError, parse_source
from ..waveform import (DEFAULT_PROMPT_MISMATCHES, Mismatch, Trace, VcdFormatError, compare_traces,
                        mismatch_summary, parse_vcd)
from .case import Testbench
from .workspace import CodeBranch, Workspace

DIAG_RE = re.compile(r"^(?P<path>[^:\n]+):(?P<line>\d+):\s*(?P<sev>error|warning|note|info)\s*:\s*(?P<msg>.*)$",
                     re.IGNORECASE)
_PACKAGE_PARENT = str(Path(__file__).resolve().parents[2])


class ToolchainMissing(Exception):
    pass


class ToolTimeout(Exception):
    pass


class SimCrash(Exception):
    pass


class SimTimeout(Exception):
    pass


@dataclass(frozen=True)
class CompileReport:
    success: bool
    diagnostics: tuple[LintDiagnostic, ...]
    error_sites: int
    output: str = ""

    @property
    def errors(self) -> list[LintDiagnostic]:
        return [d for d in self.diagnostics if d.kind == netlint.EXTERNAL and d.severity == "error"]

    def render(self) -> str:
        head = "Compilation succeeded." if self.success else \
            f"Compilation failed with {self.error_sites} error site(s)."
        body = netlint.render(self.diagnostics)
        return head + ("\n" + body if body else "")


@dataclass(frozen=True)
class TestbenchResult:
    name: str
    passed: bool
    mismatches: tuple[Mismatch, ...] = ()
    mismatch_count: int = 0
    vcd_path: Optional[str] = None
    wall_time: float = 0.0
    timed_out: bool = False
    crashed: bool = False
    message: str = ""

    def render(self) -> str:
        if self.passed:
            return f"[{self.name}] PASS"
        if self.timed_out:
            return f"[{self.name}] FAIL: simulation timed out after {self.wall_time:.1f}s"
        if self.crashed:
            return f"[{self.name}] FAIL: simulation error\n{self.message}".rstrip()
        return f"[{self.name}] FAIL: {self.mismatch_count} mismatch(es)\n" + mismatch_summary(list(self.mismatches))


@dataclass(frozen=True)
class SimReport:
    results: tuple[TestbenchResult, ...]

    @property
    def passed(self) -> int:
        return sum(r.passed for r in self.results)

    @property
    def total(self) -> int:
        return len(self.results)

    @property
    def all_pass(self) -> bool:
        return bool(self.results) and all(r.passed for r in self.results)

    @property
    def mismatches(self) -> list[Mismatch]:
        return [m for r in self.results for m in r.mismatches]

    def render(self) -> str:
        head = f"{self.passed}/{self.total} testbenches pass."
        return "\n".join([head] + [r.render() for r in self.results])


def parse_diagnostics(text: str, root: Optional[Path] = None) -> list[tuple[str, int, str, str]]:
    out = []
    for raw in text.splitlines():
        m = DIAG_RE.match(raw.strip())
        if not m:
            continue
        path = m["path"].strip()
        if root is not None and os.path.isabs(path):
            try:
                path = Path(path).resolve().relative_to(root.resolve()).as_posix()
            except ValueError:
                pass
        sev = m["sev"].lower()
        out.append((path, int(m["line"]), "error" if sev == "error" else "warning", m["msg"].strip()))
    return out


def _dedupe(diags: list[LintDiagnostic]) -> list[LintDiagnostic]:
    seen = set()
    out = []
    for d in diags:
        key = (d.file, d.line, d.kind)
        if key not in seen:
            seen.add(key)
            out.append(d)
    return out


@dataclass
class _Run:
    returncode: int
    stdout: str
    stderr: str
    seconds: float


class Toolchain:
    """Runs the case's lint and simulation commands on checked-out branches.

    Results are cached by branch content, so re-checking an unchanged
    snapshot costs nothing.
    """

    def __init__(self, workspace: Workspace, python: str = sys.executable,
                 sim_timeout: Optional[float] = None):
        self.ws = workspace
        self.case = workspace.case
        self.python = python
        self.sim_timeout = sim_timeout if sim_timeout is not None else self.case.sim_timeout
        self._compile_cache: dict = {}
        self._sim_cache: dict = {}
        self._trace_cache: dict = {}
        self._golden: dict[str, Trace] = {}
        self._lock = threading.Lock()
        self._vcd_dir = workspace._tmp / "vcd"
        self._vcd_dir.mkdir(exist_ok=True)

    # -- plumbing ----------------------------------------------------------
    def _command(self, template: str, **values) -> list[str]:
        argv = []
        for tok in shlex.split(template):
            if tok in ("{sources}", "{tb}"):
                argv.extend(values[tok[1:-1]])
            else:
                argv.append(tok.format(python=self.python, **{k: v for k, v in values.items()
                                                              if isinstance(v, str)}))
        return argv

    def _run(self, argv: list[str], cwd: Path, timeout: float) -> _Run:
        env = dict(os.environ)
        env["PYTHONPATH"] = _PACKAGE_PARENT + (os.pathsep + env["PYTHONPATH"] if env.get("PYTHONPATH") else "")
        if shutil.which(argv[0]) is None and not Path(argv[0]).is_file():
            raise ToolchainMissing(f"{argv[0]} not found")
        start = time.monotonic()
        try:
            proc = subprocess.run(argv, cwd=cwd, env=env, capture_output=True, text=True,
                                  timeout=timeout, errors="replace")
        except subprocess.TimeoutExpired:
            raise ToolTimeout(f"{argv[0]} exceeded {timeout:g}s") from None
        except FileNotFoundError:
            raise ToolchainMissing(f"{argv[0]} not found") from None
        return _Run(proc.returncode, proc.stdout, proc.stderr, time.monotonic() - start)

    # -- compile -----------------------------------------------------------
    def structural(self, branch: CodeBranch) -> list[LintDiagnostic]:
        try:
            ast = parse_source(self.ws.texts(branch))
        except (VerilogSyntaxError, UnsupportedConstruct):
            return []  # the external tool reports syntax errors
        return netlint.lint(netlint.build_driver_map(ast), self.case.top)

    def compile(self, branch: CodeBranch) -> CompileReport:
        key = branch.key
        with self._lock:
            if key in self._compile_cache:
                return self._compile_cache[key]
        d = self.ws.checkout(branch)
        try:
            argv = self._command(self.case.lint_cmd, top=self.case.top, sources=self.ws.sources)
            run = self._run(argv, d, self.sim_timeout)
        finally:
            self.ws.release(d)
        external = [netlint.external(f, line, msg, sev)
                    for f, line, sev, msg in parse_diagnostics(run.stderr, d)]
        error_sites = {(x.file, x.line) for x in external if x.severity == "error"}
        if run.returncode != 0 and not error_sites:
            tail = "\n".join(run.stderr.strip().splitlines()[-5:]) or f"exit status {run.returncode}"
            external.append(netlint.external("", 0, tail, "error"))
            error_sites.add(("", 0))
        merged = _dedupe(external + self.structural(branch))
        merged.sort(key=lambda x: (x.file, x.line))
        report = CompileReport(run.returncode == 0 and not error_sites, tuple(merged),
                               len(error_sites), run.stderr)
        with self._lock:
            self._compile_cache[key] = report
        return report

    # -- simulate ----------------------------------------------------------
    def golden(self, tb: Testbench) -> Trace:
        with self._lock:
            if tb.name not in self._golden:
                self._golden[tb.name] = parse_vcd((self.case.root / tb.golden).read_bytes())
            return self._golden[tb.name]

    def signals(self, tb: Testbench) -> Optional[list[str]]:
        return self.case.signals_for(tb) or None

    def testbench(self, name: Optional[str]) -> Testbench:
        if name is None:
            return self.case.testbenches[0]
        for tb in self.case.testbenches:
            if tb.name == name:
                return tb
        raise KeyError(name)

    def _execute(self, branch: CodeBranch, tb: Testbench) -> tuple[Optional[Trace], _Run]:
        """Run one testbench; raises SimTimeout or SimCrash."""
        d = self.ws.checkout(branch)
        try:
            argv = self._command(self.case.sim_cmd, top=self.case.top, tb_top=tb.top, vcd="out.vcd",
                                 sources=self.ws.sources, tb=list(tb.files))
            try:
                run = self._run(argv, d, self.sim_timeout)
            except ToolTimeout:
                raise SimTimeout(f"{tb.name} exceeded {self.sim_timeout:g}s") from None
            if run.returncode != 0:
                raise SimCrash((run.stderr.strip() or f"exit status {run.returncode}")[-2000:])
            vcd = d / "out.vcd"
            if not vcd.is_file():
                raise SimCrash("the simulator produced no VCD")
            kept = self._vcd_dir / f"{branch.id}-{tb.name}.vcd"
            shutil.copyfile(vcd, kept)
            try:
                trace = parse_vcd(vcd.read_bytes())
            except VcdFormatError as exc:
                raise SimCrash(f"unreadable VCD: {exc}") from None
            return trace, run
        finally:
            self.ws.release(d)

    def simulate(self, branch: CodeBranch, tb: Testbench) -> TestbenchResult:
        key = (branch.key, tb.name)
        with self._lock:
            if key in self._sim_cache:
                return self._sim_cache[key]
        start = time.monotonic()
        try:
            trace, run = self._execute(branch, tb)
        except SimTimeout:
            result = TestbenchResult(tb.name, False, wall_time=time.monotonic() - start, timed_out=True,
                                     message="timeout")
            trace = None
        except SimCrash as exc:
            result = TestbenchResult(tb.name, False, wall_time=time.monotonic() - start, crashed=True,
                                     message=str(exc))
            trace = None
        else:
            try:
                mism = compare_traces(trace, self.golden(tb), self.signals(tb), self.case.clock, self.case.edge)
            except KeyError as exc:
                result = TestbenchResult(tb.name, False, wall_time=run.seconds, crashed=True,
                                         message=f"cannot compare waveforms: {exc}")
            else:
                result = TestbenchResult(
                    tb.name, not mism, tuple(mism[:DEFAULT_PROMPT_MISMATCHES]), len(mism),
                    str(self._vcd_dir / f"{branch.id}-{tb.name}.vcd"), run.seconds, False, False,
                    run.stdout[-2000:])
        with self._lock:
            self._sim_cache[key] = result
            self._trace_cache[key] = trace
        return result

    def run_tests(self, branch: CodeBranch) -> SimReport:
        return SimReport(tuple(self.simulate(branch, tb) for tb in self.case.testbenches))

    def trace(self, branch: CodeBranch, tb: Testbench) -> Optional[Trace]:
        self.simulate(branch, tb)
        return self._trace_cache.get((branch.key, tb.name))

    def is_fixed(self, branch: CodeBranch) -> bool:
        """Every testbench passes on ``branch``, checked by simulation."""
        try:
            return self.run_tests(branch).all_pass
        except (ToolchainMissing, OSError):
            return False
