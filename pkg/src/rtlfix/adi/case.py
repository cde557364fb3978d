"""Case directory loading.

A case directory holds ``src/`` (modifiable design sources), ``tb/``
(testbenches), ``golden/`` (one reference VCD per testbench) and a
``case.toml`` describing how they fit together::

    top = "mux4"
    clock = "clk"                  # optional
    sources = ["src/*.v"]          # optional, modifiable globs

    [commands]                     # optional
    lint = "{python} -m rtlfix.sim lint --top {top} {sources}"
    sim = "{python} -m rtlfix.sim run --top {tb_top} --vcd {vcd} {sources} {tb}"
    timeout = 30

    [[testbench]]
    name = "tb"
    top = "tb"
    files = ["tb/tb.v"]
    golden = "golden/tb.vcd"
    signals = ["q"]                # optional, defaults to the top's outputs
"""
from __future__ import annotations

import re
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from ..verilog import UnsupportedConstruct, VerilogSyntaxError, parse_source

CASE_FILE = "case.toml"
DEFAULT_LINT = "{python} -m rtlfix.sim lint --top {top} {sources}"
DEFAULT_SIM = "{python} -m rtlfix.sim run --top {tb_top} --vcd {vcd} {sources} {tb}"
DEFAULT_SIM_TIMEOUT = 30.0
_CLOCK_RE = re.compile(r"clk|clock", re.IGNORECASE)


class CaseInvalid(Exception):
    pass


@dataclass(frozen=True)
class Testbench:
    name: str
    top: str
    files: tuple[str, ...]
    golden: str
    signals: Optional[tuple[str, ...]] = None


@dataclass
class CaseConfig:
    root: Path
    top: str
    clock: str
    testbenches: list[Testbench]
    sources: list[str]  # relative paths of modifiable files
    source_globs: list[str] = field(default_factory=lambda: ["src/**/*.v"])
    lint_cmd: str = DEFAULT_LINT
    sim_cmd: str = DEFAULT_SIM
    sim_timeout: float = DEFAULT_SIM_TIMEOUT
    edge: str = "rising"
    outputs: tuple[str, ...] = ()

    @property
    def protected(self) -> list[str]:
        """Relative paths of every file the repair must never alter."""
        out = {CASE_FILE}
        for tb in self.testbenches:
            out.update(tb.files)
            out.add(tb.golden)
        for sub in ("tb", "golden"):
            d = self.root / sub
            if d.is_dir():
                out.update(p.relative_to(self.root).as_posix() for p in d.rglob("*") if p.is_file())
        return sorted(out - set(self.sources))

    def signals_for(self, tb: Testbench) -> list[str]:
        if tb.signals is not None:
            return list(tb.signals)
        return list(self.outputs)


def _glob(root: Path, patterns: list[str]) -> list[str]:
    found: set[str] = set()
    for pat in patterns:
        for p in root.glob(pat):
            if p.is_file():
                found.add(p.relative_to(root).as_posix())
    return sorted(found)


def _str_list(raw, what: str) -> list[str]:
    if isinstance(raw, str):
        return [raw]
    if not isinstance(raw, list) or not all(isinstance(x, str) for x in raw):
        raise CaseInvalid(f"{what} must be a list of strings")
    return raw


def default_clock(ports: list[tuple[str, str]]) -> Optional[str]:
    """Lexically first input whose name mentions clk/clock."""
    names = sorted(n for n, d in ports if d == "input" and _CLOCK_RE.search(n))
    return names[0] if names else None


def load_case(root) -> CaseConfig:
    root = Path(root).resolve()
    cfg_path = root / CASE_FILE
    if not cfg_path.is_file():
        raise CaseInvalid(f"{cfg_path} not found")
    try:
        raw = tomllib.loads(cfg_path.read_text(encoding="utf-8"))
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise CaseInvalid(f"{cfg_path}: {exc}") from None

    top = raw.get("top")
    if not isinstance(top, str) or not top:
        raise CaseInvalid("case.toml needs a 'top' module name")
    globs = _str_list(raw.get("sources", ["src/**/*.v"]), "sources")
    sources = _glob(root, globs)
    if not sources:
        raise CaseInvalid(f"no source files match {globs}")

    tbs = []
    for i, t in enumerate(raw.get("testbench", [])):
        try:
            name = str(t.get("name", f"tb{i}"))
            files = tuple(_str_list(t["files"], "testbench files"))
            tb = Testbench(name, str(t["top"]), files, str(t["golden"]),
                           tuple(_str_list(t["signals"], "signals")) if "signals" in t else None)
        except KeyError as exc:
            raise CaseInvalid(f"testbench {i} lacks {exc}") from None
        for f in tb.files + (tb.golden,):
            if not (root / f).is_file():
                raise CaseInvalid(f"testbench {name}: {f} does not exist")
        tbs.append(tb)
    if not tbs:
        raise CaseInvalid("case.toml declares no testbench")
    if len({t.name for t in tbs}) != len(tbs):
        raise CaseInvalid("testbench names must be unique")
    overlap = set(sources) & {f for t in tbs for f in t.files + (t.golden,)}
    if overlap:
        raise CaseInvalid(f"testbench files overlap the modifiable sources: {sorted(overlap)}")

    try:
        ast = parse_source([(s, (root / s).read_text(encoding="utf-8")) for s in sources])
    except (VerilogSyntaxError, UnsupportedConstruct):
        # a buggy design may not parse; only the module name check is lost
        ast = None
    ports: list[tuple[str, str]] = []
    if ast is not None:
        mod = next((m for f in ast.files for m in f.modules if m.name == top), None)
        if mod is None:
            raise CaseInvalid(f"top module {top!r} not found in {sources}")
        ports = [(p.name, p.direction) for p in mod.ports]

    clock = raw.get("clock") or default_clock(ports)
    if not clock:
        raise CaseInvalid("no clock configured and no clk/clock input on the top module")

    cmds = raw.get("commands", {})
    edge = raw.get("edge", "rising")
    if edge not in ("rising", "falling"):
        raise CaseInvalid("edge must be 'rising' or 'falling'")
    return CaseConfig(
        root=root, top=top, clock=str(clock), testbenches=tbs, sources=sources,
        source_globs=globs,
        lint_cmd=str(cmds.get("lint", DEFAULT_LINT)),
        sim_cmd=str(cmds.get("sim", DEFAULT_SIM)),
        sim_timeout=float(cmds.get("timeout", DEFAULT_SIM_TIMEOUT)),
        edge=edge,
        outputs=tuple(n for n, d in ports if d == "output"),
    )
