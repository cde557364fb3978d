"""VCD traces: parsing, writing, clock-sampled comparison against a golden
reference, and textual windows around mismatches."""
from __future__ import annotations

import bisect
import io
import re
from dataclasses import dataclass, field
from typing import Iterable, Optional, TextIO, Union

TRUNCATED = "<truncated>"
DEFAULT_PROMPT_MISMATCHES = 20
FLAG = "*"


class VcdFormatError(Exception):
    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class ClockNotFound(KeyError):
    pass


class SignalNotFound(KeyError):
    pass


@dataclass(frozen=True)
class SignalInfo:
    name: str
    ident: str
    width: int
    var_type: str = "wire"


@dataclass
class Trace:
    timescale: str
    signals: dict[str, SignalInfo] = field(default_factory=dict)
    changes: dict[str, list[tuple[int, str]]] = field(default_factory=dict)
    end_time: int = 0

    def resolve(self, name: str) -> Optional[str]:
        """Full hierarchical name for ``name``: exact match, else unique dotted suffix."""
        if name in self.signals:
            return name
        hits = [n for n in self.signals if n.endswith("." + name)]
        if len(hits) == 1:
            return hits[0]
        if len(hits) > 1:
            # prefer the shallowest match
            hits.sort(key=lambda n: (n.count("."), n))
            return hits[0]
        return None

    def history(self, name: str) -> list[tuple[int, str]]:
        full = self.resolve(name)
        if full is None:
            raise SignalNotFound(name)
        return self.changes.get(self.signals[full].ident, [])

    def width(self, name: str) -> int:
        full = self.resolve(name)
        if full is None:
            raise SignalNotFound(name)
        return self.signals[full].width


@dataclass(frozen=True)
class Mismatch:
    signal: str
    cycle: int
    time: int
    expected: str
    actual: str


# --------------------------------------------------------------------------
# parsing
# --------------------------------------------------------------------------
def _normalize(value: str, width: int) -> str:
    value = value.lower()
    if len(value) < width:
        pad = value[0] if value and value[0] in "xz" else "0"
        value = pad * (width - len(value)) + value
    elif len(value) > width:
        value = value[-width:]
    return value


_VALUE_CHARS = re.compile(r"^[01xzXZ]+$")


def parse_vcd(data: Union[bytes, str]) -> Trace:
    """Parse the IEEE-1364 VCD subset: header sections, ``$var`` declarations,
    timestamps and scalar/vector value changes."""
    text = data.decode("utf-8", errors="replace") if isinstance(data, bytes) else data
    tokens: list[tuple[str, int]] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        for tok in line.split():
            tokens.append((tok, lineno))
    trace = Trace(timescale="1ns")
    widths: dict[str, int] = {}
    scope: list[str] = []
    i = 0
    n = len(tokens)

    def section_body(start: int) -> tuple[list[str], int]:
        body = []
        j = start
        while j < n and tokens[j][0] != "$end":
            body.append(tokens[j][0])
            j += 1
        if j >= n:
            raise VcdFormatError(tokens[start - 1][1], "unterminated section")
        return body, j + 1

    enddefs = False
    while i < n:
        tok, line = tokens[i]
        if tok == "$enddefinitions":
            _, i = section_body(i + 1)
            enddefs = True
            break
        if tok == "$timescale":
            body, i = section_body(i + 1)
            trace.timescale = "".join(body)
        elif tok == "$scope":
            body, i = section_body(i + 1)
            if len(body) < 2:
                raise VcdFormatError(line, "malformed $scope")
            scope.append(body[1])
        elif tok == "$upscope":
            _, i = section_body(i + 1)
            if not scope:
                raise VcdFormatError(line, "$upscope without $scope")
            scope.pop()
        elif tok == "$var":
            body, i = section_body(i + 1)
            if len(body) < 4:
                raise VcdFormatError(line, "malformed $var")
            var_type, size, ident, ref = body[0], body[1], body[2], body[3]
            try:
                width = int(size)
            except ValueError:
                raise VcdFormatError(line, f"bad $var size {size!r}") from None
            name = ".".join(scope + [ref])
            trace.signals[name] = SignalInfo(name, ident, width, var_type)
            widths[ident] = width
            trace.changes.setdefault(ident, [])
        elif tok.startswith("$"):
            _, i = section_body(i + 1)
        else:
            raise VcdFormatError(line, f"unexpected token {tok!r} in header")
    if not enddefs:
        last = tokens[-1][1] if tokens else 1
        raise VcdFormatError(last, "missing $enddefinitions")

    time = 0
    seen_time = False
    while i < n:
        tok, line = tokens[i]
        i += 1
        if tok.startswith("#"):
            try:
                t = int(tok[1:])
            except ValueError:
                raise VcdFormatError(line, f"bad timestamp {tok!r}") from None
            if seen_time and t < time:
                raise VcdFormatError(line, "timestamps must not decrease")
            time = t
            seen_time = True
            trace.end_time = max(trace.end_time, t)
            continue
        if tok in ("$dumpvars", "$dumpall", "$dumpon", "$dumpoff", "$end"):
            continue
        if tok.startswith("$"):
            # $comment and friends in the body
            while i < n and tokens[i][0] != "$end":
                i += 1
            i += 1
            continue
        head = tok[0].lower()
        if head == "b":
            if i >= n:
                raise VcdFormatError(line, "vector value without identifier")
            value, ident = tok[1:], tokens[i][0]
            i += 1
            if not value or not _VALUE_CHARS.match(value):
                raise VcdFormatError(line, f"bad vector value {tok!r}")
        elif head == "r":
            raise VcdFormatError(line, "real values are not supported")
        elif head in "01xz":
            value, ident = tok[0], tok[1:]
        else:
            raise VcdFormatError(line, f"unexpected token {tok!r}")
        if ident not in widths:
            raise VcdFormatError(line, f"unknown identifier {ident!r}")
        value = _normalize(value, widths[ident])
        hist = trace.changes[ident]
        if hist and hist[-1][0] == time:
            hist.pop()
        if not hist or hist[-1][1] != value:
            hist.append((time, value))
    return trace


# --------------------------------------------------------------------------
# writing
# --------------------------------------------------------------------------
def vcd_ident(index: int) -> str:
    chars = []
    index += 1
    while index:
        index -= 1
        chars.append(chr(33 + index % 94))
        index //= 94
    return "".join(chars)


def _value_token(value: str, ident: str, width: int) -> str:
    if width == 1:
        return f"{value}{ident}"
    return f"b{value} {ident}"


class VcdWriter:
    """Incremental VCD emitter used by the simulator."""

    def __init__(self, out: TextIO, timescale: str = "1ns"):
        self.out = out
        self.timescale = timescale
        self.vars: list[tuple[tuple[str, ...], str, int, str, str]] = []
        self.started = False
        self.last_time: Optional[int] = None

    def declare(self, scope: tuple[str, ...], name: str, width: int, var_type: str = "wire") -> str:
        ident = vcd_ident(len(self.vars))
        self.vars.append((scope, name, width, ident, var_type))
        return ident

    def _header(self) -> None:
        w = self.out.write
        w("$date\n  generated\n$end\n")
        w(f"$timescale {self.timescale} $end\n")
        current: list[str] = []
        for scope, name, width, ident, var_type in sorted(self.vars, key=lambda v: (v[0], v[1])):
            common = 0
            while common < min(len(current), len(scope)) and current[common] == scope[common]:
                common += 1
            for _ in range(len(current) - common):
                w("$upscope $end\n")
            for part in scope[common:]:
                w(f"$scope module {part} $end\n")
            current = list(scope)
            w(f"$var {var_type} {width} {ident} {name} $end\n")
        for _ in current:
            w("$upscope $end\n")
        w("$enddefinitions $end\n")

    def start(self, time: int, values: dict[str, str]) -> None:
        self._header()
        self.out.write(f"#{time}\n$dumpvars\n")
        widths = {v[3]: v[2] for v in self.vars}
        for ident, value in values.items():
            self.out.write(_value_token(value, ident, widths[ident]) + "\n")
        self.out.write("$end\n")
        self.started = True
        self.last_time = time

    def emit(self, time: int, changes: Iterable[tuple[str, str, int]]) -> None:
        lines = [_value_token(v, ident, width) for ident, v, width in changes]
        if not lines:
            return
        if time != self.last_time:
            self.out.write(f"#{time}\n")
            self.last_time = time
        self.out.write("\n".join(lines) + "\n")

    def finish(self, time: int) -> None:
        if self.started and self.last_time is not None and time > self.last_time:
            self.out.write(f"#{time}\n")
            self.last_time = time


def write_vcd(trace: Trace) -> str:
    """Serialize a trace back to VCD text (supported subset only)."""
    buf = io.StringIO()
    writer = VcdWriter(buf, trace.timescale)
    ident_map = {}
    for name, info in trace.signals.items():
        parts = name.split(".")
        if info.ident in ident_map:
            continue
        ident_map[info.ident] = writer.declare(tuple(parts[:-1]), parts[-1], info.width, info.var_type)
    events: dict[int, list[tuple[str, str, int]]] = {}
    for ident, hist in trace.changes.items():
        if ident not in ident_map:
            continue
        width = next(s.width for s in trace.signals.values() if s.ident == ident)
        for t, v in hist:
            events.setdefault(t, []).append((ident_map[ident], v, width))
    times = sorted(events)
    first = times[0] if times else 0
    writer.start(first, {i: v for i, v, _ in events.get(first, [])})
    for t in times[1:]:
        writer.emit(t, events[t])
    writer.finish(trace.end_time)
    return buf.getvalue()


# --------------------------------------------------------------------------
# comparison
# --------------------------------------------------------------------------
def clock_edges(trace: Trace, clock: str, edge: str = "rising") -> list[int]:
    full = trace.resolve(clock)
    if full is None:
        raise ClockNotFound(clock)
    hist = trace.changes.get(trace.signals[full].ident, [])
    target = "1" if edge == "rising" else "0"
    out = []
    prev: Optional[str] = None
    for t, v in hist:
        bit = v[-1]
        if prev is not None and bit == target and prev != target:
            out.append(t)
        prev = bit
    return out


def sample(hist: list[tuple[int, str]], times: list[int], width: int) -> list[str]:
    """Value of a signal just before each time in ``times``."""
    stamps = [t for t, _ in hist]
    out = []
    for t in times:
        idx = bisect.bisect_left(stamps, t) - 1
        out.append(hist[idx][1] if idx >= 0 else "x" * width)
    return out


def values_match(expected: str, actual: str) -> bool:
    """Golden x bits are don't-care; every other bit must be identical."""
    if len(actual) != len(expected):
        actual = _normalize(actual, len(expected)) if actual else "x" * len(expected)
    return all(e == "x" or e == a for e, a in zip(expected, actual))


def _sampled(trace: Trace, name: str, times: list[int], width: int) -> list[str]:
    full = trace.resolve(name)
    if full is None:
        return ["x" * width] * len(times)
    info = trace.signals[full]
    vals = sample(trace.changes.get(info.ident, []), times, info.width)
    if info.width != width:
        vals = [_normalize(v, width) for v in vals]
    return vals


def compare_traces(actual: Trace, golden: Trace, signals: Optional[list[str]] = None,
                   clock: str = "clk", edge: str = "rising",
                   max_mismatches: Optional[int] = None) -> list[Mismatch]:
    """Clock-sampled comparison of ``actual`` against ``golden``.

    Both traces are sampled just before each of their own clock edges and
    compared cycle by cycle.  A signal missing from ``actual`` reads all-x.
    If one trace has more edges than the other, one :data:`TRUNCATED`
    pseudo-mismatch marks the first cycle only one side reached.
    """
    golden_edges = clock_edges(golden, clock, edge)
    actual_edges = clock_edges(actual, clock, edge)
    if signals is None:
        clk_full = golden.resolve(clock)
        signals = sorted(n for n in golden.signals if n != clk_full)
    names = []
    for s in signals:
        full = golden.resolve(s)
        if full is None:
            raise SignalNotFound(s)
        names.append((s, full))
    names.sort()
    ncycles = min(len(golden_edges), len(actual_edges))
    expected_vals = {}
    actual_vals = {}
    for s, full in names:
        width = golden.signals[full].width
        expected_vals[s] = _sampled(golden, full, golden_edges[:ncycles], width)
        actual_vals[s] = _sampled(actual, s, actual_edges[:ncycles], width)
    out: list[Mismatch] = []
    for cycle in range(ncycles):
        for s, _ in names:
            e, a = expected_vals[s][cycle], actual_vals[s][cycle]
            if not values_match(e, a):
                out.append(Mismatch(s, cycle, golden_edges[cycle], e, a))
                if max_mismatches is not None and len(out) >= max_mismatches:
                    return out
    if len(golden_edges) != len(actual_edges):
        longer = golden_edges if len(golden_edges) > len(actual_edges) else actual_edges
        out.append(Mismatch(TRUNCATED, ncycles, longer[ncycles],
                            f"{len(golden_edges)} cycles", f"{len(actual_edges)} cycles"))
    if max_mismatches is not None:
        out = out[:max_mismatches]
    return out


def mismatch_summary(mismatches: list[Mismatch], max_signals: int = 5) -> str:
    """First divergence per signal for the first ``max_signals`` signals."""
    if not mismatches:
        return "No waveform mismatches against the golden reference."
    first: dict[str, Mismatch] = {}
    for m in mismatches:
        first.setdefault(m.signal, m)
    rows = sorted(first.values(), key=lambda m: (m.cycle, m.signal))[:max_signals]
    lines = ["Waveform mismatches against the golden reference (first divergence per signal):"]
    for m in rows:
        if m.signal == TRUNCATED:
            lines.append(f"  trace length differs at cycle {m.cycle}: expected {m.expected}, got {m.actual}")
        else:
            lines.append(f"  signal {m.signal} first differs at cycle {m.cycle}: "
                         f"expected {m.expected}, actual {m.actual}")
    return "\n".join(lines)


# --------------------------------------------------------------------------
# windows
# --------------------------------------------------------------------------
def format_value(value: str) -> str:
    if len(value) <= 8:
        return value
    pad = (-len(value)) % 4
    value = value[0] * pad + value if value[0] in "xz" else "0" * pad + value
    digits = []
    for i in range(0, len(value), 4):
        nib = value[i:i + 4]
        if "x" in nib:
            digits.append("x")
        elif "z" in nib:
            digits.append("z")
        else:
            digits.append(format(int(nib, 2), "x"))
    return "h" + "".join(digits)


def render_window(actual: Trace, golden: Trace, signals: list[str], center_cycle: int,
                  radius: int, clock: str = "clk", edge: str = "rising") -> str:
    """Table of sampled values for cycles ``center ± radius`` (clamped), one
    row per signal per source.  Cells that differ carry a trailing ``*``."""
    if radius < 0:
        raise ValueError("radius must be non-negative")
    golden_edges = clock_edges(golden, clock, edge)
    actual_edges = clock_edges(actual, clock, edge)
    last = max(len(golden_edges), len(actual_edges)) - 1
    lo = max(0, center_cycle - radius)
    hi = min(last, center_cycle + radius)
    cycles = list(range(lo, hi + 1)) if hi >= lo else []
    rows: list[list[str]] = [["cycle"] + [str(c) for c in cycles]]
    for s in signals:
        full = golden.resolve(s)
        width = golden.signals[full].width if full else actual.width(s)
        g_times = [golden_edges[c] for c in cycles if c < len(golden_edges)]
        a_times = [actual_edges[c] for c in cycles if c < len(actual_edges)]
        g_vals = _sampled(golden, s, g_times, width) if full else []
        a_vals = _sampled(actual, s, a_times, width)
        g_row = [f"{s} (golden)"]
        a_row = [f"{s} (actual)"]
        for i, _ in enumerate(cycles):
            g = g_vals[i] if i < len(g_vals) else None
            a = a_vals[i] if i < len(a_vals) else None
            differ = g is None or a is None or not values_match(g, a)
            flag = FLAG if differ else ""
            a_row.append((format_value(a) if a is not None else "-") + flag)
            g_row.append((format_value(g) if g is not None else "-") + flag)
        rows.append(a_row)
        rows.append(g_row)
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    return "\n".join("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(r)).rstrip() for r in rows)
