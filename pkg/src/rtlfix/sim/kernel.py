"""Event-driven scheduler for the bundled simulator.

Time advances in integer ticks.  Each timestep drains the active queue, then
the inactive (``#0``) queue, then applies non-blocking updates, repeating
until all three are empty; value changes are dumped at the end of the step.
"""
from __future__ import annotations

import heapq
import itertools
from collections import deque
from typing import Callable, Iterator, Optional

from .values import Vec, resolve_wire

MAX_EVENTS_PER_STEP = 2_000_000


class Finish(Exception):
    """Raised by ``$finish`` to stop the simulation."""


class SimulationError(Exception):
    pass


class Signal:
    __slots__ = ("name", "scope", "width", "msb", "lsb", "signed", "is_net", "kind", "value",
                 "words", "arr_lo", "arr_hi", "waiters", "listeners", "drivers", "vcd_id",
                 "line", "file")

    def __init__(self, name: str, scope: tuple[str, ...], width: int, msb: int = 0, lsb: int = 0,
                 signed: bool = False, is_net: bool = False, kind: str = "reg",
                 array: Optional[tuple[int, int]] = None, file: str = "", line: int = 0):
        self.name = name
        self.scope = scope
        self.width = width
        self.msb = msb
        self.lsb = lsb
        self.signed = signed
        self.is_net = is_net
        self.kind = kind
        self.file = file
        self.line = line
        self.value = Vec.zz(width) if is_net else Vec.x(width)
        if kind == "supply0":
            self.value = Vec(width, 0)
        elif kind == "supply1":
            self.value = Vec(width, (1 << width) - 1)
        self.words: Optional[dict[int, Vec]] = None
        self.arr_lo = self.arr_hi = 0
        if array is not None:
            self.arr_lo, self.arr_hi = min(array), max(array)
            self.words = {}
        self.waiters: list["Waiter"] = []
        self.listeners: list["Listener"] = []
        self.drivers: list["Driver"] = []
        self.vcd_id: Optional[str] = None

    @property
    def full_name(self) -> str:
        return ".".join(self.scope + (self.name,))

    def offset(self, index: int) -> int:
        """Bit offset (from the LSB) of declared index ``index``."""
        return index - self.lsb if self.msb >= self.lsb else self.lsb - index

    def word(self, index: Optional[int]) -> Vec:
        if index is None or self.words is None or not self.arr_lo <= index <= self.arr_hi:
            return Vec.x(self.width)
        return self.words.get(index) or Vec.x(self.width)


class Driver:
    """One continuous driver of a net: the bits it drives and their value."""

    __slots__ = ("value", "mask")

    def __init__(self, width: int):
        self.value = Vec.zz(width)
        self.mask = 0


class Listener:
    """A continuous assignment re-evaluated when any input changes."""

    __slots__ = ("fn", "queued")

    def __init__(self, fn: Callable[[], None]):
        self.fn = fn
        self.queued = False


class Waiter:
    """A process blocked on an event control."""

    __slots__ = ("process", "items", "active")

    def __init__(self, process: "Process", items: list):
        self.process = process
        # each item: [eval_fn, deps, edge, last_value]
        self.items = items
        self.active = True


def edge_hit(edge: Optional[str], old: Vec, new: Vec) -> bool:
    if edge is None:
        return not old.same_bits(new)
    o, n = old.bit(0), new.bit(0)
    if edge == "posedge":
        return (o == "0" and n != "0") or (o in "xz" and n == "1")
    return (o == "1" and n != "1") or (o in "xz" and n == "0")


class Process:
    __slots__ = ("kernel", "gen", "name", "done")

    def __init__(self, kernel: "Kernel", gen: Iterator, name: str = ""):
        self.kernel = kernel
        self.gen = gen
        self.name = name
        self.done = False

    def resume(self) -> None:
        try:
            cmd = next(self.gen)
        except StopIteration:
            self.done = True
            return
        kind = cmd[0]
        if kind == "delay":
            self.kernel.schedule(cmd[1], self.resume)
        elif kind == "event":
            self.kernel.wait(self, cmd[1])
        else:
            raise SimulationError(f"bad scheduler command {cmd!r}")


class Kernel:
    def __init__(self):
        self.time = 0
        self.active: deque[Callable[[], None]] = deque()
        self.inactive: list[Callable[[], None]] = []
        self.nba: list[Callable[[], None]] = []
        self.future: list[tuple[int, int, Callable[[], None]]] = []
        self._seq = itertools.count()
        self.dirty: set[Signal] = set()
        self.end_of_step: list[Callable[[], None]] = []
        self.events_this_step = 0
        self.finished = False

    # ------------------------------------------------------------- scheduling
    def schedule(self, delay: int, fn: Callable[[], None]) -> None:
        if delay <= 0:
            self.inactive.append(fn)
        else:
            heapq.heappush(self.future, (self.time + delay, next(self._seq), fn))

    def schedule_nba(self, delay: int, fn: Callable[[], None]) -> None:
        if delay <= 0:
            self.nba.append(fn)
        else:
            heapq.heappush(self.future, (self.time + delay, next(self._seq), lambda: self.nba.append(fn)))

    def wait(self, process: Process, events: list) -> None:
        items = []
        for eval_fn, deps, edge in events:
            items.append([eval_fn, deps, edge, eval_fn()])
        waiter = Waiter(process, items)
        for item in items:
            for sig in item[1]:
                sig.waiters.append(waiter)

    # ---------------------------------------------------------------- updates
    def set_value(self, sig: Signal, new: Vec) -> None:
        old = sig.value
        if old.same_bits(new):
            return
        sig.value = new
        self._changed(sig)

    def set_word(self, sig: Signal, index: Optional[int], new: Vec) -> None:
        if index is None or sig.words is None or not sig.arr_lo <= index <= sig.arr_hi:
            return
        old = sig.words.get(index)
        if old is not None and old.same_bits(new):
            return
        sig.words[index] = new
        # arrays carry a version stamp in ``value`` so event controls see writes
        sig.value = Vec(32, (sig.value.val + 1) & 0xFFFFFFFF)
        self._changed(sig)

    def drive(self, sig: Signal, driver: Driver, value: Vec, mask: int) -> None:
        driver.value = value
        driver.mask = mask
        full = (1 << sig.width) - 1
        if len(sig.drivers) == 1 and mask == full:
            resolved = value
        else:
            resolved = resolve_wire([(d.value, d.mask) for d in sig.drivers], sig.width)
        self.set_value(sig, resolved)

    def _changed(self, sig: Signal) -> None:
        if sig.vcd_id is not None:
            self.dirty.add(sig)
        if sig.waiters:
            keep = []
            for w in sig.waiters:
                if not w.active:
                    continue
                fired = False
                for item in w.items:
                    if sig in item[1]:
                        new = item[0]()
                        if edge_hit(item[2], item[3], new):
                            fired = True
                        item[3] = new
                if fired:
                    w.active = False
                    self.active.append(w.process.resume)
                else:
                    keep.append(w)
            sig.waiters = keep
        for lst in sig.listeners:
            if not lst.queued:
                lst.queued = True
                self.active.append(lambda lst=lst: self._run_listener(lst))

    def _run_listener(self, lst: Listener) -> None:
        lst.queued = False
        lst.fn()

    def trigger(self, lst: Listener) -> None:
        if not lst.queued:
            lst.queued = True
            self.active.append(lambda: self._run_listener(lst))

    # -------------------------------------------------------------- main loop
    def _drain(self) -> None:
        while True:
            while self.active:
                self.events_this_step += 1
                if self.events_this_step > MAX_EVENTS_PER_STEP:
                    raise SimulationError(
                        f"no convergence at time {self.time}: combinational loop or zero-delay oscillation")
                self.active.popleft()()
            if self.inactive:
                self.active.extend(self.inactive)
                self.inactive = []
                continue
            if self.nba:
                batch, self.nba = self.nba, []
                for fn in batch:
                    fn()
                continue
            return

    def run(self, max_time: Optional[int] = None) -> None:
        try:
            while True:
                self.events_this_step = 0
                try:
                    self._drain()
                finally:
                    for fn in self.end_of_step:
                        fn()
                if not self.future:
                    return
                t = self.future[0][0]
                if max_time is not None and t > max_time:
                    self.time = max_time
                    return
                self.time = t
                while self.future and self.future[0][0] == t:
                    self.active.append(heapq.heappop(self.future)[2])
        except Finish:
            self.finished = True
