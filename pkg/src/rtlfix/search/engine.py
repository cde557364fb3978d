"""Stochastic tree search over (code branch, chat history) states.

Each iteration samples a stored state by softmax over scores, applies the
freshness penalty, checks the state out, expands it through one agent step,
and either returns the fixed child or stores it and restores the sampled
state's score.
"""
from __future__ import annotations

import random
import threading
from concurrent.futures import FIRST_COMPLETED, Future, ThreadPoolExecutor, wait
from dataclasses import dataclass, field
from typing import Any, Callable, Optional, Protocol, Sequence

from ..llm import BudgetExceeded, ChatMessage
from .heuristic import HeuristicConfig, StateCounters, heuristic, sample_index


@dataclass
class SearchState:
    id: int
    parent: Optional[int]
    branch: Any  # CodeBranch, or any token in stubbed environments
    history: tuple[ChatMessage, ...]
    counters: StateCounters
    f: float  # heuristic value
    score: float  # stored score, f minus any pending freshness penalty
    depth: int = 0
    patches: tuple = ()  # patches on the edge from the parent
    penalized: bool = False
    info: dict = field(default_factory=dict)


@dataclass
class Expansion:
    branch: Any
    history: tuple[ChatMessage, ...]
    counters: StateCounters
    patches: tuple = ()
    info: dict = field(default_factory=dict)


@dataclass
class Outcome:
    kind: str  # fixed | exhausted
    state: Optional[SearchState]
    patches: list = field(default_factory=list)
    expansions: int = 0
    states: list[SearchState] = field(default_factory=list)
    reason: str = ""

    @property
    def fixed(self) -> bool:
        return self.kind == "fixed"


class Budget(Protocol):
    def exhausted(self) -> bool:
        ...


class Environment(Protocol):
    """What the search needs from the outside world."""

    def checkout(self, state: SearchState) -> Any:
        ...

    def expand(self, state: SearchState, checkout: Any) -> Expansion:
        ...

    def is_fixed(self, state: SearchState) -> bool:
        ...


class SearchEngine:
    def __init__(self, env: Environment, budget: Budget, cfg: HeuristicConfig = HeuristicConfig(),
                 rng: Optional[random.Random] = None, workers: int = 1,
                 trace: Optional[Callable[..., None]] = None,
                 log: Optional[Callable[[dict], None]] = None,
                 max_expansions: Optional[int] = None):
        if workers < 1:
            raise ValueError("workers must be >= 1")
        self.env = env
        self.budget = budget
        self.cfg = cfg
        self.rng = rng or random.Random(0)
        self.workers = workers
        self._trace = trace
        self._log = log
        self.max_expansions = max_expansions
        self.states: list[SearchState] = []
        self.expansions = 0
        self.in_flight: dict[int, int] = {}
        self.stop = threading.Event()

    # -- helpers -----------------------------------------------------------
    def trace(self, event: str, **data) -> None:
        if self._trace is not None:
            self._trace(event, **data)

    def log(self, record: dict) -> None:
        if self._log is not None:
            self._log(record)

    def score_of(self, counters: StateCounters) -> float:
        return heuristic(counters, self.cfg)

    def new_state(self, parent: Optional[SearchState], exp: Expansion) -> SearchState:
        f = self.score_of(exp.counters)
        return SearchState(len(self.states), parent.id if parent else None, exp.branch, exp.history,
                           exp.counters, f, f, parent.depth + 1 if parent else 0, tuple(exp.patches),
                           info=dict(exp.info))

    def add_roots(self, roots: Sequence[SearchState]) -> None:
        for r in roots:
            if r.id != len(self.states) or r.parent is not None:
                raise ValueError("roots must be numbered 0..n-1 and have no parent")
            self.states.append(r)

    def add_root(self, branch: Any, history: Sequence[ChatMessage], counters: StateCounters,
                 info: Optional[dict] = None) -> SearchState:
        s = self.new_state(None, Expansion(branch, tuple(history), counters, (), info or {}))
        self.states.append(s)
        return s

    def lineage(self, state: SearchState) -> list[SearchState]:
        chain = [state]
        while chain[-1].parent is not None:
            chain.append(self.states[chain[-1].parent])
        return chain[::-1]

    def patch_set(self, state: SearchState) -> list:
        return [p for s in self.lineage(state) for p in s.patches]

    def best(self) -> Optional[SearchState]:
        if not self.states:
            return None
        return max(self.states, key=lambda s: (s.f, -s.id))

    def guard(self) -> bool:
        """True while the search may start another expansion."""
        if self.stop.is_set() or self.budget.exhausted():
            return False
        return self.max_expansions is None or self.expansions < self.max_expansions

    def _sample(self) -> tuple[SearchState, float]:
        i, p = sample_index([s.score for s in self.states], self.rng)
        return self.states[i], p

    def _penalize(self, s: SearchState) -> None:
        self.in_flight[s.id] = self.in_flight.get(s.id, 0) + 1
        s.score -= self.cfg.freshness_penalty
        s.penalized = True
        self.trace("penalize", state=s.id, score=s.score)

    def _restore(self, s: SearchState) -> None:
        self.in_flight[s.id] -= 1
        if self.in_flight[s.id] == 0:
            del self.in_flight[s.id]
        if self.cfg.cumulative_freshness:
            return
        s.score = s.f - self.cfg.freshness_penalty * self.in_flight.get(s.id, 0)
        s.penalized = s.id in self.in_flight
        self.trace("restore", state=s.id, score=s.score)

    def _finish(self, s: SearchState, prob: float, exp: Expansion) -> Optional[Outcome]:
        """Handle a completed expansion of ``s``; returns an Outcome when fixed."""
        self.expansions += 1
        child = self.new_state(s, exp)
        fixed = self.env.is_fixed(child)
        record = {"expansion": self.expansions, "parent": s.id, "child": child.id,
                  "counters": child.counters.to_dict(), "score": child.f, "probability": prob,
                  "outcome": "fixed" if fixed else "stored", **exp.info}
        if fixed:
            self.states.append(child)
            self.trace("fixed", state=child.id, parent=s.id)
            self.log(record)
            self.stop.set()
            return Outcome("fixed", child, self.patch_set(child), self.expansions, self.states)
        self.states.append(child)
        self.trace("insert", state=child.id, parent=s.id, score=child.f)
        self.log(record)
        self._restore(s)
        return None

    def _abandon(self, s: SearchState, reason: str) -> None:
        self.log({"expansion": None, "parent": s.id, "child": None, "outcome": reason})
        self.in_flight[s.id] -= 1
        if self.in_flight[s.id] == 0:
            del self.in_flight[s.id]
        if not self.cfg.cumulative_freshness:
            s.score = s.f - self.cfg.freshness_penalty * self.in_flight.get(s.id, 0)
            s.penalized = s.id in self.in_flight

    def _exhausted(self, reason: str) -> Outcome:
        return Outcome("exhausted", self.best(), [], self.expansions, self.states, reason)

    # -- main loop ---------------------------------------------------------
    def run(self) -> Outcome:
        if not self.states:
            raise ValueError("search needs at least one root state")
        if self.workers == 1:
            return self._run_sequential()
        return self._run_parallel()

    def _run_sequential(self) -> Outcome:
        while self.guard():
            s, prob = self._sample()
            self.trace("sample", state=s.id, probability=prob)
            self._penalize(s)
            co = self.env.checkout(s)
            self.trace("checkout", state=s.id)
            try:
                exp = self.env.expand(s, co)
            except BudgetExceeded as exc:
                self._abandon(s, "budget")
                return self._exhausted(str(exc))
            self.trace("expand", state=s.id)
            out = self._finish(s, prob, exp)
            if out is not None:
                return out
        return self._exhausted("budget" if self.budget.exhausted() else "limit")

    def _run_parallel(self) -> Outcome:
        lock = threading.Lock()
        running: dict[Future, tuple[SearchState, float]] = {}
        reason = ""
        result: Optional[Outcome] = None
        with ThreadPoolExecutor(max_workers=self.workers) as pool:
            try:
                while True:
                    with lock:
                        while len(running) < self.workers and self.guard() and not reason:
                            s, prob = self._sample()
                            self.trace("sample", state=s.id, probability=prob)
                            self._penalize(s)
                            co = self.env.checkout(s)
                            self.trace("checkout", state=s.id)
                            running[pool.submit(self.env.expand, s, co)] = (s, prob)
                    if not running:
                        break
                    done, _ = wait(list(running), return_when=FIRST_COMPLETED)
                    for fut in done:
                        s, prob = running.pop(fut)
                        try:
                            exp = fut.result()
                        except BudgetExceeded as exc:
                            self._abandon(s, "budget")
                            reason = reason or str(exc)
                            continue
                        except Exception:  # noqa: BLE001 - cancellation or worker failure
                            self._abandon(s, "cancelled")
                            if self.stop.is_set():
                                continue
                            raise
                        self.trace("expand", state=s.id)
                        if self.stop.is_set():
                            continue  # another worker already found a fix
                        out = self._finish(s, prob, exp)
                        if out is not None:
                            self.stop.set()
                            result = out
                            reason = "fixed"
                    if result is not None:
                        for fut in running:
                            fut.cancel()
                        wait(list(running))
                        return result
            finally:
                self.stop.set()
        return self._exhausted(reason or ("budget" if self.budget.exhausted() else "limit"))
