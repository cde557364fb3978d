"""State scoring and softmax state sampling."""
from __future__ import annotations

import math
import random
from dataclasses import asdict, dataclass
from typing import Sequence

DEFAULT_LAMBDAS = (4.0, 0.1, 0.5, 0.3, 0.5, 0.2)


@dataclass(frozen=True)
class StateCounters:
    tb_passed: int = 0
    tb_total: int = 0
    queries: int = 0
    unsolved_compile_errors: int = 0
    tokens_used: int = 0
    illegal_invocations: int = 0
    total_invocations: int = 0
    patches_applied: int = 0

    def __post_init__(self):
        for name, value in asdict(self).items():
            if value < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.tb_passed > self.tb_total:
            raise ValueError("tb_passed exceeds tb_total")
        if self.illegal_invocations > self.total_invocations:
            raise ValueError("illegal_invocations exceeds total_invocations")

    @property
    def unusable_rate(self) -> float:
        if self.total_invocations == 0:
            return 0.0
        return self.illegal_invocations / self.total_invocations

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class HeuristicConfig:
    lambdas: tuple[float, float, float, float, float, float] = DEFAULT_LAMBDAS
    b: float = 1.0
    freshness_penalty: float = 0.5
    token_unit: float = 100_000.0
    cumulative_freshness: bool = False

    def __post_init__(self):
        if len(self.lambdas) != 6:
            raise ValueError("exactly six lambda coefficients are needed")
        if any(x < 0 for x in self.lambdas):
            raise ValueError("lambda coefficients must be non-negative")
        if self.freshness_penalty < 0:
            raise ValueError("freshness_penalty must be non-negative")
        if self.token_unit <= 0:
            raise ValueError("token_unit must be positive")

    @classmethod
    def from_dict(cls, data: dict) -> "HeuristicConfig":
        data = dict(data)
        if "lambdas" in data:
            data["lambdas"] = tuple(float(x) for x in data["lambdas"])
        return cls(**data)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["lambdas"] = list(self.lambdas)
        return out


def heuristic(c: StateCounters, cfg: HeuristicConfig = HeuristicConfig()) -> float:
    l1, l2, l3, l4, l5, l6 = cfg.lambdas
    ratio = c.tb_passed / c.tb_total if c.tb_total else 0.0
    return (l1 * ratio
            + l2 * c.queries
            - l3 * c.unsolved_compile_errors
            - l4 * (c.tokens_used / cfg.token_unit)
            - l5 * c.unusable_rate
            - l6 * c.patches_applied
            + cfg.b)


def softmax_probs(scores: Sequence[float]) -> list[float]:
    if not scores:
        raise ValueError("no scores")
    top = max(scores)
    weights = [math.exp(s - top) for s in scores]
    total = math.fsum(weights)
    return [w / total for w in weights]


def sample_index(scores: Sequence[float], rng: random.Random) -> tuple[int, float]:
    """Index drawn with probability proportional to exp(score), and that probability."""
    probs = softmax_probs(scores)
    if len(probs) == 1:
        return 0, 1.0
    u = rng.random()
    acc = 0.0
    for i, p in enumerate(probs):
        acc += p
        if u < acc:
            return i, p
    return len(probs) - 1, probs[-1]


def sample_state(states: Sequence, rng: random.Random, key=lambda s: s.score):
    """Draw one of ``states`` by softmax over ``key(state)``."""
    if not states:
        raise ValueError("no states to sample")
    i, _ = sample_index([key(s) for s in states], rng)
    return states[i]


__all__ = ["StateCounters", "HeuristicConfig", "heuristic", "softmax_probs", "sample_index",
           "sample_state", "DEFAULT_LAMBDAS"]
