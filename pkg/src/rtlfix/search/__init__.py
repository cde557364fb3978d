"""Patch search: scoring, sampling, the agent step and the tree search."""
from .agent import AgentContext, StepResult, agent_step
from .engine import Expansion, Outcome, SearchEngine, SearchState
from .forest import AgentEnvironment, make_roots
from .heuristic import HeuristicConfig, StateCounters, heuristic, sample_state, softmax_probs

__all__ = ["AgentContext", "StepResult", "agent_step", "Expansion", "Outcome", "SearchEngine",
           "SearchState", "AgentEnvironment", "make_roots", "HeuristicConfig", "StateCounters",
           "heuristic", "sample_state", "softmax_probs"]
