"""Chat-with-tools gateway: message types, a scripted playback backend, an
OpenAI-compatible HTTP backend and token/wall-clock budget accounting."""
from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional, Protocol, Sequence, Union

import httpx
import yaml

API_KEY_ENV = "R3A_API_KEY"
ROLES = ("system", "user", "assistant", "tool")


class BackendUnavailable(Exception):
    pass


class ScriptExhausted(Exception):
    pass


class ScriptMismatch(Exception):
    """A scripted entry's guard did not match the conversation."""


class BudgetExceeded(Exception):
    pass


# --------------------------------------------------------------------------
# messages
# --------------------------------------------------------------------------
@dataclass(frozen=True)
class ToolCall:
    id: str
    name: str
    arguments: str  # raw JSON text exactly as the model produced it

    def to_wire(self) -> dict:
        return {"id": self.id, "type": "function",
                "function": {"name": self.name, "arguments": self.arguments}}


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str = ""
    tool_calls: tuple[ToolCall, ...] = ()
    tool_call_id: Optional[str] = None

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}")
        if self.role == "tool" and not self.tool_call_id:
            raise ValueError("tool messages need a tool_call_id")

    def to_wire(self) -> dict:
        out: dict[str, Any] = {"role": self.role, "content": self.content}
        if self.tool_calls:
            out["tool_calls"] = [c.to_wire() for c in self.tool_calls]
        if self.tool_call_id is not None:
            out["tool_call_id"] = self.tool_call_id
        return out

    @classmethod
    def from_wire(cls, data: dict) -> "ChatMessage":
        calls = []
        for c in data.get("tool_calls") or []:
            fn = c.get("function") or {}
            args = fn.get("arguments", "")
            if not isinstance(args, str):
                args = json.dumps(args)
            calls.append(ToolCall(str(c.get("id", "")), str(fn.get("name", "")), args))
        return cls(data.get("role", "assistant"), data.get("content") or "", tuple(calls),
                   data.get("tool_call_id"))


def system(text: str) -> ChatMessage:
    return ChatMessage("system", text)


def user(text: str) -> ChatMessage:
    return ChatMessage("user", text)


def tool_result(call_id: str, text: str) -> ChatMessage:
    return ChatMessage("tool", text, tool_call_id=call_id)


@dataclass(frozen=True)
class TokenUsage:
    prompt_tokens: int = 0
    completion_tokens: int = 0

    def __post_init__(self):
        if self.prompt_tokens < 0 or self.completion_tokens < 0:
            raise ValueError("token counts must be non-negative")

    @property
    def total(self) -> int:
        return self.prompt_tokens + self.completion_tokens

    def __add__(self, other: "TokenUsage") -> "TokenUsage":
        return TokenUsage(self.prompt_tokens + other.prompt_tokens,
                          self.completion_tokens + other.completion_tokens)


@dataclass(frozen=True)
class ToolParam:
    name: str
    type: str  # JSON schema type tag
    required: bool = True
    description: str = ""
    enum: Optional[tuple] = None
    minimum: Optional[int] = None
    min_length: Optional[int] = None
    items: Optional[str] = None  # element type tag for arrays


@dataclass(frozen=True)
class ToolSchema:
    name: str
    description: str
    params: tuple[ToolParam, ...] = ()

    def json_schema(self) -> dict:
        props = {}
        for p in self.params:
            spec: dict[str, Any] = {"type": p.type, "description": p.description}
            if p.enum is not None:
                spec["enum"] = list(p.enum)
            if p.minimum is not None:
                spec["minimum"] = p.minimum
            if p.min_length is not None:
                spec["minLength"] = p.min_length
            if p.items is not None:
                spec["items"] = {"type": p.items}
            props[p.name] = spec
        return {"type": "object", "properties": props,
                "required": [p.name for p in self.params if p.required],
                "additionalProperties": False}

    def to_wire(self) -> dict:
        return {"type": "function",
                "function": {"name": self.name, "description": self.description,
                             "parameters": self.json_schema()}}


def check_unique(tools: Sequence[ToolSchema]) -> None:
    names = [t.name for t in tools]
    if len(set(names)) != len(names):
        raise ValueError("tool names must be unique")


@dataclass
class ChatParams:
    model: str = "deepseek-chat"
    temperature: float = 0.7
    seed: Optional[int] = None
    max_tokens: Optional[int] = None


class ChatBackend(Protocol):
    def chat(self, history: Sequence[ChatMessage], tools: Sequence[ToolSchema],
             params: ChatParams) -> tuple[ChatMessage, TokenUsage]:
        ...


def _check_history(history: Sequence[ChatMessage]) -> None:
    if not history:
        raise ValueError("history must not be empty")
    if history[0].role != "system":
        raise ValueError("the first message must be the system prompt")


# --------------------------------------------------------------------------
# scripted backend
# --------------------------------------------------------------------------
@dataclass
class ScriptEntry:
    reply: str = ""
    tool_calls: tuple[ToolCall, ...] = ()
    usage: TokenUsage = field(default_factory=TokenUsage)
    guard: Optional[str] = None
    delay: float = 0.0


def _parse_usage(raw) -> TokenUsage:
    if raw is None:
        return TokenUsage()
    if isinstance(raw, (list, tuple)):
        return TokenUsage(int(raw[0]), int(raw[1]) if len(raw) > 1 else 0)
    if isinstance(raw, dict):
        return TokenUsage(int(raw.get("prompt", raw.get("prompt_tokens", 0))),
                          int(raw.get("completion", raw.get("completion_tokens", 0))))
    raise ValueError(f"bad usage {raw!r}")


def parse_script(data: Union[str, list, dict]) -> list[ScriptEntry]:
    """Script entries from YAML text or already-loaded data."""
    if isinstance(data, str):
        data = yaml.safe_load(data)
    if isinstance(data, dict):
        data = data.get("entries", [])
    if not isinstance(data, list):
        raise ValueError("a script is a list of entries")
    out = []
    for n, raw in enumerate(data):
        if not isinstance(raw, dict):
            raise ValueError(f"script entry {n} is not a mapping")
        calls = []
        for k, c in enumerate(raw.get("tool_calls") or []):
            args = c.get("arguments", {})
            if not isinstance(args, str):
                args = json.dumps(args)
            calls.append(ToolCall(str(c.get("id", f"call_{n}_{k}")), str(c["name"]), args))
        out.append(ScriptEntry(str(raw.get("reply", "") or ""), tuple(calls),
                               _parse_usage(raw.get("usage")), raw.get("guard"),
                               float(raw.get("delay", 0.0))))
    return out


class ScriptedBackend:
    """Plays back script entries strictly in order, one per chat call."""

    def __init__(self, entries: Sequence[ScriptEntry], sleep: Callable[[float], None] = time.sleep):
        self.entries = list(entries)
        self.position = 0
        self.calls: list[list[ChatMessage]] = []
        self.sleep = sleep
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, path: Union[str, Path], **kw) -> "ScriptedBackend":
        return cls(parse_script(Path(path).read_text(encoding="utf-8")), **kw)

    @classmethod
    def from_text(cls, text: str, **kw) -> "ScriptedBackend":
        return cls(parse_script(text), **kw)

    def chat(self, history: Sequence[ChatMessage], tools: Sequence[ToolSchema] = (),
             params: Optional[ChatParams] = None) -> tuple[ChatMessage, TokenUsage]:
        _check_history(history)
        with self._lock:
            if self.position >= len(self.entries):
                raise ScriptExhausted(f"script has only {len(self.entries)} entries")
            entry = self.entries[self.position]
            self.position += 1
            self.calls.append(list(history))
        if entry.guard is not None:
            last = next((m.content for m in reversed(history) if m.role in ("user", "tool")), "")
            if entry.guard not in last:
                raise ScriptMismatch(
                    f"script entry {self.position} expects {entry.guard!r} in the last user/tool message")
        if entry.delay:
            self.sleep(entry.delay)
        return ChatMessage("assistant", entry.reply, entry.tool_calls), entry.usage


# --------------------------------------------------------------------------
# OpenAI-compatible backend
# --------------------------------------------------------------------------
class OpenAICompatibleBackend:
    """Chat-completions client.  Transport errors, 429 and 5xx responses are
    retried (``attempts`` total, backoff doubling from ``backoff`` seconds)."""

    def __init__(self, endpoint: str, model: Optional[str] = None, api_key: Optional[str] = None,
                 client: Optional[httpx.Client] = None, attempts: int = 3, backoff: float = 1.0,
                 timeout: float = 300.0, sleep: Callable[[float], None] = time.sleep):
        url = endpoint.rstrip("/")
        if not url.endswith("/chat/completions"):
            url += "/chat/completions"
        self.url = url
        self.model = model
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV, "")
        self.client = client or httpx.Client(timeout=timeout)
        self.attempts = attempts
        self.backoff = backoff
        self.sleep = sleep

    def request_body(self, history: Sequence[ChatMessage], tools: Sequence[ToolSchema],
                     params: ChatParams) -> dict:
        body: dict[str, Any] = {"model": self.model or params.model,
                                "messages": [m.to_wire() for m in history],
                                "temperature": params.temperature}
        if tools:
            body["tools"] = [t.to_wire() for t in tools]
        if params.seed is not None:
            body["seed"] = params.seed
        if params.max_tokens is not None:
            body["max_tokens"] = params.max_tokens
        return body

    @staticmethod
    def parse_response(data: dict) -> tuple[ChatMessage, TokenUsage]:
        try:
            msg = data["choices"][0]["message"]
        except (KeyError, IndexError, TypeError) as exc:
            raise BackendUnavailable(f"malformed response: {exc}") from None
        reply = ChatMessage.from_wire({**msg, "role": "assistant"})
        usage = data.get("usage") or {}
        return reply, TokenUsage(int(usage.get("prompt_tokens", 0) or 0),
                                 int(usage.get("completion_tokens", 0) or 0))

    def chat(self, history: Sequence[ChatMessage], tools: Sequence[ToolSchema] = (),
             params: Optional[ChatParams] = None) -> tuple[ChatMessage, TokenUsage]:
        _check_history(history)
        params = params or ChatParams()
        body = self.request_body(history, tools, params)
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        last_error = ""
        for attempt in range(self.attempts):
            if attempt:
                self.sleep(self.backoff * 2 ** (attempt - 1))
            try:
                resp = self.client.post(self.url, json=body, headers=headers)
            except httpx.TransportError as exc:
                last_error = f"transport error: {exc}"
                continue
            if resp.status_code == 429 or resp.status_code >= 500:
                last_error = f"HTTP {resp.status_code}"
                continue
            if resp.status_code >= 400:
                raise BackendUnavailable(f"HTTP {resp.status_code}: {resp.text[:200]}")
            try:
                data = resp.json()
            except ValueError:
                raise BackendUnavailable("response is not JSON") from None
            return self.parse_response(data)
        raise BackendUnavailable(f"gave up after {self.attempts} attempts ({last_error})")


# --------------------------------------------------------------------------
# budget
# --------------------------------------------------------------------------
class TokenBudget:
    """Token and wall-clock allowance shared by every call in one run.

    ``remaining`` may go negative: usage is only known after a call returns,
    so the overshoot is bounded by the last call.
    """

    def __init__(self, limit_tokens: int, seconds: Optional[float] = None,
                 clock: Callable[[], float] = time.monotonic):
        self.limit = limit_tokens
        self.clock = clock
        self.start = clock()
        self.deadline = None if seconds is None else self.start + seconds
        self.used = 0
        self.calls = 0
        self._lock = threading.Lock()

    @property
    def remaining(self) -> int:
        return self.limit - self.used

    def charge(self, usage: TokenUsage) -> int:
        with self._lock:
            self.used += usage.total
            self.calls += 1
            return self.limit - self.used

    def expired(self) -> bool:
        return self.deadline is not None and self.clock() >= self.deadline

    def exhausted(self) -> bool:
        return self.remaining <= 0 or self.expired()

    def elapsed(self) -> float:
        return self.clock() - self.start


def charge(budget: TokenBudget, usage: TokenUsage) -> int:
    """Subtract ``usage.total`` from ``budget`` and return what remains."""
    return budget.charge(usage)


class Gateway:
    """A backend bound to a budget: refuses to start a call once the budget
    is spent or the deadline has passed, and charges every reply."""

    def __init__(self, backend: ChatBackend, budget: TokenBudget,
                 params: Optional[ChatParams] = None):
        self.backend = backend
        self.budget = budget
        self.params = params or ChatParams()
        self.usage = TokenUsage()
        self.call_count = 0
        self._lock = threading.Lock()

    def check(self) -> None:
        if self.budget.remaining <= 0:
            raise BudgetExceeded("token budget exhausted")
        if self.budget.expired():
            raise BudgetExceeded("wall-clock budget exhausted")

    def chat(self, history: Sequence[ChatMessage], tools: Sequence[ToolSchema] = (),
             params: Optional[ChatParams] = None) -> tuple[ChatMessage, TokenUsage]:
        self.check()
        with self._lock:
            self.call_count += 1
        reply, usage = self.backend.chat(history, tools, params or self.params)
        self.budget.charge(usage)
        with self._lock:
            self.usage = self.usage + usage
        return reply, usage


__all__ = [
    "ChatMessage", "ToolCall", "TokenUsage", "ToolParam", "ToolSchema", "ChatParams",
    "ScriptEntry", "ScriptedBackend", "OpenAICompatibleBackend", "TokenBudget", "Gateway",
    "BackendUnavailable", "ScriptExhausted", "ScriptMismatch", "BudgetExceeded", "charge",
    "parse_script", "system", "user", "tool_result", "API_KEY_ENV",
]
