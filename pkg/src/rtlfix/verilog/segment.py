"""Split parsed modules into syntactically complete segments of bounded size."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Sequence

from .ast import (Always, FileAST, FunctionDecl, Initial, ModuleDecl, SourceAST, Stmt,
                  TaskDecl, child_statements)

DEFAULT_MAX_LINES = 60


class StaleSegment(Exception):
    """The file a segment was cut from has changed since segmentation."""


@dataclass(frozen=True)
class CodeSegment:
    file: str
    start: int
    end: int
    text: str
    ast_path: tuple[int, ...]
    module: str
    digest: str

    @property
    def lines(self) -> int:
        return self.end - self.start + 1

    def contains(self, line: int) -> bool:
        return self.start <= line <= self.end


def text_digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


@dataclass
class _Piece:
    start: int
    end: int
    path: tuple[int, ...]


def _node_children(node) -> list[Stmt]:
    if isinstance(node, (Always, Initial)):
        return [node.body]
    if isinstance(node, (FunctionDecl, TaskDecl)):
        return [node.body]
    if isinstance(node, Stmt):
        return child_statements(node)
    return []


def _decompose(node, start: int, end: int, path: tuple[int, ...], max_lines: int) -> list[_Piece]:
    if end - start + 1 <= max_lines:
        return [_Piece(start, end, path)]
    children = _node_children(node)
    spans = [(c.span.start, c.span.end) for c in children]
    ordered = all(start <= s <= e <= end for s, e in spans) and all(
        spans[i][1] < spans[i + 1][0] for i in range(len(spans) - 1))
    if not children or not ordered:
        # indivisible leaf, emitted whole
        return [_Piece(start, end, path)]
    if len(children) == 1 and spans[0] == (start, end):
        return _decompose(children[0], start, end, path + (0,), max_lines)
    pieces: list[_Piece] = []
    cursor = start
    for idx, (child, (s, e)) in enumerate(zip(children, spans)):
        if s > cursor:
            pieces.append(_Piece(cursor, s - 1, path))
        pieces.extend(_decompose(child, s, e, path + (idx,), max_lines))
        cursor = e + 1
    if cursor <= end:
        pieces.append(_Piece(cursor, end, path))
    return pieces


def _common_prefix(paths: Sequence[tuple[int, ...]]) -> tuple[int, ...]:
    first = paths[0]
    n = len(first)
    for p in paths[1:]:
        n = min(n, len(p))
        for i in range(n):
            if p[i] != first[i]:
                n = i
                break
    return first[:n]


def segment_module(fast: FileAST, module: ModuleDecl, max_lines: int) -> list[CodeSegment]:
    pieces: list[_Piece] = []
    for idx, item in enumerate(module.items):
        for piece in _decompose(item, item.span.start, item.span.end, (idx,), max_lines):
            # items declared by one statement (``m a(..), b(..);``) share a span
            if pieces and piece.start <= pieces[-1].end:
                pieces[-1].end = max(pieces[-1].end, piece.end)
                continue
            pieces.append(piece)
    if not pieces:
        return []
    # greedy left-to-right coalescing of adjacent pieces
    groups: list[list[_Piece]] = [[pieces[0]]]
    for piece in pieces[1:]:
        group = groups[-1]
        if piece.end - group[0].start + 1 <= max_lines:
            group.append(piece)
        else:
            groups.append([piece])
    lines = fast.text.split("\n")
    digest = text_digest(fast.text)
    out = []
    for group in groups:
        s, e = group[0].start, group[-1].end
        out.append(CodeSegment(
            file=fast.path, start=s, end=e, text="\n".join(lines[s - 1:e]),
            ast_path=_common_prefix([p.path for p in group]), module=module.name, digest=digest))
    return out


def segment(ast: SourceAST, max_lines: int = DEFAULT_MAX_LINES) -> list[CodeSegment]:
    """Partition every module's items into segments of at most ``max_lines`` lines.

    Oversized items are split along their statement tree; a single statement
    that still exceeds the limit is kept whole.
    """
    if max_lines < 1:
        raise ValueError("max_lines must be >= 1")
    out: list[CodeSegment] = []
    for fast in ast.files:
        for module in fast.modules:
            out.extend(segment_module(fast, module, max_lines))
    return out


def render_lines(text: str, first: int, last: int) -> str:
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    first = max(first, 1)
    last = min(last, len(lines))
    return "\n".join(f"{n}: {lines[n - 1]}" for n in range(first, last + 1))


def render_segment(seg: CodeSegment, context_radius: int, source: str) -> str:
    """Render ``seg`` with ``N: `` line prefixes and up to ``context_radius``
    lines of surrounding context, clamped to the file bounds.

    ``source`` is the current text of ``seg.file``; it must be the text the
    segment was cut from.
    """
    if context_radius < 0:
        raise ValueError("context_radius must be non-negative")
    if text_digest(source) != seg.digest:
        raise StaleSegment(f"{seg.file} changed since segmentation")
    return render_lines(source, seg.start - context_radius, seg.end + context_radius)


def item_lines(module: ModuleDecl) -> set[int]:
    out: set[int] = set()
    for item in module.items:
        out.update(range(item.span.start, item.span.end + 1))
    return out


__all__ = ["CodeSegment", "StaleSegment", "segment", "render_segment", "render_lines",
           "item_lines", "DEFAULT_MAX_LINES"]
