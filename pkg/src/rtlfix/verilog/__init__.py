"""Verilog front end: parsing, AST and segmentation."""
from .ast import SourceAST, Span
from .lexer import VerilogSyntaxError
from .parser import UnsupportedConstruct, parse_file, parse_source
from .segment import CodeSegment, StaleSegment, render_segment, segment

__all__ = [
    "SourceAST", "Span", "VerilogSyntaxError", "UnsupportedConstruct", "parse_file",
    "parse_source", "CodeSegment", "StaleSegment", "render_segment", "segment",
]
