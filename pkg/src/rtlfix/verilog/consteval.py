"""Integer evaluation of constant expressions (parameters, ranges, selects)."""
from __future__ import annotations

from typing import Optional

from .ast import Binary, Call, Ident, ModuleDecl, Number, ParamDecl, Ternary, Unary

_BINOPS = {
    "+": lambda a, b: a + b,
    "-": lambda a, b: a - b,
    "*": lambda a, b: a * b,
    "/": lambda a, b: int(a / b) if b else None,
    "%": lambda a, b: (abs(a) % abs(b)) * (1 if a >= 0 else -1) if b else None,
    "**": lambda a, b: a ** b if b >= 0 else None,
    "<<": lambda a, b: a << b,
    ">>": lambda a, b: a >> b,
    "<<<": lambda a, b: a << b,
    ">>>": lambda a, b: a >> b,
    "&": lambda a, b: a & b,
    "|": lambda a, b: a | b,
    "^": lambda a, b: a ^ b,
    "==": lambda a, b: int(a == b),
    "!=": lambda a, b: int(a != b),
    "<": lambda a, b: int(a < b),
    "<=": lambda a, b: int(a <= b),
    ">": lambda a, b: int(a > b),
    ">=": lambda a, b: int(a >= b),
    "&&": lambda a, b: int(bool(a) and bool(b)),
    "||": lambda a, b: int(bool(a) or bool(b)),
}


def const_eval(expr, params: Optional[dict[str, int]] = None) -> Optional[int]:
    """Value of ``expr`` or None when it is not a known integer constant."""
    params = params or {}
    if isinstance(expr, Number):
        if expr.xmask:
            return None
        if expr.signed and expr.width and expr.value >> (expr.width - 1) & 1:
            return expr.value - (1 << expr.width)
        return expr.value
    if isinstance(expr, Ident):
        return params.get(expr.name)
    if isinstance(expr, Unary):
        v = const_eval(expr.operand, params)
        if v is None:
            return None
        if expr.op == "-":
            return -v
        if expr.op == "+":
            return v
        if expr.op == "!":
            return int(not v)
        if expr.op == "~":
            return ~v
        return None
    if isinstance(expr, Binary):
        a = const_eval(expr.left, params)
        b = const_eval(expr.right, params)
        fn = _BINOPS.get(expr.op)
        if a is None or b is None or fn is None:
            return None
        try:
            return fn(a, b)
        except (ValueError, OverflowError):
            return None
    if isinstance(expr, Ternary):
        c = const_eval(expr.cond, params)
        if c is None:
            return None
        return const_eval(expr.then if c else expr.other, params)
    if isinstance(expr, Call) and expr.name == "$clog2" and len(expr.args) == 1:
        v = const_eval(expr.args[0], params)
        return None if v is None else max(v - 1, 0).bit_length()
    return None


def module_params(module: ModuleDecl) -> dict[str, int]:
    """Default values of a module's parameters, evaluated in declaration order."""
    out: dict[str, int] = {}
    decls = list(module.params) + [i for i in module.items if isinstance(i, ParamDecl)]
    for d in decls:
        for name, expr in d.assigns:
            v = const_eval(expr, out)
            if v is not None:
                out[name] = v
    return out
