"""Four-state bit vectors.

A :class:`Vec` stores known bit values in ``val``, unknown bits in ``unk``
and the subset of unknown bits that are high-impedance in ``z``.  Unknown bit
positions always hold 0 in ``val``.
"""
from __future__ import annotations

from typing import Optional


def _mask(width: int) -> int:
    return (1 << width) - 1


class Vec:
    __slots__ = ("width", "val", "unk", "z")

    def __init__(self, width: int, val: int = 0, unk: int = 0, z: int = 0):
        m = _mask(width)
        unk &= m
        self.width = width
        self.unk = unk
        self.z = z & unk
        self.val = val & m & ~unk

    # ----------------------------------------------------------- constructors
    @classmethod
    def from_int(cls, value: int, width: int) -> "Vec":
        return cls(width, value & _mask(width))

    @classmethod
    def x(cls, width: int) -> "Vec":
        return cls(width, 0, _mask(width))

    @classmethod
    def zz(cls, width: int) -> "Vec":
        m = _mask(width)
        return cls(width, 0, m, m)

    @classmethod
    def from_bin(cls, text: str) -> "Vec":
        val = unk = z = 0
        for ch in text.lower():
            val <<= 1
            unk <<= 1
            z <<= 1
            if ch == "1":
                val |= 1
            elif ch in "xu-wlh":
                unk |= 1
            elif ch == "z":
                unk |= 1
                z |= 1
        return cls(len(text), val, unk, z)

    # ---------------------------------------------------------------- queries
    @property
    def known(self) -> bool:
        return self.unk == 0

    def to_int(self) -> Optional[int]:
        return None if self.unk else self.val

    def to_signed(self) -> Optional[int]:
        if self.unk:
            return None
        if self.width and self.val >> (self.width - 1) & 1:
            return self.val - (1 << self.width)
        return self.val

    def truth(self) -> Optional[bool]:
        """Verilog truthiness: True if any known 1, False if all known 0, else None."""
        if self.val:
            return True
        if self.unk:
            return None
        return False

    def bit(self, i: int) -> str:
        if self.unk >> i & 1:
            return "z" if self.z >> i & 1 else "x"
        return "1" if self.val >> i & 1 else "0"

    def to_bin(self) -> str:
        return "".join(self.bit(i) for i in range(self.width - 1, -1, -1))

    def __eq__(self, other) -> bool:
        return (isinstance(other, Vec) and self.width == other.width and self.val == other.val
                and self.unk == other.unk and self.z == other.z)

    def same_bits(self, other: "Vec") -> bool:
        return self.val == other.val and self.unk == other.unk and self.z == other.z

    def __hash__(self) -> int:
        return hash((self.width, self.val, self.unk, self.z))

    def __repr__(self) -> str:
        return f"Vec({self.width}'b{self.to_bin()})"

    # ---------------------------------------------------------------- shaping
    def resize(self, width: int, signed: bool = False) -> "Vec":
        if width == self.width:
            return self
        if width < self.width:
            return Vec(width, self.val, self.unk, self.z)
        ext = _mask(width) ^ _mask(self.width)
        if signed and self.width:
            top = self.width - 1
            if self.unk >> top & 1:
                z = ext if self.z >> top & 1 else 0
                return Vec(width, self.val, self.unk | ext, self.z | z)
            if self.val >> top & 1:
                return Vec(width, self.val | ext, self.unk, self.z)
        return Vec(width, self.val, self.unk, self.z)

    def slice(self, lo: int, width: int) -> "Vec":
        """Bits ``[lo + width - 1 : lo]``; positions outside the vector read as x."""
        if lo >= 0 and lo + width <= self.width:
            return Vec(width, self.val >> lo, self.unk >> lo, self.z >> lo)
        val = unk = z = 0
        for i in range(width):
            src = lo + i
            if 0 <= src < self.width:
                val |= (self.val >> src & 1) << i
                unk |= (self.unk >> src & 1) << i
                z |= (self.z >> src & 1) << i
            else:
                unk |= 1 << i
        return Vec(width, val, unk, z)

    def replace(self, lo: int, part: "Vec") -> "Vec":
        """Copy of self with ``part`` written at bit offset ``lo`` (clipped)."""
        width = part.width
        if lo < 0:
            part = part.slice(-lo, width + lo) if width + lo > 0 else Vec(0)
            width = part.width
            lo = 0
        if lo >= self.width or width <= 0:
            return self
        width = min(width, self.width - lo)
        m = _mask(width) << lo
        return Vec(self.width,
                   (self.val & ~m) | ((part.val << lo) & m),
                   (self.unk & ~m) | ((part.unk << lo) & m),
                   (self.z & ~m) | ((part.z << lo) & m))


def concat(parts: list[Vec]) -> Vec:
    """Concatenate MSB-first."""
    val = unk = z = 0
    width = 0
    for p in parts:
        val = (val << p.width) | p.val
        unk = (unk << p.width) | p.unk
        z = (z << p.width) | p.z
        width += p.width
    return Vec(width, val, unk, z)


def resolve_wire(values: list[tuple[Vec, int]], width: int) -> Vec:
    """Resolve several continuous drivers of one net.

    Each entry is ``(value, drive_mask)``; undriven bits read z, agreeing
    drivers pass through and conflicting drivers produce x.
    """
    val = unk = z = 0
    for i in range(width):
        bit = "z"
        for v, m in values:
            if not (m >> i & 1):
                continue
            b = v.bit(i)
            if b == "z":
                continue
            if bit == "z":
                bit = b
            elif bit != b:
                bit = "x"
        if bit == "1":
            val |= 1 << i
        elif bit == "x":
            unk |= 1 << i
        elif bit == "z":
            unk |= 1 << i
            z |= 1 << i
    return Vec(width, val, unk, z)


# --------------------------------------------------------------------------
# operators.  Operands arrive already extended to the operation width.
# --------------------------------------------------------------------------
def op_not(a: Vec) -> Vec:
    return Vec(a.width, ~a.val, a.unk)


def op_and(a: Vec, b: Vec) -> Vec:
    w = a.width
    zero_a = ~a.val & ~a.unk
    zero_b = ~b.val & ~b.unk
    known0 = zero_a | zero_b
    one = a.val & b.val
    unk = _mask(w) & ~known0 & ~one
    return Vec(w, one, unk)


def op_or(a: Vec, b: Vec) -> Vec:
    w = a.width
    one = a.val | b.val
    unk = (a.unk | b.unk) & ~one
    return Vec(w, one, unk)


def op_xor(a: Vec, b: Vec) -> Vec:
    return Vec(a.width, a.val ^ b.val, a.unk | b.unk)


def op_xnor(a: Vec, b: Vec) -> Vec:
    return Vec(a.width, ~(a.val ^ b.val), a.unk | b.unk)


def _arith(a: Vec, b: Vec, fn) -> Vec:
    if a.unk or b.unk:
        return Vec.x(a.width)
    r = fn(a.val, b.val)
    if r is None:
        return Vec.x(a.width)
    return Vec(a.width, r)


def op_add(a: Vec, b: Vec) -> Vec:
    return _arith(a, b, lambda x, y: x + y)


def op_sub(a: Vec, b: Vec) -> Vec:
    return _arith(a, b, lambda x, y: x - y)


def op_mul(a: Vec, b: Vec) -> Vec:
    return _arith(a, b, lambda x, y: x * y)


def _signed_val(v: Vec) -> int:
    s = v.to_signed()
    assert s is not None
    return s


def op_div(a: Vec, b: Vec, signed: bool = False) -> Vec:
    if a.unk or b.unk or b.val == 0:
        return Vec.x(a.width)
    if signed:
        x, y = _signed_val(a), _signed_val(b)
        q = abs(x) // abs(y)
        return Vec.from_int(q if (x < 0) == (y < 0) else -q, a.width)
    return Vec(a.width, a.val // b.val)


def op_mod(a: Vec, b: Vec, signed: bool = False) -> Vec:
    if a.unk or b.unk or b.val == 0:
        return Vec.x(a.width)
    if signed:
        x, y = _signed_val(a), _signed_val(b)
        r = abs(x) % abs(y)
        return Vec.from_int(-r if x < 0 else r, a.width)
    return Vec(a.width, a.val % b.val)


def op_pow(a: Vec, b: Vec) -> Vec:
    if a.unk or b.unk:
        return Vec.x(a.width)
    return Vec(a.width, pow(a.val, b.val, 1 << a.width) if a.width else 0)


def op_neg(a: Vec) -> Vec:
    if a.unk:
        return Vec.x(a.width)
    return Vec(a.width, -a.val)


def op_shl(a: Vec, amount: Vec) -> Vec:
    if amount.unk:
        return Vec.x(a.width)
    n = amount.val
    if n >= a.width:
        return Vec(a.width, 0)
    return Vec(a.width, a.val << n, a.unk << n, a.z << n)


def op_shr(a: Vec, amount: Vec, arithmetic: bool = False) -> Vec:
    if amount.unk:
        return Vec.x(a.width)
    n = amount.val
    w = a.width
    if arithmetic and w:
        top = w - 1
        fill_unk = a.unk >> top & 1
        fill_one = a.val >> top & 1
        n = min(n, w)
        fill = _mask(w) ^ (_mask(w - n) if n < w else 0)
        return Vec(w, (a.val >> n) | (fill if fill_one else 0),
                   (a.unk >> n) | (fill if fill_unk else 0))
    if n >= w:
        return Vec(w, 0)
    return Vec(w, a.val >> n, a.unk >> n, a.z >> n)


def _bool(v: Optional[bool]) -> Vec:
    if v is None:
        return Vec.x(1)
    return Vec(1, 1 if v else 0)


def op_eq(a: Vec, b: Vec) -> Vec:
    known = ~(a.unk | b.unk)
    if (a.val ^ b.val) & known & _mask(a.width):
        return Vec(1, 0)
    if a.unk or b.unk:
        return Vec.x(1)
    return Vec(1, 1)


def op_ne(a: Vec, b: Vec) -> Vec:
    r = op_eq(a, b)
    return r if r.unk else Vec(1, r.val ^ 1)


def op_case_eq(a: Vec, b: Vec) -> Vec:
    return Vec(1, 1 if a.same_bits(b) else 0)


def op_compare(a: Vec, b: Vec, op: str, signed: bool = False) -> Vec:
    if a.unk or b.unk:
        return Vec.x(1)
    x, y = (a.to_signed(), b.to_signed()) if signed else (a.val, b.val)
    assert x is not None and y is not None
    if op == "<":
        return _bool(x < y)
    if op == "<=":
        return _bool(x <= y)
    if op == ">":
        return _bool(x > y)
    return _bool(x >= y)


def op_logic_not(a: Vec) -> Vec:
    t = a.truth()
    return _bool(None if t is None else not t)


def op_logic_and(a: Vec, b: Vec) -> Vec:
    ta, tb = a.truth(), b.truth()
    if ta is False or tb is False:
        return Vec(1, 0)
    if ta and tb:
        return Vec(1, 1)
    return Vec.x(1)


def op_logic_or(a: Vec, b: Vec) -> Vec:
    ta, tb = a.truth(), b.truth()
    if ta or tb:
        return Vec(1, 1)
    if ta is False and tb is False:
        return Vec(1, 0)
    return Vec.x(1)


def reduce(op: str, a: Vec) -> Vec:
    m = _mask(a.width)
    if op in ("&", "~&"):
        if ~a.val & ~a.unk & m:
            r: Optional[bool] = False
        elif a.unk:
            r = None
        else:
            r = True
    elif op in ("|", "~|"):
        if a.val:
            r = True
        elif a.unk:
            r = None
        else:
            r = False
    else:
        r = None if a.unk else bool(bin(a.val).count("1") & 1)
    if op.startswith("~") or op == "^~":
        r = None if r is None else not r
    return _bool(r)


def merge(a: Vec, b: Vec) -> Vec:
    """Bitwise merge for an unknown ternary condition: agreeing bits survive."""
    diff = (a.val ^ b.val) | a.unk | b.unk
    return Vec(a.width, a.val & ~diff, diff)


def case_match(kind: str, a: Vec, b: Vec) -> bool:
    """Match a case expression against an item value, both at one width."""
    if kind == "case":
        return a.same_bits(b)
    if kind == "casez":
        care = ~(a.z | b.z)
    else:
        care = ~(a.unk | b.unk)
    m = _mask(a.width) & care
    return ((a.val ^ b.val) & m) == 0 and ((a.unk ^ b.unk) & m) == 0
