# holoflow/field_expr.py
"""
Entire vector fields F(x) as expression trees.

Grammar (whitespace insignificant):
    expr   := term (('+'|'-') term)*
    term   := factor (('*'|'/') factor)*
    factor := unary ('^' integer)?
    unary  := '-'? atom
    atom   := number | 'i' | 'pi' | 'e' | 'x' | func '(' expr ')' | '(' expr ')'
    func   := 'exp' | 'sin' | 'cos'

Note that `-x^2` is (-x)^2 under this grammar; the printer parenthesizes accordingly.
Trees are immutable and compare structurally, so one FieldAst can be shared by
every worker thread.
"""
import cmath
import math
import re
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np
from numpy.polynomial import polynomial as P

from .errors import ConfigError, DivisionByZero, FieldSyntaxError, UnknownIdentifier

FUNCTIONS = ("exp", "sin", "cos")
CONSTANTS = {"i": 1j, "pi": complex(math.pi), "e": complex(math.e)}


# ---------- nodes ----------

class Node:
    prec = 5

    def children(self) -> Tuple["Node", ...]:
        return ()


@dataclass(frozen=True)
class Const(Node):
    value: complex
    name: Optional[str] = None


@dataclass(frozen=True)
class Var(Node):
    pass


@dataclass(frozen=True)
class Neg(Node):
    arg: Node
    prec = 3

    def children(self):
        return (self.arg,)


@dataclass(frozen=True)
class Add(Node):
    left: Node
    right: Node
    prec = 1
    op = "+"

    def children(self):
        return (self.left, self.right)


@dataclass(frozen=True)
class Sub(Node):
    left: Node
    right: Node
    prec = 1
    op = "-"

    def children(self):
        return (self.left, self.right)


@dataclass(frozen=True)
class Mul(Node):
    left: Node
    right: Node
    prec = 2
    op = "*"

    def children(self):
        return (self.left, self.right)


@dataclass(frozen=True)
class Div(Node):
    left: Node
    right: Node
    prec = 2
    op = "/"

    def children(self):
        return (self.left, self.right)


@dataclass(frozen=True)
class Pow(Node):
    base: Node
    exponent: int
    prec = 4

    def children(self):
        return (self.base,)


@dataclass(frozen=True)
class Func(Node):
    name: str
    arg: Node

    def children(self):
        return (self.arg,)


ZERO = Const(0j)
ONE = Const(1 + 0j)


# ---------- tokenizer / parser ----------

_TOKEN = re.compile(r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^()])
""", re.VERBOSE)


def _byte_offset(source: str, idx: int) -> int:
    return len(source[:idx].encode("utf-8"))


class _Parser:
    def __init__(self, source: str):
        self.source = source
        self.tokens: List[Tuple[str, str, int]] = []
        pos = 0
        while pos < len(source):
            m = _TOKEN.match(source, pos)
            if m is None:
                raise FieldSyntaxError(f"unexpected character {source[pos]!r}", _byte_offset(source, pos), source)
            if m.lastgroup != "ws":
                self.tokens.append((m.lastgroup, m.group(), _byte_offset(source, pos)))
            pos = m.end()
        self.tokens.append(("end", "", _byte_offset(source, len(source))))
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def fail(self, tok, what: str):
        found = "end of input" if tok[0] == "end" else repr(tok[1])
        raise FieldSyntaxError(f"expected {what}, found {found}", tok[2], self.source)

    def expect(self, text: str):
        tok = self.take()
        if tok[1] != text or tok[0] != "op":
            self.fail(tok, repr(text))

    def parse(self) -> Node:
        node = self.expr()
        tok = self.peek()
        if tok[0] != "end":
            self.fail(tok, "operator or end of input")
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            rhs = self.term()
            node = Add(node, rhs) if op == "+" else Sub(node, rhs)
        return node

    def term(self) -> Node:
        node = self.factor()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            rhs = self.factor()
            node = Mul(node, rhs) if op == "*" else Div(node, rhs)
        return node

    def factor(self) -> Node:
        base = self.unary()
        if self.peek()[1] == "^":
            self.take()
            tok = self.take()
            if tok[0] != "num" or not tok[1].isdigit():
                self.fail(tok, "non-negative integer exponent")
            return Pow(base, int(tok[1]))
        return base

    def unary(self) -> Node:
        if self.peek()[1] == "-" and self.peek()[0] == "op":
            self.take()
            return Neg(self.atom())
        return self.atom()

    def atom(self) -> Node:
        tok = self.take()
        kind, text, off = tok
        if kind == "num":
            return Const(complex(float(text)))
        if kind == "ident":
            if text == "x":
                return Var()
            if text in CONSTANTS:
                return Const(CONSTANTS[text], text)
            if text in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Func(text, arg)
            raise UnknownIdentifier(text, off)
        if kind == "op" and text == "(":
            node = self.expr()
            self.expect(")")
            return node
        self.fail(tok, "number, identifier or '('")


# ---------- printing ----------

def _const_text(c: Const) -> str:
    if c.name:
        return c.name
    v = complex(c.value)
    if v.imag == 0.0:
        return repr(v.real) if v.real >= 0 else f"(-{repr(-v.real)})"
    return f"({repr(v.real)}+{repr(v.imag)}*i)"


def to_source(node: Node, min_prec: int = 0) -> str:
    """Canonical text; parse(to_source(n)) == n for every tree the parser produces."""
    if isinstance(node, Const):
        text, prec = _const_text(node), 5
    elif isinstance(node, Var):
        text, prec = "x", 5
    elif isinstance(node, Func):
        text, prec = f"{node.name}({to_source(node.arg)})", 5
    elif isinstance(node, Neg):
        text, prec = "-" + to_source(node.arg, 5), 3
    elif isinstance(node, Pow):
        text, prec = f"{to_source(node.base, 5)}^{node.exponent}", 4
    elif isinstance(node, (Add, Sub)):
        text, prec = f"{to_source(node.left, 1)}{node.op}{to_source(node.right, 2)}", 1
    elif isinstance(node, (Mul, Div)):
        text, prec = f"{to_source(node.left, 2)}{node.op}{to_source(node.right, 3)}", 2
    else:
        raise TypeError(f"unknown node {node!r}")
    return f"({text})" if prec < min_prec else text


# ---------- evaluation ----------

def _ipow(v, n: int):
    """v**n by repeated squaring."""
    result = None
    base = v
    while n:
        if n & 1:
            result = base if result is None else result * base
        n >>= 1
        if n:
            base = base * base
    return 1.0 + 0j if result is None else result


def _compile(node: Node, lib) -> Callable:
    if isinstance(node, Const):
        v = complex(node.value)
        return lambda z: v
    if isinstance(node, Var):
        return lambda z: z
    if isinstance(node, Neg):
        a = _compile(node.arg, lib)
        return lambda z: -a(z)
    if isinstance(node, Pow):
        b, n = _compile(node.base, lib), node.exponent
        return lambda z: _ipow(b(z), n)
    if isinstance(node, Func):
        a, fn = _compile(node.arg, lib), getattr(lib, node.name)
        return lambda z: fn(a(z))
    left, right = _compile(node.left, lib), _compile(node.right, lib)
    if isinstance(node, Add):
        return lambda z: left(z) + right(z)
    if isinstance(node, Sub):
        return lambda z: left(z) - right(z)
    if isinstance(node, Mul):
        return lambda z: left(z) * right(z)
    if isinstance(node, Div):
        return lambda z: left(z) / right(z)
    raise TypeError(f"unknown node {node!r}")


# ---------- symbolic derivative ----------

def _is_zero(n: Node) -> bool:
    return isinstance(n, Const) and n.value == 0


def _is_one(n: Node) -> bool:
    return isinstance(n, Const) and n.value == 1


def _add(a: Node, b: Node) -> Node:
    if _is_zero(a):
        return b
    if _is_zero(b):
        return a
    return Add(a, b)


def _sub(a: Node, b: Node) -> Node:
    if _is_zero(b):
        return a
    if _is_zero(a):
        return _neg(b)
    return Sub(a, b)


def _neg(a: Node) -> Node:
    if _is_zero(a):
        return ZERO
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def _mul(a: Node, b: Node) -> Node:
    if _is_zero(a) or _is_zero(b):
        return ZERO
    if _is_one(a):
        return b
    if _is_one(b):
        return a
    return Mul(a, b)


def _div(a: Node, b: Node) -> Node:
    if _is_zero(a):
        return ZERO
    if _is_one(b):
        return a
    return Div(a, b)


def _pow(a: Node, n: int) -> Node:
    if n == 0:
        return ONE
    if n == 1:
        return a
    return Pow(a, n)


def _d(node: Node) -> Node:
    if isinstance(node, Const):
        return ZERO
    if isinstance(node, Var):
        return ONE
    if isinstance(node, Neg):
        return _neg(_d(node.arg))
    if isinstance(node, Add):
        return _add(_d(node.left), _d(node.right))
    if isinstance(node, Sub):
        return _sub(_d(node.left), _d(node.right))
    if isinstance(node, Mul):
        return _add(_mul(_d(node.left), node.right), _mul(node.left, _d(node.right)))
    if isinstance(node, Div):
        u, v = node.left, node.right
        return _div(_sub(_mul(_d(u), v), _mul(u, _d(v))), _pow(v, 2))
    if isinstance(node, Pow):
        if node.exponent == 0:
            return ZERO
        inner = _mul(Const(complex(node.exponent)), _pow(node.base, node.exponent - 1))
        return _mul(inner, _d(node.base))
    if isinstance(node, Func):
        du = _d(node.arg)
        if node.name == "exp":
            return _mul(node, du)
        if node.name == "sin":
            return _mul(Func("cos", node.arg), du)
        if node.name == "cos":
            return _mul(_neg(Func("sin", node.arg)), du)
    raise TypeError(f"cannot differentiate {node!r}")


def _walk(node: Node):
    yield node
    for c in node.children():
        yield from _walk(c)


def _has_var(node: Node) -> bool:
    return any(isinstance(n, Var) for n in _walk(node))


def _poly(node: Node) -> Optional[np.ndarray]:
    """Ascending coefficients, or None when the tree is not a polynomial in x."""
    if not _has_var(node):
        with np.errstate(all="ignore"):
            v = complex(_compile(node, cmath)(0j))
        return np.array([v], dtype=complex)
    if isinstance(node, Var):
        return np.array([0, 1], dtype=complex)
    if isinstance(node, Neg):
        c = _poly(node.arg)
        return None if c is None else -c
    if isinstance(node, Pow):
        c = _poly(node.base)
        return None if c is None else P.polypow(c, node.exponent)
    if isinstance(node, (Add, Sub, Mul)):
        a, b = _poly(node.left), _poly(node.right)
        if a is None or b is None:
            return None
        if isinstance(node, Add):
            return P.polyadd(a, b)
        if isinstance(node, Sub):
            return P.polysub(a, b)
        return P.polymul(a, b)
    if isinstance(node, Div) and not _has_var(node.right):
        a = _poly(node.left)
        d = complex(_compile(node.right, cmath)(0j))
        return None if a is None or d == 0 else a / d
    return None


# ---------- public API ----------

class _NumpyLib:
    exp = staticmethod(np.exp)
    sin = staticmethod(np.sin)
    cos = staticmethod(np.cos)


@dataclass(frozen=True, eq=False)
class FieldAst:
    """Parsed entire field F. Equality is structural on `root`."""
    root: Node
    source: str
    diagnostics: Tuple[str, ...] = ()
    _scalar: Callable = field(init=False, repr=False)
    _array: Callable = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "_scalar", _compile(self.root, cmath))
        object.__setattr__(self, "_array", _compile(self.root, _NumpyLib))

    def __eq__(self, other):
        return isinstance(other, FieldAst) and self.root == other.root

    def __hash__(self):
        return hash(self.root)

    def __str__(self):
        return to_source(self.root)

    def __call__(self, z: complex) -> complex:
        return self.evaluate(z)

    def evaluate(self, z: complex) -> complex:
        try:
            return complex(self._scalar(complex(z)))
        except ZeroDivisionError:
            raise DivisionByZero(f"division by zero evaluating {self.source!r} at {z!r}")
        except OverflowError:
            return complex(math.inf, math.inf)

    def evaluate_array(self, z: np.ndarray) -> np.ndarray:
        """Vectorized F; non-finite entries signal overflow or a user-written pole."""
        z = np.asarray(z, dtype=complex)
        with np.errstate(all="ignore"):
            out = self._array(z)
        return np.broadcast_to(np.asarray(out, dtype=complex), z.shape).copy()

    def derivative(self, k: int = 1) -> "FieldAst":
        return derivative(self, k)

    @property
    def has_division(self) -> bool:
        return any(isinstance(n, Div) for n in _walk(self.root))

    @property
    def is_constant(self) -> bool:
        return not _has_var(self.root)

    def polynomial_coefficients(self) -> Optional[np.ndarray]:
        """Ascending coefficients with trailing zeros trimmed, or None for non-polynomial fields."""
        c = _poly(self.root)
        if c is None:
            return None
        return P.polytrim(c, 0)


def parse(source: str) -> FieldAst:
    if not source or not source.strip():
        raise FieldSyntaxError("empty expression", 0, source or "")
    root = _Parser(source).parse()
    ast = FieldAst(root, source)
    if ast.has_division:
        ast = FieldAst(root, source, ("division node present: F is assumed entire, poles are not checked",))
    return ast


def evaluate(f: FieldAst, z: complex) -> complex:
    return f.evaluate(z)


def derivative(f: FieldAst, k: int = 1) -> FieldAst:
    if k < 1:
        raise ValueError("derivative order must be >= 1")
    node = f.root
    for _ in range(k):
        node = _d(node)
    return FieldAst(node, to_source(node), f.diagnostics)


def derivatives(f: FieldAst, kmax: int) -> List[FieldAst]:
    """[F, F', ..., F^(kmax)], each built from the previous one."""
    out = [f]
    node = f.root
    for _ in range(kmax):
        node = _d(node)
        out.append(FieldAst(node, to_source(node), f.diagnostics))
    return out


def negate(f: FieldAst) -> FieldAst:
    """-F: the same orbits with time reversed."""
    root = _neg(f.root)
    return FieldAst(root, to_source(root), f.diagnostics)


def substitute(source: str, name: str, value: float) -> str:
    """Textual substitution of a sweep placeholder before parsing."""
    if not re.fullmatch(r"[A-Za-z_][A-Za-z_0-9]*", name) or name in FUNCTIONS or name in CONSTANTS or name == "x":
        raise ConfigError(f"bad placeholder name {name!r}")
    return re.sub(rf"\b{name}\b", f"({float(value)!r})", source)
