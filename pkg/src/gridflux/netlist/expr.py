"""Behavioral-source expressions: AST, parser, evaluator, symbolic derivative.

Expressions appear inside ``{...}`` in B-source cards and parameter values::

    I={limit((P*V(RNode)+Q*V(INode))/(V(RNode)*V(RNode)+V(INode)*V(INode)), -CurrLim, CurrLim)}

The same tree is consumed three ways: :func:`eval_expr` walks it directly,
:func:`diff` builds derivative trees for Newton Jacobians, and
:func:`compile_exprs` turns a batch of trees into one Python function with
common subexpressions hoisted. The compiled path calls the very same helper
functions as the tree walker, so both give bit-identical floats.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence, Union


class ExprError(Exception):
    """Malformed expression or unresolved reference."""


class ExprDomainError(ExprError):
    """Arithmetic outside a function's domain (x/0, SQRT(-1), ACOS(2))."""


# ----------------------------------------------------------------------
# AST
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Param:
    name: str


@dataclass(frozen=True)
class Volt:
    """Node voltage ``V(node)`` or differential ``V(node, node2)``."""
    node: str
    node2: str | None = None


@dataclass(frozen=True)
class Curr:
    """Branch current ``I(device)`` of a device owning an auxiliary current."""
    device: str


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Neg:
    arg: "Expr"


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple["Expr", ...]


Expr = Union[Num, Param, Volt, Curr, BinOp, Neg, Call]

# user-visible functions and their arity
FUNCTIONS = {
    "sqrt": 1, "cos": 1, "acos": 1, "sin": 1, "abs": 1, "exp": 1, "limit": 3,
}

GROUND_NAMES = frozenset({"0"})


# ----------------------------------------------------------------------
# numeric helpers shared by the tree walker and compiled code
# ----------------------------------------------------------------------

def _div(a: float, b: float) -> float:
    if b == 0.0:
        raise ExprDomainError("division by zero")
    return a / b


def _sqrt(a: float) -> float:
    if a < 0.0:
        raise ExprDomainError(f"SQRT of negative value {a!r}")
    return math.sqrt(a)


def _acos(a: float) -> float:
    if a < -1.0 or a > 1.0:
        raise ExprDomainError(f"ACOS argument {a!r} outside [-1, 1]")
    return math.acos(a)


def _exp(a: float) -> float:
    try:
        return math.exp(a)
    except OverflowError:
        raise ExprDomainError(f"EXP overflow at {a!r}") from None


def _limit(x: float, lo: float, hi: float) -> float:
    if lo > hi:
        raise ExprDomainError(f"limit bounds reversed: lo={lo!r} > hi={hi!r}")
    return min(max(x, lo), hi)


# derivative-only helpers; never produced by the parser
def _dacos(a: float) -> float:
    return -1.0 / math.sqrt(max(1.0 - a * a, 1e-300))


def _sign(a: float) -> float:
    return 1.0 if a > 0.0 else (-1.0 if a < 0.0 else 0.0)


def _lsel(x: float, lo: float, hi: float, dx: float, dlo: float, dhi: float) -> float:
    if x <= lo:
        return dlo
    if x >= hi:
        return dhi
    return dx


_RUNTIME = {
    "sqrt": _sqrt,
    "cos": math.cos,
    "sin": math.sin,
    "acos": _acos,
    "abs": abs,
    "exp": _exp,
    "limit": _limit,
    "_dacos": _dacos,
    "_sign": _sign,
    "_lsel": _lsel,
}


# ----------------------------------------------------------------------
# numbers with SPICE suffixes
# ----------------------------------------------------------------------

_NUMBER_RE = re.compile(r"[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?")
_SUFFIXES = [("meg", 1e6), ("k", 1e3), ("m", 1e-3), ("u", 1e-6), ("n", 1e-9), ("p", 1e-12)]
_UNIT_LETTERS = set("vashf")  # V, A, s, H, F


def parse_number(text: str) -> float:
    """Parse ``1.20V``, ``1e-3``, ``10MEG``, ``0.5u`` into a float.

    Raises ValueError when ``text`` is not a number.
    """
    m = _NUMBER_RE.match(text)
    if not m:
        raise ValueError(f"not a number: {text!r}")
    value = float(m.group(0))
    rest = text[m.end():].lower()
    if not rest:
        return value
    # MEG before M: mega vs milli
    for suffix, mult in _SUFFIXES:
        if rest.startswith(suffix):
            tail = rest[len(suffix):]
            if all(c in _UNIT_LETTERS or c.isalpha() for c in tail):
                return value * mult
    if all(c.isalpha() for c in rest) and rest[0] in _UNIT_LETTERS:
        return value
    raise ValueError(f"not a number: {text!r}")


# ----------------------------------------------------------------------
# parser
# ----------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?[A-Za-z]*)"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_.:]*)"
    r"|(?P<op>[-+*/(),]))"
)


def _tokenize(text: str) -> list[tuple[str, str]]:
    tokens = []
    pos = 0
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m or m.end() == pos:
            bad = text[pos:].strip()[:1] or text[pos:pos + 1]
            raise ExprError(f"unexpected character {bad!r} in expression {text!r}")
        kind = m.lastgroup
        tokens.append((kind, m.group(kind)))
        pos = m.end()
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else (None, None)

    def take(self, value=None):
        tok = self.peek()
        if tok[0] is None:
            raise ExprError(f"unexpected end of expression {self.text!r}")
        if value is not None and tok[1] != value:
            raise ExprError(f"expected {value!r} but found {tok[1]!r} in {self.text!r}")
        self.i += 1
        return tok

    def parse(self) -> Expr:
        e = self.expr()
        if self.i != len(self.tokens):
            raise ExprError(f"unexpected token {self.peek()[1]!r} in {self.text!r}")
        return e

    def expr(self) -> Expr:
        e = self.term()
        while self.peek()[1] in ("+", "-"):
            op = self.take()[1]
            e = BinOp(op, e, self.term())
        return e

    def term(self) -> Expr:
        e = self.unary()
        while self.peek()[1] in ("*", "/"):
            op = self.take()[1]
            e = BinOp(op, e, self.unary())
        return e

    def unary(self) -> Expr:
        if self.peek()[1] == "-":
            self.take()
            return Neg(self.unary())
        if self.peek()[1] == "+":
            self.take()
            return self.unary()
        return self.primary()

    def primary(self) -> Expr:
        kind, val = self.take()
        if kind == "num":
            try:
                return Num(parse_number(val))
            except ValueError:
                raise ExprError(f"bad number {val!r} in {self.text!r}") from None
        if val == "(":
            e = self.expr()
            self.take(")")
            return e
        if kind == "name":
            low = val.lower()
            if self.peek()[1] != "(":
                if low == "pi":
                    return Num(math.pi)
                return Param(val)
            self.take("(")
            if low == "v":
                n1 = self._ref_name()
                n2 = None
                if self.peek()[1] == ",":
                    self.take(",")
                    n2 = self._ref_name()
                self.take(")")
                return Volt(n1, n2)
            if low == "i":
                dev = self._ref_name()
                self.take(")")
                return Curr(dev)
            if low not in FUNCTIONS:
                raise ExprError(f"unknown function {val!r} in {self.text!r}")
            args = [self.expr()]
            while self.peek()[1] == ",":
                self.take(",")
                args.append(self.expr())
            self.take(")")
            if len(args) != FUNCTIONS[low]:
                raise ExprError(
                    f"{val} takes {FUNCTIONS[low]} argument(s), got {len(args)}")
            return Call(low, tuple(args))
        raise ExprError(f"unexpected token {val!r} in {self.text!r}")

    def _ref_name(self) -> str:
        kind, val = self.take()
        if kind not in ("name", "num"):
            raise ExprError(f"bad reference {val!r} in {self.text!r}")
        return val


def parse_expr(text: str) -> Expr:
    """Parse the text between braces into an expression tree."""
    return _Parser(text).parse()


# ----------------------------------------------------------------------
# printing
# ----------------------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def format_expr(e: Expr, _prec: int = 0) -> str:
    """Render ``e`` back to netlist syntax; parses to an identical tree."""
    if isinstance(e, Num):
        s = repr(float(e.value))
        return f"({s})" if s.startswith("-") else s
    if isinstance(e, Param):
        return e.name
    if isinstance(e, Volt):
        return f"V({e.node})" if e.node2 is None else f"V({e.node},{e.node2})"
    if isinstance(e, Curr):
        return f"I({e.device})"
    if isinstance(e, Neg):
        s = "-" + format_expr(e.arg, 3)
        return f"({s})" if _prec > 0 else s
    if isinstance(e, BinOp):
        p = _PREC[e.op]
        left = format_expr(e.left, p)
        # right operand binds tighter so a-(b-c) and a/(b*c) keep their parens
        right = format_expr(e.right, p + 1)
        s = f"{left}{e.op}{right}"
        return f"({s})" if p < _prec else s
    if isinstance(e, Call):
        return f"{e.func}({', '.join(format_expr(a) for a in e.args)})"
    raise TypeError(e)


# ----------------------------------------------------------------------
# traversal helpers
# ----------------------------------------------------------------------

def walk(e: Expr) -> Iterable[Expr]:
    yield e
    if isinstance(e, BinOp):
        yield from walk(e.left)
        yield from walk(e.right)
    elif isinstance(e, Neg):
        yield from walk(e.arg)
    elif isinstance(e, Call):
        for a in e.args:
            yield from walk(a)


def transform(e: Expr, fn: Callable[[Expr], Expr | None]) -> Expr:
    """Rebuild ``e`` bottom-up; ``fn`` may return a replacement for leaves."""
    if isinstance(e, BinOp):
        return BinOp(e.op, transform(e.left, fn), transform(e.right, fn))
    if isinstance(e, Neg):
        return Neg(transform(e.arg, fn))
    if isinstance(e, Call):
        return Call(e.func, tuple(transform(a, fn) for a in e.args))
    r = fn(e)
    return e if r is None else r


def references(e: Expr) -> set[tuple[str, str]]:
    """Set of ('v', node) / ('i', device) keys, lowercased, ground excluded."""
    refs = set()
    for sub in walk(e):
        if isinstance(sub, Volt):
            for n in (sub.node, sub.node2):
                if n is not None and n.lower() not in GROUND_NAMES:
                    refs.add(("v", n.lower()))
        elif isinstance(sub, Curr):
            refs.add(("i", sub.device.lower()))
    return refs


# ----------------------------------------------------------------------
# evaluation
# ----------------------------------------------------------------------

def _lookup(bindings: Mapping[str, float], key: str) -> float:
    try:
        return bindings[key]
    except KeyError:
        raise ExprError(f"unbound reference {key}") from None


def _bindings_key_volt(node: str, bindings) -> float:
    if node.lower() in GROUND_NAMES:
        return 0.0
    return _lookup(bindings, f"v({node.lower()})")


def normalize_bindings(bindings: Mapping[str, float]) -> dict[str, float]:
    """Lower-case keys: ``{'V(RNode)': 1}`` -> ``{'v(rnode)': 1}``."""
    return {k.replace(" ", "").lower(): float(v) for k, v in bindings.items()}


def eval_expr(e: Expr, bindings: Mapping[str, float]) -> float:
    """Evaluate ``e`` with ``bindings`` for parameters, ``V(n)`` and ``I(d)``.

    Keys are case-insensitive: ``{"P": 0.9, "V(RNode)": 1.0, "I(Vamm)": 0.2}``.
    """
    return _eval(e, normalize_bindings(bindings))


def _eval(e: Expr, b: Mapping[str, float]) -> float:
    if isinstance(e, Num):
        return e.value
    if isinstance(e, BinOp):
        x = _eval(e.left, b)
        y = _eval(e.right, b)
        if e.op == "+":
            return x + y
        if e.op == "-":
            return x - y
        if e.op == "*":
            return x * y
        try:
            return _div(x, y)
        except ExprDomainError:
            raise ExprDomainError(f"division by zero in {format_expr(e)}") from None
    if isinstance(e, Neg):
        return -_eval(e.arg, b)
    if isinstance(e, Volt):
        v = _bindings_key_volt(e.node, b)
        if e.node2 is not None:
            v = v - _bindings_key_volt(e.node2, b)
        return v
    if isinstance(e, Curr):
        return _lookup(b, f"i({e.device.lower()})")
    if isinstance(e, Param):
        return _lookup(b, e.name.lower())
    if isinstance(e, Call):
        args = [_eval(a, b) for a in e.args]
        return _RUNTIME[e.func](*args)
    raise TypeError(e)


# ----------------------------------------------------------------------
# symbolic differentiation
# ----------------------------------------------------------------------

ZERO = Num(0.0)
ONE = Num(1.0)


def _add(a: Expr, b: Expr) -> Expr:
    if a == ZERO:
        return b
    if b == ZERO:
        return a
    return BinOp("+", a, b)


def _sub(a: Expr, b: Expr) -> Expr:
    if b == ZERO:
        return a
    if a == ZERO:
        return _neg(b)
    return BinOp("-", a, b)


def _mul(a: Expr, b: Expr) -> Expr:
    if a == ZERO or b == ZERO:
        return ZERO
    if a == ONE:
        return b
    if b == ONE:
        return a
    return BinOp("*", a, b)


def _divx(a: Expr, b: Expr) -> Expr:
    if a == ZERO:
        return ZERO
    if b == ONE:
        return a
    return BinOp("/", a, b)


def _neg(a: Expr) -> Expr:
    if a == ZERO:
        return ZERO
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def diff(e: Expr, key: tuple[str, str]) -> Expr:
    """Derivative of ``e`` with respect to ``('v', node)`` or ``('i', device)``.

    ``limit`` differentiates to the argument's derivative strictly inside the
    band and to the bound's derivative once clamped.
    """
    kind, name = key
    if isinstance(e, (Num, Param)):
        return ZERO
    if isinstance(e, Volt):
        if kind != "v":
            return ZERO
        d = 0.0
        if e.node.lower() == name:
            d += 1.0
        if e.node2 is not None and e.node2.lower() == name:
            d -= 1.0
        return Num(d) if d else ZERO
    if isinstance(e, Curr):
        return ONE if kind == "i" and e.device.lower() == name else ZERO
    if isinstance(e, Neg):
        return _neg(diff(e.arg, key))
    if isinstance(e, BinOp):
        du = diff(e.left, key)
        dv = diff(e.right, key)
        if e.op == "+":
            return _add(du, dv)
        if e.op == "-":
            return _sub(du, dv)
        if e.op == "*":
            return _add(_mul(du, e.right), _mul(e.left, dv))
        # quotient: du/v - u*dv/v^2
        first = _divx(du, e.right)
        if dv == ZERO:
            return first
        return _sub(first, _divx(_mul(e.left, dv), _mul(e.right, e.right)))
    if isinstance(e, Call):
        f = e.func
        if f == "limit":
            x, lo, hi = e.args
            dx, dlo, dhi = diff(x, key), diff(lo, key), diff(hi, key)
            if dx == ZERO and dlo == ZERO and dhi == ZERO:
                return ZERO
            return Call("_lsel", (x, lo, hi, dx, dlo, dhi))
        u = e.args[0]
        du = diff(u, key)
        if du == ZERO:
            return ZERO
        if f == "sqrt":
            return _divx(du, _mul(Num(2.0), e))
        if f == "cos":
            return _neg(_mul(Call("sin", (u,)), du))
        if f == "sin":
            return _mul(Call("cos", (u,)), du)
        if f == "exp":
            return _mul(e, du)
        if f == "acos":
            return _mul(Call("_dacos", (u,)), du)
        if f == "abs":
            return _mul(Call("_sign", (u,)), du)
    raise TypeError(e)


# ----------------------------------------------------------------------
# compilation to a Python closure
# ----------------------------------------------------------------------

class _Codegen:
    def __init__(self, var_index: Mapping[tuple[str, str], int]):
        self.var_index = var_index
        self.lines: list[str] = []
        self.memo: dict[Expr, str] = {}

    def leaf(self, e: Expr) -> str | None:
        if isinstance(e, Num):
            return repr(float(e.value))
        if isinstance(e, Volt):
            parts = []
            for n in (e.node, e.node2):
                if n is None:
                    parts.append(None)
                elif n.lower() in GROUND_NAMES:
                    parts.append("0.0")
                else:
                    parts.append(f"x[{self._index(('v', n.lower()))}]")
            if parts[1] is None:
                return parts[0]
            return None
        if isinstance(e, Curr):
            return f"x[{self._index(('i', e.device.lower()))}]"
        if isinstance(e, Param):
            raise ExprError(f"unbound parameter {e.name}")
        return None

    def _index(self, key):
        try:
            return self.var_index[key]
        except KeyError:
            kind, name = key
            raise ExprError(f"unbound reference {kind.upper()}({name})") from None

    def emit(self, e: Expr) -> str:
        s = self.leaf(e)
        if s is not None:
            return s
        if e in self.memo:
            return self.memo[e]
        if isinstance(e, Volt):
            a = self.emit(Volt(e.node))
            b = self.emit(Volt(e.node2))
            code = f"{a} - {b}"
        elif isinstance(e, Neg):
            code = f"-{self.emit(e.arg)}"
        elif isinstance(e, BinOp):
            a = self.emit(e.left)
            b = self.emit(e.right)
            code = f"_div({a}, {b})" if e.op == "/" else f"{a} {e.op} {b}"
        elif isinstance(e, Call):
            args = ", ".join(self.emit(a) for a in e.args)
            code = f"_f_{e.func}({args})"
        else:
            raise TypeError(e)
        name = f"t{len(self.memo)}"
        self.memo[e] = name
        self.lines.append(f"    {name} = {code}")
        return name


def compile_exprs(exprs: Sequence[Expr],
                  var_index: Mapping[tuple[str, str], int]) -> Callable[[Sequence[float]], tuple]:
    """Compile ``exprs`` into ``fn(x) -> tuple`` of their values.

    ``var_index`` maps ``('v', node)`` / ``('i', device)`` keys (lowercase) to
    positions in ``x``. Identical subtrees are computed once.
    """
    gen = _Codegen(var_index)
    outs = [gen.emit(e) for e in exprs]
    body = "\n".join(gen.lines)
    ret = ", ".join(outs) + ("," if len(outs) == 1 else "")
    src = f"def _compiled(x):\n{body}\n    return ({ret})\n"
    namespace = {f"_f_{k}": v for k, v in _RUNTIME.items()}
    namespace["_div"] = _div
    exec(compile(src, "<gridflux-expr>", "exec"), namespace)
    fn = namespace["_compiled"]
    fn.source = src
    return fn
