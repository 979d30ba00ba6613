"""Scalar expression trees over an ordered list of real variables.

Grammar accepted by :func:`parse_expression`::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | power
    power   := atom ('^' INT)*
    atom    := NUMBER | NAME | FUNC '(' expr ')' | piece | '(' expr ')'
    piece   := 'piece' '(' guard ':' expr (';' guard ':' expr)* ';' 'else' ':' expr ')'
    guard   := NAME ('<' | '<=' | '>' | '>=') SIGNED_NUMBER

Integer literals and ``a/b`` quotients of literals are exact rationals;
literals written with a decimal point or exponent are floats.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Sequence, Union

import numpy as np

Number = Union[Fraction, float]

FUNCTIONS = ("exp", "sin", "cos", "tan", "abs")
GUARD_OPS = ("<", "<=", ">", ">=")


class ExpressionError(ValueError):
    """Base class for expression parsing and evaluation failures."""


class ParseError(ExpressionError):
    def __init__(self, message: str, text: str = "", pos: int | None = None):
        self.pos = pos
        self.text = text
        if pos is not None:
            message = f"{message} at position {pos}"
        super().__init__(message)


class EvaluationError(ExpressionError):
    pass


class NotDifferentiableError(ExpressionError):
    pass


# ---------------------------------------------------------------------------
# AST


class Expr:
    """Base node. Nodes are immutable and compare structurally."""

    __slots__ = ()

    def __add__(self, other):
        return Add(self, as_expr(other))

    def __radd__(self, other):
        return Add(as_expr(other), self)

    def __sub__(self, other):
        return Sub(self, as_expr(other))

    def __rsub__(self, other):
        return Sub(as_expr(other), self)

    def __mul__(self, other):
        return Mul(self, as_expr(other))

    def __rmul__(self, other):
        return Mul(as_expr(other), self)

    def __truediv__(self, other):
        return Div(self, as_expr(other))

    def __rtruediv__(self, other):
        return Div(as_expr(other), self)

    def __pow__(self, n):
        return Pow(self, n)

    def __neg__(self):
        return Neg(self)

    def __str__(self):
        return to_string(self)


@dataclass(frozen=True, eq=True)
class Const(Expr):
    value: Number

    def __post_init__(self):
        v = self.value
        if isinstance(v, bool) or not isinstance(v, (int, Fraction, float)):
            raise TypeError(f"constant must be a real number, got {v!r}")
        if isinstance(v, int):
            object.__setattr__(self, "value", Fraction(v))
        elif isinstance(v, float) and not math.isfinite(v):
            raise ValueError("constants must be finite")

    @property
    def exact(self) -> bool:
        return isinstance(self.value, Fraction)


@dataclass(frozen=True, eq=True)
class Var(Expr):
    index: int
    name: str


@dataclass(frozen=True, eq=True)
class Add(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True, eq=True)
class Sub(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True, eq=True)
class Mul(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True, eq=True)
class Div(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True, eq=True)
class Pow(Expr):
    base: Expr
    exponent: int

    def __post_init__(self):
        if isinstance(self.exponent, bool) or not isinstance(self.exponent, int) or self.exponent < 0:
            raise ValueError(f"power exponent must be a non-negative integer, got {self.exponent!r}")


@dataclass(frozen=True, eq=True)
class Neg(Expr):
    operand: Expr


@dataclass(frozen=True, eq=True)
class Func(Expr):
    name: str
    arg: Expr

    def __post_init__(self):
        if self.name not in FUNCTIONS:
            raise ValueError(f"unknown function {self.name!r}")


@dataclass(frozen=True, eq=True)
class Piece(Expr):
    """``then`` where ``var <op> threshold`` holds, ``other`` elsewhere."""

    var: Var
    op: str
    threshold: Number
    then: Expr
    other: Expr

    def __post_init__(self):
        if self.op not in GUARD_OPS:
            raise ValueError(f"bad guard operator {self.op!r}")
        if isinstance(self.threshold, int):
            object.__setattr__(self, "threshold", Fraction(self.threshold))
        _check_piece_regions(self)


def as_expr(value) -> Expr:
    if isinstance(value, Expr):
        return value
    if isinstance(value, (int, Fraction, float)) and not isinstance(value, bool):
        return Const(value)
    raise TypeError(f"cannot convert {value!r} to an expression")


def exp(e) -> Expr:
    return Func("exp", as_expr(e))


def sin(e) -> Expr:
    return Func("sin", as_expr(e))


def cos(e) -> Expr:
    return Func("cos", as_expr(e))


def tan(e) -> Expr:
    return Func("tan", as_expr(e))


def fabs(e) -> Expr:
    return Func("abs", as_expr(e))


def piece(var: Var, op: str, threshold, then, other) -> Piece:
    return Piece(var, op, threshold, as_expr(then), as_expr(other))


def variables(names: Sequence[str]) -> tuple[Var, ...]:
    return tuple(Var(i, n) for i, n in enumerate(names))


# ---------------------------------------------------------------------------
# piecewise guard validation

# A region is (lo, lo_closed, hi, hi_closed) on one variable.
_FULL = (-math.inf, False, math.inf, False)


def _guard_split(op: str, c) -> tuple[tuple, tuple]:
    if op == "<=":
        return (-math.inf, False, c, True), (c, False, math.inf, False)
    if op == "<":
        return (-math.inf, False, c, False), (c, True, math.inf, False)
    if op == ">=":
        return (c, True, math.inf, False), (-math.inf, False, c, False)
    return (c, False, math.inf, False), (-math.inf, False, c, True)


def _intersect(a: tuple, b: tuple) -> tuple:
    lo, lo_c = (a[0], a[1]) if a[0] > b[0] else (b[0], b[1]) if b[0] > a[0] else (a[0], a[1] and b[1])
    hi, hi_c = (a[2], a[3]) if a[2] < b[2] else (b[2], b[3]) if b[2] < a[2] else (a[2], a[3] and b[3])
    return lo, lo_c, hi, hi_c


def _empty(r: tuple) -> bool:
    lo, lo_c, hi, hi_c = r
    return lo > hi or (lo == hi and not (lo_c and hi_c))


def _check_piece_regions(node: Piece, regions: dict | None = None) -> None:
    # Nested guards on the same variable must leave every branch reachable.
    regions = dict(regions or {})
    current = regions.get(node.var.index, _FULL)
    then_r, else_r = _guard_split(node.op, node.threshold)
    then_r, else_r = _intersect(current, then_r), _intersect(current, else_r)
    if _empty(then_r) or _empty(else_r):
        raise ParseError(
            f"malformed piecewise guard: branch of '{node.var.name} {node.op} {node.threshold}' is unreachable"
        )
    for branch, region in ((node.then, then_r), (node.other, else_r)):
        sub = dict(regions)
        sub[node.var.index] = region
        for inner in _direct_pieces(branch):
            _check_piece_regions(inner, sub)


def _direct_pieces(e: Expr):
    """Yield the outermost Piece nodes below ``e`` (not descending into them)."""
    stack = [e]
    while stack:
        n = stack.pop()
        if isinstance(n, Piece):
            yield n
        else:
            stack.extend(children(n))


def children(e: Expr) -> tuple[Expr, ...]:
    if isinstance(e, (Add, Sub, Mul, Div)):
        return (e.left, e.right)
    if isinstance(e, Pow):
        return (e.base,)
    if isinstance(e, Neg):
        return (e.operand,)
    if isinstance(e, Func):
        return (e.arg,)
    if isinstance(e, Piece):
        return (e.var, e.then, e.other)
    if isinstance(e, GuardedExpr):
        return (e.subject, e.then, e.other)
    return ()


def walk(e: Expr):
    """Iterate over distinct nodes of the (possibly shared) tree."""
    seen: set[int] = set()
    stack = [e]
    while stack:
        n = stack.pop()
        if id(n) in seen:
            continue
        seen.add(id(n))
        yield n
        stack.extend(children(n))


def max_var_index(e: Expr) -> int:
    return max((n.index for n in walk(e) if isinstance(n, Var)), default=-1)


def is_polynomial(e: Expr) -> bool:
    for n in walk(e):
        if isinstance(n, (Func, Piece, GuardedExpr)):
            return False
        if isinstance(n, Div) and not _is_constant(n.right):
            return False
    return True


def has_float_constants(e: Expr) -> bool:
    return any(isinstance(n, Const) and not n.exact for n in walk(e))


def _is_constant(e: Expr) -> bool:
    return not any(isinstance(n, Var) for n in walk(e))


# ---------------------------------------------------------------------------
# tokenizer / parser

_TOKEN = re.compile(
    r"\s*(?:"
    r"(?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op><=|>=|[-+*/^():;<>])"
    r")"
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    n = len(text)
    while pos < n:
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            raise ParseError(f"unexpected character {text[pos]!r}", text, pos)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", n))
    return tokens


def _number(literal: str) -> Number:
    if any(c in literal for c in ".eE"):
        return float(literal)
    return Fraction(int(literal))


class _Parser:
    def __init__(self, text: str, names: Sequence[str]):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0
        self.vars = {name: Var(i, name) for i, name in enumerate(names)}
        if len(self.vars) != len(names):
            raise ParseError("duplicate variable names")
        for name in names:
            if name in FUNCTIONS or name in ("piece", "else"):
                raise ParseError(f"reserved word used as variable name: {name!r}")

    @property
    def tok(self):
        return self.tokens[self.i]

    def error(self, message: str):
        raise ParseError(message, self.text, self.tok[2])

    def advance(self):
        t = self.tokens[self.i]
        self.i += 1
        return t

    def expect(self, value: str):
        if self.tok[1] != value or self.tok[0] not in ("op", "name"):
            self.error(f"expected {value!r}, found {self.tok[1] or 'end of input'!r}")
        return self.advance()

    def parse(self) -> Expr:
        e = self.expr()
        if self.tok[0] != "end":
            self.error(f"unexpected token {self.tok[1]!r}")
        return e

    def expr(self) -> Expr:
        e = self.term()
        while self.tok[0] == "op" and self.tok[1] in "+-":
            op = self.advance()[1]
            rhs = self.term()
            e = Add(e, rhs) if op == "+" else Sub(e, rhs)
        return e

    def term(self) -> Expr:
        e = self.unary()
        while self.tok[0] == "op" and self.tok[1] in "*/":
            _, op, pos = self.advance()
            rhs = self.unary()
            if op == "*":
                e = Mul(e, rhs)
            elif (
                isinstance(e, Const) and isinstance(rhs, Const)
                and e.exact and rhs.exact
            ):
                if rhs.value == 0:
                    raise ParseError("division by zero in constant", self.text, pos)
                e = Const(e.value / rhs.value)
            else:
                e = Div(e, rhs)
        return e

    def unary(self) -> Expr:
        if self.tok[0] == "op" and self.tok[1] == "-":
            self.advance()
            return Neg(self.unary())
        return self.power()

    def power(self) -> Expr:
        e = self.atom()
        while self.tok[0] == "op" and self.tok[1] == "^":
            self.advance()
            kind, value, _ = self.tok
            if kind != "num" or not value.isdigit():
                self.error("exponent must be a non-negative integer literal")
            self.advance()
            e = Pow(e, int(value))
        return e

    def atom(self) -> Expr:
        kind, value, _ = self.tok
        if kind == "num":
            self.advance()
            return Const(_number(value))
        if kind == "op" and value == "(":
            self.advance()
            e = self.expr()
            self.expect(")")
            return e
        if kind == "name":
            if value == "piece":
                return self.piece()
            if value in FUNCTIONS:
                self.advance()
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Func(value, arg)
            if value in self.vars:
                self.advance()
                return self.vars[value]
            self.error(f"unknown variable name {value!r}")
        self.error(f"unexpected token {value or 'end of input'!r}")

    def signed_number(self) -> Number:
        sign = 1
        if self.tok[0] == "op" and self.tok[1] in "+-":
            sign = -1 if self.advance()[1] == "-" else 1
        kind, value, _ = self.tok
        if kind != "num":
            self.error("malformed piecewise guard: expected a numeric threshold")
        self.advance()
        v = _number(value)
        if self.tok[0] == "op" and self.tok[1] == "/":
            self.advance()
            kind, den, pos = self.tok
            if kind != "num":
                self.error("malformed piecewise guard: expected denominator")
            self.advance()
            d = _number(den)
            if d == 0:
                raise ParseError("division by zero in constant", self.text, pos)
            v = v / d
        return sign * v

    def piece(self) -> Expr:
        self.advance()
        self.expect("(")
        clauses = []
        while True:
            kind, value, _ = self.tok
            if kind == "name" and value == "else":
                self.advance()
                self.expect(":")
                other = self.expr()
                self.expect(")")
                break
            if kind != "name" or value not in self.vars:
                self.error("malformed piecewise guard: expected a variable name")
            var = self.vars[self.advance()[1]]
            if self.tok[0] != "op" or self.tok[1] not in GUARD_OPS:
                self.error("malformed piecewise guard: expected one of < <= > >=")
            op = self.advance()[1]
            threshold = self.signed_number()
            self.expect(":")
            clauses.append((var, op, threshold, self.expr()))
            self.expect(";")
        if not clauses:
            self.error("malformed piecewise guard: piece needs at least one guarded clause")
        e = other
        for var, op, threshold, then in reversed(clauses):
            e = Piece(var, op, threshold, then, e)
        return e


def parse_expression(text: str, names: Sequence[str]) -> Expr:
    """Parse ``text`` over the ordered variable ``names``."""
    return _Parser(text, list(names)).parse()


# ---------------------------------------------------------------------------
# printer

_PREC = {Add: 1, Sub: 1, Mul: 2, Div: 2, Neg: 3, Pow: 4}


def _fmt_number(v: Number) -> str:
    if isinstance(v, Fraction):
        return str(v.numerator) if v.denominator == 1 else f"{v.numerator}/{v.denominator}"
    return repr(float(v))


def _prec(e: Expr) -> int:
    if isinstance(e, Const):
        v = e.value
        if v < 0 or (isinstance(v, Fraction) and v.denominator != 1):
            return 0
        return 5
    return _PREC.get(type(e), 5)


def to_string(e: Expr) -> str:
    memo: dict[int, str] = {}

    def wrap(child: Expr, min_prec: int) -> str:
        s = go(child)
        return f"({s})" if _prec(child) < min_prec else s

    def go(n: Expr) -> str:
        key = id(n)
        if key in memo:
            return memo[key]
        if isinstance(n, Const):
            s = _fmt_number(n.value)
        elif isinstance(n, Var):
            s = n.name
        elif isinstance(n, Add):
            s = f"{wrap(n.left, 1)} + {wrap(n.right, 1)}"
        elif isinstance(n, Sub):
            s = f"{wrap(n.left, 1)} - {wrap(n.right, 2)}"
        elif isinstance(n, Mul):
            s = f"{wrap(n.left, 2)}*{wrap(n.right, 3)}"
        elif isinstance(n, Div):
            s = f"{wrap(n.left, 2)}/{wrap(n.right, 3)}"
        elif isinstance(n, Neg):
            s = f"-{wrap(n.operand, 3)}"
        elif isinstance(n, Pow):
            s = f"{wrap(n.base, 5)}^{n.exponent}"
        elif isinstance(n, Func):
            s = f"{n.name}({go(n.arg)})"
        elif isinstance(n, Piece):
            clauses = []
            cur: Expr = n
            while isinstance(cur, Piece):
                clauses.append(f"{cur.var.name} {cur.op} {_fmt_number(cur.threshold)} : {go(cur.then)}")
                cur = cur.other
            s = f"piece({' ; '.join(clauses)} ; else : {go(cur)})"
        elif isinstance(n, GuardedExpr):
            raise ExpressionError("a guard on a composite expression has no form in the expression grammar")
        else:  # pragma: no cover
            raise TypeError(type(n))
        memo[key] = s
        return s

    return go(e)


# ---------------------------------------------------------------------------
# evaluation

_NP_FUNCS = {"exp": np.exp, "sin": np.sin, "cos": np.cos, "tan": np.tan, "abs": np.abs}
_MATH_FUNCS = {"exp": math.exp, "sin": math.sin, "cos": math.cos, "tan": math.tan}
_GUARDS = {
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    ">": lambda a, b: a > b,
    ">=": lambda a, b: a >= b,
}


def eval_expr(e: Expr, point: Sequence):
    """Evaluate ``e`` at ``point``.

    Coordinates may be Fractions (exact arithmetic as far as the node types
    allow), floats, or numpy arrays (vectorized; invalid operations yield
    inf/nan instead of raising).
    """
    vectorized = any(isinstance(p, np.ndarray) for p in point)
    memo: dict[int, object] = {}

    def go(n: Expr):
        key = id(n)
        if key in memo:
            return memo[key]
        if isinstance(n, Const):
            r = float(n.value) if vectorized else n.value
        elif isinstance(n, Var):
            if n.index >= len(point):
                raise EvaluationError(f"variable {n.name!r} has no coordinate in a point of length {len(point)}")
            r = point[n.index]
        elif isinstance(n, Add):
            r = go(n.left) + go(n.right)
        elif isinstance(n, Sub):
            r = go(n.left) - go(n.right)
        elif isinstance(n, Mul):
            r = go(n.left) * go(n.right)
        elif isinstance(n, Div):
            num, den = go(n.left), go(n.right)
            if not isinstance(den, np.ndarray) and den == 0:
                if vectorized:
                    r = np.divide(num, float(den))
                else:
                    raise EvaluationError("division by zero")
            else:
                r = num / den
        elif isinstance(n, Pow):
            r = go(n.base) ** n.exponent
        elif isinstance(n, Neg):
            r = -go(n.operand)
        elif isinstance(n, Func):
            a = go(n.arg)
            if isinstance(a, np.ndarray):
                r = _NP_FUNCS[n.name](a)
            elif n.name == "abs":
                r = abs(a)
            else:
                try:
                    r = _MATH_FUNCS[n.name](float(a))
                except OverflowError:
                    r = math.inf
        elif isinstance(n, Piece):
            v = go(n.var)
            cond = _GUARDS[n.op](v, float(n.threshold) if vectorized else n.threshold)
            if isinstance(cond, np.ndarray):
                r = np.where(cond, go(n.then), go(n.other))
            else:
                r = go(n.then) if cond else go(n.other)
        elif isinstance(n, GuardedExpr):
            r = _eval_guarded(n, go)
        else:  # pragma: no cover
            raise TypeError(type(n))
        memo[key] = r
        return r

    if vectorized:
        with np.errstate(all="ignore"):
            return go(e)
    return go(e)


def compile_expr(e: Expr) -> Callable:
    """Return ``point -> value`` closure over ``e`` (a thin eval wrapper)."""
    return lambda point: eval_expr(e, point)


# ---------------------------------------------------------------------------
# composition and differentiation


def compose_symbolic(outer: Expr, inner: Sequence[Expr]) -> Expr:
    """Substitute ``inner[i]`` for every variable of index ``i`` in ``outer``."""
    inner = [as_expr(x) for x in inner]
    memo: dict[int, Expr] = {}

    def go(n: Expr) -> Expr:
        key = id(n)
        if key in memo:
            return memo[key]
        if isinstance(n, Const):
            r = n
        elif isinstance(n, Var):
            if n.index >= len(inner):
                raise ExpressionError(f"no substitute given for variable {n.name!r}")
            r = inner[n.index]
        elif isinstance(n, (Add, Sub, Mul, Div)):
            r = type(n)(go(n.left), go(n.right))
        elif isinstance(n, Pow):
            r = Pow(go(n.base), n.exponent)
        elif isinstance(n, Neg):
            r = Neg(go(n.operand))
        elif isinstance(n, Func):
            r = Func(n.name, go(n.arg))
        elif isinstance(n, Piece):
            # Guards test a single variable against a constant; after
            # substitution the guard variable must still be a variable.
            target = inner[n.var.index]
            if isinstance(target, Var):
                r = Piece(target, n.op, n.threshold, go(n.then), go(n.other))
            else:
                r = GuardedExpr(target, n.op, n.threshold, go(n.then), go(n.other))
        else:
            r = n.rebuild(go) if isinstance(n, GuardedExpr) else n
        memo[key] = r
        return r

    return go(outer)


@dataclass(frozen=True, eq=True)
class GuardedExpr(Expr):
    """Piece whose guard tests a composite expression (only made by composition)."""

    subject: Expr
    op: str
    threshold: Number
    then: Expr
    other: Expr

    def rebuild(self, fn):
        return GuardedExpr(fn(self.subject), self.op, self.threshold, fn(self.then), fn(self.other))


def _zero(e: Expr) -> bool:
    return isinstance(e, Const) and e.value == 0


def _one(e: Expr) -> bool:
    return isinstance(e, Const) and e.value == 1


def _add(a: Expr, b: Expr) -> Expr:
    if _zero(a):
        return b
    if _zero(b):
        return a
    return Add(a, b)


def _sub(a: Expr, b: Expr) -> Expr:
    if _zero(b):
        return a
    if _zero(a):
        return Neg(b)
    return Sub(a, b)


def _mul(a: Expr, b: Expr) -> Expr:
    if _zero(a) or _zero(b):
        return Const(0)
    if _one(a):
        return b
    if _one(b):
        return a
    return Mul(a, b)


def _div(a: Expr, b: Expr) -> Expr:
    if _zero(a):
        return Const(0)
    if _one(b):
        return a
    return Div(a, b)


def _neg(a: Expr) -> Expr:
    return Const(0) if _zero(a) else Neg(a)


def derivative(e: Expr, index: int) -> Expr:
    """Symbolic partial derivative with respect to variable ``index``."""
    memo: dict[int, Expr] = {}

    def d(n: Expr) -> Expr:
        key = id(n)
        if key in memo:
            return memo[key]
        if isinstance(n, Const):
            r = Const(0)
        elif isinstance(n, Var):
            r = Const(1 if n.index == index else 0)
        elif isinstance(n, Add):
            r = _add(d(n.left), d(n.right))
        elif isinstance(n, Sub):
            r = _sub(d(n.left), d(n.right))
        elif isinstance(n, Mul):
            r = _add(_mul(d(n.left), n.right), _mul(n.left, d(n.right)))
        elif isinstance(n, Div):
            du, dv = d(n.left), d(n.right)
            if _zero(dv):
                r = _div(du, n.right)
            else:
                r = _div(_sub(_mul(du, n.right), _mul(n.left, dv)), Pow(n.right, 2))
        elif isinstance(n, Pow):
            k = n.exponent
            if k == 0:
                r = Const(0)
            else:
                base = n.base if k == 2 else Pow(n.base, k - 1)
                r = _mul(_mul(Const(k), base if k > 1 else Const(1)), d(n.base))
        elif isinstance(n, Neg):
            r = _neg(d(n.operand))
        elif isinstance(n, Func):
            du = d(n.arg)
            if n.name == "exp":
                outer = n
            elif n.name == "sin":
                outer = Func("cos", n.arg)
            elif n.name == "cos":
                outer = Neg(Func("sin", n.arg))
            elif n.name == "tan":
                outer = Add(Const(1), Pow(n, 2))
            else:
                raise NotDifferentiableError("abs is not symbolically differentiable")
            r = _mul(outer, du)
        elif isinstance(n, (Piece, GuardedExpr)):
            raise NotDifferentiableError("piecewise nodes are not symbolically differentiable")
        else:  # pragma: no cover
            raise TypeError(type(n))
        memo[key] = r
        return r

    return d(e)


def grad(e: Expr, nvars: int, mode: str = "symbolic", step: float = 1e-5):
    """Gradient of ``e`` over ``nvars`` variables.

    ``mode="symbolic"`` returns a tuple of derivative expressions.
    ``mode="numeric"`` returns a function mapping a point to the central
    difference gradient (numpy array). Near kinks of ``abs`` or at piecewise
    boundaries numeric gradients are unreliable; that is the caller's risk.
    """
    if mode == "symbolic":
        return tuple(derivative(e, i) for i in range(nvars))
    if mode != "numeric":
        raise ValueError(f"unknown gradient mode {mode!r}")

    def numeric(point):
        point = [p if isinstance(p, np.ndarray) else float(p) for p in point]
        out = []
        for i in range(nvars):
            hi = list(point)
            lo = list(point)
            hi[i] = point[i] + step
            lo[i] = point[i] - step
            out.append((eval_expr(e, hi) - eval_expr(e, lo)) / (2 * step))
        return np.array(out)

    return numeric


def _eval_guarded(n: GuardedExpr, go):
    v = go(n.subject)
    threshold = float(n.threshold) if isinstance(v, np.ndarray) else n.threshold
    cond = _GUARDS[n.op](v, threshold)
    if isinstance(cond, np.ndarray):
        return np.where(cond, go(n.then), go(n.other))
    return go(n.then) if cond else go(n.other)
