"""Exact multivariate polynomials with rational coefficients."""

from __future__ import annotations

from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import expr as E


class NotPolynomialError(E.ExpressionError):
    pass


class Polynomial:
    """Sparse polynomial: exponent tuple -> nonzero Fraction.

    Instances are immutable; two polynomials over the same variables are
    equal iff their coefficient maps are identical.
    """

    __slots__ = ("vars", "_terms", "_hash")

    def __init__(self, vars: Sequence[str], terms: Mapping[tuple, Fraction] | None = None):
        self.vars = tuple(vars)
        clean = {}
        for mono, c in (terms or {}).items():
            if len(mono) != len(self.vars):
                raise ValueError(f"monomial {mono} does not match {len(self.vars)} variables")
            c = Fraction(c)
            if c:
                clean[tuple(mono)] = clean.get(tuple(mono), 0) + c
        self._terms = {m: c for m, c in clean.items() if c}
        self._hash = None

    # construction helpers
    @classmethod
    def constant(cls, vars: Sequence[str], c) -> "Polynomial":
        return cls(vars, {(0,) * len(vars): Fraction(c)})

    @classmethod
    def variable(cls, vars: Sequence[str], i: int) -> "Polynomial":
        mono = [0] * len(vars)
        mono[i] = 1
        return cls(vars, {tuple(mono): Fraction(1)})

    @property
    def terms(self) -> dict:
        return dict(self._terms)

    @property
    def nvars(self) -> int:
        return len(self.vars)

    def is_zero(self) -> bool:
        return not self._terms

    def degree(self) -> int:
        return max((sum(m) for m in self._terms), default=0)

    def constant_term(self) -> Fraction:
        return self._terms.get((0,) * self.nvars, Fraction(0))

    def is_constant(self) -> bool:
        return all(sum(m) == 0 for m in self._terms)

    def __eq__(self, other):
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self.vars == other.vars and self._terms == other._terms

    def __hash__(self):
        if self._hash is None:
            self._hash = hash((self.vars, frozenset(self._terms.items())))
        return self._hash

    def __repr__(self):
        return f"Polynomial({self.vars}, {self.to_string()!r})"

    def _coerce(self, other) -> "Polynomial":
        if isinstance(other, Polynomial):
            if other.vars != self.vars:
                raise ValueError(f"variable mismatch: {self.vars} vs {other.vars}")
            return other
        return Polynomial.constant(self.vars, other)

    def __add__(self, other):
        other = self._coerce(other)
        out = dict(self._terms)
        for m, c in other._terms.items():
            out[m] = out.get(m, 0) + c
        return Polynomial(self.vars, out)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial(self.vars, {m: -c for m, c in self._terms.items()})

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        other = self._coerce(other)
        out: dict[tuple, Fraction] = {}
        for m1, c1 in self._terms.items():
            for m2, c2 in other._terms.items():
                m = tuple(a + b for a, b in zip(m1, m2))
                out[m] = out.get(m, 0) + c1 * c2
        return Polynomial(self.vars, out)

    __rmul__ = __mul__

    def __pow__(self, n: int):
        if n < 0:
            raise ValueError("negative powers are not polynomial")
        result = Polynomial.constant(self.vars, 1)
        base = self
        while n:
            if n & 1:
                result = result * base
            base = base * base
            n >>= 1
        return result

    def derivative(self, i: int) -> "Polynomial":
        out = {}
        for m, c in self._terms.items():
            if m[i]:
                mm = list(m)
                mm[i] -= 1
                out[tuple(mm)] = c * m[i]
        return Polynomial(self.vars, out)

    def exact_divide_by_var(self, i: int) -> "Polynomial":
        """Divide by the i-th variable; raises if the remainder is nonzero."""
        out = {}
        for m, c in self._terms.items():
            if m[i] == 0:
                raise ArithmeticError(
                    f"nonzero remainder dividing by {self.vars[i]}: term {c}*{_mono_str(self.vars, m)}"
                )
            mm = list(m)
            mm[i] -= 1
            out[tuple(mm)] = c
        return Polynomial(self.vars, out)

    def compose(self, inner: Sequence["Polynomial"]) -> "Polynomial":
        """Substitute ``inner[i]`` for variable i."""
        if len(inner) != self.nvars:
            raise ValueError(f"need {self.nvars} substitutes, got {len(inner)}")
        target_vars = inner[0].vars if inner else self.vars
        powers: list[dict[int, Polynomial]] = [{0: Polynomial.constant(target_vars, 1)} for _ in inner]

        def power(i: int, k: int) -> Polynomial:
            cache = powers[i]
            if k not in cache:
                cache[k] = power(i, k - 1) * inner[i]
            return cache[k]

        out = Polynomial(target_vars)
        for m, c in sorted(self._terms.items()):
            term = Polynomial.constant(target_vars, c)
            for i, k in enumerate(m):
                if k:
                    term = term * power(i, k)
            out = out + term
        return out

    def evaluate(self, point: Sequence):
        vectorized = any(isinstance(p, np.ndarray) for p in point)
        total = 0
        for m, c in self._terms.items():
            term = float(c) if vectorized else c
            for x, k in zip(point, m):
                if k:
                    term = term * x**k
            total = total + term
        return total

    def sorted_terms(self) -> list[tuple[tuple, Fraction]]:
        # graded lexicographic, highest degree first
        return sorted(self._terms.items(), key=lambda mc: (-sum(mc[0]), [-k for k in mc[0]]))

    def to_expr(self) -> E.Expr:
        vs = E.variables(self.vars)
        result: E.Expr | None = None
        for m, c in self.sorted_terms():
            factors: list[E.Expr] = []
            for v, k in zip(vs, m):
                if k == 1:
                    factors.append(v)
                elif k > 1:
                    factors.append(E.Pow(v, k))
            mag = abs(c)
            if mag != 1 or not factors:
                factors.insert(0, E.Const(mag))
            mono = factors[0]
            for f in factors[1:]:
                mono = E.Mul(mono, f)
            if result is None:
                result = E.Neg(mono) if c < 0 else mono
            else:
                result = E.Sub(result, mono) if c < 0 else E.Add(result, mono)
        return result if result is not None else E.Const(0)

    def to_string(self) -> str:
        return E.to_string(self.to_expr())


def _mono_str(vars, m) -> str:
    parts = [v if k == 1 else f"{v}^{k}" for v, k in zip(vars, m) if k]
    return "*".join(parts) or "1"


def poly_canonical(e: E.Expr, vars: Sequence[str] | int | None = None) -> Polynomial:
    """Exact canonical polynomial of ``e``.

    ``vars`` gives the ordered variable list (or just its length); when
    omitted it is inferred from the variable nodes of ``e``. Float constants
    are converted exactly via ``Fraction(float)``.
    """
    names = _resolve_vars(e, vars)
    memo: dict[int, Polynomial] = {}

    def go(n: E.Expr) -> Polynomial:
        key = id(n)
        if key in memo:
            return memo[key]
        if isinstance(n, E.Const):
            r = Polynomial.constant(names, Fraction(n.value))
        elif isinstance(n, E.Var):
            if n.index >= len(names):
                raise E.ExpressionError(f"variable index {n.index} outside the variable list")
            r = Polynomial.variable(names, n.index)
        elif isinstance(n, E.Add):
            r = go(n.left) + go(n.right)
        elif isinstance(n, E.Sub):
            r = go(n.left) - go(n.right)
        elif isinstance(n, E.Mul):
            r = go(n.left) * go(n.right)
        elif isinstance(n, E.Div):
            den = go(n.right)
            if not den.is_constant():
                raise NotPolynomialError("division by a non-constant expression")
            c = den.constant_term()
            if c == 0:
                raise E.EvaluationError("division by zero")
            r = go(n.left) * Polynomial.constant(names, 1 / c)
        elif isinstance(n, E.Pow):
            r = go(n.base) ** n.exponent
        elif isinstance(n, E.Neg):
            r = -go(n.operand)
        else:
            kind = n.name if isinstance(n, E.Func) else "piecewise"
            raise NotPolynomialError(f"non-polynomial node: {kind}")
        memo[key] = r
        return r

    return go(e)


def _resolve_vars(e: E.Expr, vars) -> tuple[str, ...]:
    if vars is None:
        found = {n.index: n.name for n in E.walk(e) if isinstance(n, E.Var)}
        size = max(found, default=-1) + 1
        return tuple(found.get(i, f"x{i}") for i in range(size))
    if isinstance(vars, int):
        return tuple(f"x{i}" for i in range(vars))
    return tuple(vars)


def compose_polys(outer: Iterable[Polynomial], inner: Sequence[Polynomial]) -> list[Polynomial]:
    return [p.compose(inner) for p in outer]
