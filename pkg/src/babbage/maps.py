"""Self-maps of R^m as vectors of expressions, plus the builtin families."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence
from urllib.parse import parse_qsl

import numpy as np

from . import expr as E
from .poly import NotPolynomialError, Polynomial, poly_canonical
from .sampling import Window, as_window


class MapError(ValueError):
    pass


@dataclass(frozen=True)
class MapSpec:
    vars: tuple[str, ...]
    components: tuple[E.Expr, ...]
    window: Window | None = None
    tag: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "vars", tuple(self.vars))
        object.__setattr__(self, "components", tuple(E.as_expr(c) for c in self.components))
        if not self.vars:
            raise MapError("a map needs at least one variable")
        if len(set(self.vars)) != len(self.vars):
            raise MapError(f"duplicate variable names in {self.vars}")
        if len(self.components) != len(self.vars):
            raise MapError(
                f"component count {len(self.components)} does not match dimension {len(self.vars)}"
            )
        for c in self.components:
            for n in E.walk(c):
                if isinstance(n, E.Var) and (n.index >= len(self.vars) or self.vars[n.index] != n.name):
                    raise MapError(f"component references undeclared variable {n.name!r}")
        if self.window is not None:
            w = as_window(self.window)
            if len(w) != len(self.vars):
                raise MapError(f"window has {len(w)} axes for a {len(self.vars)}-dimensional map")
            object.__setattr__(self, "window", w)

    @property
    def dim(self) -> int:
        return len(self.vars)

    @classmethod
    def from_strings(cls, components: Sequence[str], vars: Sequence[str], window=None, tag=None) -> "MapSpec":
        exprs = tuple(E.parse_expression(c, vars) for c in components)
        return cls(tuple(vars), exprs, window, tag)

    def with_window(self, window) -> "MapSpec":
        return MapSpec(self.vars, self.components, window, self.tag)

    def component_strings(self) -> list[str]:
        return [E.to_string(c) for c in self.components]

    def is_polynomial(self) -> bool:
        return all(E.is_polynomial(c) for c in self.components)

    def has_float_constants(self) -> bool:
        return any(E.has_float_constants(c) for c in self.components)

    def polynomials(self) -> list[Polynomial]:
        return [poly_canonical(c, self.vars) for c in self.components]

    def degree(self) -> int:
        return max(p.degree() for p in self.polynomials())

    # evaluation

    def apply(self, x: Sequence):
        if len(x) != self.dim:
            raise MapError(f"point of length {len(x)} for a {self.dim}-dimensional map")
        return tuple(E.eval_expr(c, list(x)) for c in self.components)

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """Vectorized evaluation on an (N, m) array; returns (N, m)."""
        points = np.asarray(points, dtype=float)
        if points.ndim != 2 or points.shape[1] != self.dim:
            raise MapError(f"expected an (N, {self.dim}) array, got shape {points.shape}")
        cols = [points[:, i] for i in range(self.dim)]
        out = np.empty_like(points)
        for i, c in enumerate(self.components):
            out[:, i] = np.broadcast_to(np.asarray(E.eval_expr(c, cols), dtype=float), (points.shape[0],))
        return out

    def iterate_points(self, points: np.ndarray, n: int) -> np.ndarray:
        out = np.asarray(points, dtype=float)
        for _ in range(n):
            out = self.evaluate(out)
        return out

    # composition

    def compose(self, inner: "MapSpec") -> "MapSpec":
        """``self ∘ inner``, exact polynomial when both are polynomial."""
        if inner.dim != self.dim:
            raise MapError("composition needs maps of equal dimension")
        if self.is_polynomial() and inner.is_polynomial():
            outer_p = [poly_canonical(c, self.vars) for c in self.components]
            inner_p = [poly_canonical(c, self.vars) for c in inner.components]
            comps = tuple(p.compose(inner_p).to_expr() for p in outer_p)
        else:
            comps = tuple(E.compose_symbolic(c, inner.components) for c in self.components)
        return MapSpec(self.vars, comps, self.window or inner.window)

    def power(self, n: int) -> "MapSpec":
        if n < 0:
            raise MapError("negative map powers are undefined")
        result = identity_map(self.dim, self.vars, self.window)
        for _ in range(n):
            result = self.compose(result)
        return result


def identity_map(dim: int, vars: Sequence[str] | None = None, window=None) -> MapSpec:
    vars = tuple(vars) if vars is not None else default_vars(dim)
    return MapSpec(vars, E.variables(vars), window, tag=f"identity?dim={dim}")


def default_vars(dim: int) -> tuple[str, ...]:
    if dim == 1:
        return ("x",)
    if dim == 2:
        return ("x", "y")
    return tuple(f"x{i + 1}" for i in range(dim))


def apply_map(f: MapSpec, x: Sequence):
    return f.apply(x)


def iterate_map(f: MapSpec, x: Sequence, n: int):
    if n < 0:
        raise MapError("iteration count must be non-negative")
    out = tuple(x)
    if len(out) != f.dim:
        raise MapError(f"point of length {len(out)} for a {f.dim}-dimensional map")
    for _ in range(n):
        out = f.apply(out)
    return out


def first_factor(f: MapSpec) -> MapSpec:
    """The 1D map x -> f_1(x, 0, ...) when f_1 depends only on the first variable."""
    c = f.components[0]
    if any(isinstance(n, E.Var) and n.index != 0 for n in E.walk(c)):
        raise MapError("first component depends on other variables")
    window = (f.window[0],) if f.window else None
    return MapSpec((f.vars[0],), (c,), window)


def linear_map(matrix: Sequence[Sequence], vars: Sequence[str] | None = None, window=None, tag=None) -> MapSpec:
    m = len(matrix)
    vars = tuple(vars) if vars is not None else default_vars(m)
    vs = E.variables(vars)
    comps = []
    for row in matrix:
        if len(row) != m:
            raise MapError("matrix must be square")
        acc: E.Expr | None = None
        for v, a in zip(vs, row):
            if a == 0:
                continue
            if a == 1 or a == -1:
                term = v
            else:
                term = E.Mul(E.Const(abs(a)), v)
            if acc is None:
                acc = term if a > 0 else E.Neg(term)
            else:
                acc = E.Add(acc, term) if a > 0 else E.Sub(acc, term)
        comps.append(acc if acc is not None else E.Const(0))
    return MapSpec(vars, tuple(comps), window, tag)


# ---------------------------------------------------------------------------
# builtin families


@dataclass(frozen=True)
class BuiltinParams:
    family: str
    k: int | None = None
    i: int | None = None
    l: int | None = None
    bits: str | None = None
    angle: Fraction | None = None  # multiple of 2*pi
    reflect: bool = False
    blocks: tuple[str, ...] = field(default_factory=tuple)
    dim: int | None = None


FAMILIES = (
    "identity",
    "f_lambda_cont",
    "f_lambda_smooth",
    "poly_family",
    "exp_collapse",
    "hw_simple",
    "hw_sexed",
    "jordan",
    "rot_refl",
)

DEFAULT_BITS = "1101"


def parse_builtin_uri(uri: str) -> BuiltinParams:
    """Parse ``builtin:<family>?key=value&...``."""
    text = uri[len("builtin:"):] if uri.startswith("builtin:") else uri
    family, _, query = text.partition("?")
    raw = dict(parse_qsl(query, keep_blank_values=True, strict_parsing=False))
    known = {"k", "i", "l", "bits", "angle", "reflect", "blocks", "dim"}
    unknown = set(raw) - known
    if unknown:
        raise MapError(f"unknown builtin parameter(s): {', '.join(sorted(unknown))}")
    try:
        kw: dict = {}
        for key in ("k", "i", "l", "dim"):
            if key in raw:
                kw[key] = int(raw[key])
        if "bits" in raw:
            kw["bits"] = raw["bits"]
        if "angle" in raw:
            kw["angle"] = Fraction(raw["angle"])
        if "reflect" in raw:
            kw["reflect"] = raw["reflect"].lower() in ("1", "true", "yes")
        if "blocks" in raw:
            kw["blocks"] = tuple(b for b in raw["blocks"].split(",") if b)
    except ValueError as exc:
        raise MapError(f"invalid builtin parameter: {exc}") from None
    return BuiltinParams(family, **kw)


def builtin_uri(params: BuiltinParams) -> str:
    parts = []
    for key in ("k", "i", "l", "dim"):
        v = getattr(params, key)
        if v is not None:
            parts.append(f"{key}={v}")
    if params.bits is not None:
        parts.append(f"bits={params.bits}")
    if params.angle is not None:
        parts.append(f"angle={params.angle}")
    if params.reflect:
        parts.append("reflect=1")
    if params.blocks:
        parts.append("blocks=" + ",".join(params.blocks))
    return f"builtin:{params.family}" + ("?" + "&".join(parts) if parts else "")


def builtin_map(params: BuiltinParams | str) -> MapSpec:
    if isinstance(params, str):
        params = parse_builtin_uri(params)
    fam = params.family
    if fam not in FAMILIES:
        raise MapError(f"unknown builtin family {fam!r}")
    tag = builtin_uri(params)
    if fam == "identity":
        dim = params.dim or 1
        if dim < 1:
            raise MapError("identity needs dim >= 1")
        f = identity_map(dim)
    elif fam == "f_lambda_cont":
        f = f_lambda_cont(_bits(params))
    elif fam == "f_lambda_smooth":
        f = f_lambda_smooth(_bits(params))
    elif fam == "poly_family":
        if params.i is None or params.i < 1:
            raise MapError("poly_family needs i >= 1")
        f = poly_family(params.i)
    elif fam == "exp_collapse":
        f = exp_collapse()
    elif fam == "hw_simple":
        f = hw_simple(_hw_k(params))
    elif fam == "hw_sexed":
        f = hw_sexed(_hw_k(params))
    elif fam == "jordan":
        if not params.blocks:
            raise MapError("jordan needs a nonempty block list")
        f = jordan(params.blocks)
    else:
        if params.reflect:
            f = linear_map([[1, 0], [0, -1]])
        else:
            f = rotation(params.angle if params.angle is not None else Fraction(0))
    return MapSpec(f.vars, f.components, f.window, tag)


def _bits(params: BuiltinParams) -> str:
    bits = params.bits if params.bits is not None else DEFAULT_BITS
    if not bits or set(bits) - {"0", "1"}:
        raise MapError(f"bits must be a nonempty binary string, got {bits!r}")
    return bits


def _hw_k(params: BuiltinParams) -> int:
    if params.k is None or params.k < 2:
        raise MapError("Hardy-Weinberg families need k >= 2")
    return params.k


def _nest(clauses: list[tuple[str, Fraction, E.Expr]], last: E.Expr, var: E.Var) -> E.Expr:
    out = last
    for op, threshold, value in reversed(clauses):
        out = E.Piece(var, op, threshold, value, out)
    return out


def f_lambda_cont(bits: str) -> MapSpec:
    """Continuous idempotent of the real line indexed by a binary string.

    f = 0 on x <= 0, f = x on [0, 1], f(1) = 1, f(m + 1) = bits[m - 1]
    (0 past the prefix), linear between integers with different values and
    a parabola through 1/2 between integers with equal values.
    """
    x = E.Var(0, "x")
    L = len(bits)

    def value(m: int) -> int:
        if m <= 0:
            return 0
        if m == 1:
            return 1
        return int(bits[m - 2]) if m - 2 < L else 0

    clauses: list[tuple[str, Fraction, E.Expr]] = [
        ("<=", Fraction(0), E.Const(0)),
        ("<=", Fraction(1), x),
    ]
    for m in range(1, L + 2):
        v0, v1 = value(m), value(m + 1)
        t = x - m
        if v0 != v1:
            seg = E.Const(v0) + E.Const(v1 - v0) * t if v0 else t
        else:
            seg = E.Const(v0) + E.Const(Fraction(1, 2) - v0) * (E.Const(4) * t * (E.Const(1) - t))
        clauses.append(("<=", Fraction(m + 1), seg))
    tail = E.Const(Fraction(1, 2)) * E.Pow(E.sin(E.Const(math.pi) * x), 2)
    return MapSpec(("x",), (_nest(clauses, tail, x),), ((-2.0, float(L + 4)),))


def _sigma(s: E.Expr) -> E.Expr:
    return E.exp(E.Neg(E.Const(1) / s))


def f_lambda_smooth(bits: str) -> MapSpec:
    """Smooth map with image [-1, 0] and f^3 = f^2, indexed by a binary string.

    f = -exp(1/(x+1)) for x < -1, 0 on [-1, 0], f(m) = -bits[m - 1] at
    positive integers (0 past the prefix), flat-joined transitions between.
    """
    x = E.Var(0, "x")
    L = len(bits)

    def value(m: int) -> int:
        if m <= 0 or m > L:
            return 0
        return -int(bits[m - 1])

    clauses: list[tuple[str, Fraction, E.Expr]] = [
        ("<", Fraction(-1), E.Neg(E.exp(E.Const(1) / (x + 1)))),
        ("<=", Fraction(0), E.Const(0)),
    ]
    for m in range(0, L + 1):
        v0, v1 = value(m), value(m + 1)
        t = x - m
        if v0 != v1:
            s0, s1 = _sigma(t), _sigma(E.Const(1) - t)
            seg = E.Const(v0) + E.Const(v1 - v0) * (s0 / (s0 + s1))
        else:
            bump = E.exp(E.Const(4) - E.Const(1) / (t * (E.Const(1) - t)))
            sign = Fraction(-1, 2) if v0 == 0 else Fraction(1, 2)
            seg = E.Const(v0) + E.Const(sign) * bump
        clauses.append(("<", Fraction(m + 1), seg))
        clauses.append(("<=", Fraction(m + 1), E.Const(v1)))
    s2 = E.Pow(E.sin(E.Const(math.pi) * x), 2)
    tail = E.Const(Fraction(-1, 2)) * E.exp(E.Const(4) - E.Const(4) / s2)
    return MapSpec(("x",), (_nest(clauses, tail, x),), ((-10.0, 10.0),))


def poly_family(i: int) -> MapSpec:
    """(x * prod_{j=1..i} (j - y)/j, 0): idempotent, zero set is one vertical and i horizontal lines."""
    x, y = E.variables(("x", "y"))
    g: E.Expr = x
    for j in range(1, i + 1):
        factor = E.Const(j) - y
        g = g * (factor / j if j != 1 else factor)
    return MapSpec(("x", "y"), (g, E.Const(0)), ((-5.0, 5.0), (-5.0, 5.0)))


def exp_collapse() -> MapSpec:
    x = E.Var(0, "x")
    first = E.Piece(x, "<=", Fraction(0), E.Const(0), E.Neg(E.exp(E.Neg(E.Const(1) / x))))
    return MapSpec(("x", "y"), (first, E.Const(0)), ((-5.0, 5.0), (-5.0, 5.0)))


# Hardy-Weinberg

def hw_pairs(k: int) -> list[tuple[int, int]]:
    """Coordinate pairs (i, j), i <= j, excluding the implied (k, k)."""
    return [(i, j) for i in range(1, k + 1) for j in range(i, k + 1) if (i, j) != (k, k)]


def hw_vars(k: int, prefix: str = "x") -> tuple[str, ...]:
    return tuple(f"{prefix}{i}_{j}" for i, j in hw_pairs(k))


def hw_frequencies(k: int, coords: dict[tuple[int, int], E.Expr]) -> list[E.Expr]:
    """Allele frequencies p_1..p_k; p_k is one minus the others."""
    freqs = []
    for i in range(1, k):
        acc: E.Expr = coords[(i, i)]
        for j in range(1, k + 1):
            if j != i:
                acc = acc + coords[(min(i, j), max(i, j))] / 2
        freqs.append(acc)
    rest: E.Expr = E.Const(1)
    for p in freqs:
        rest = rest - p
    freqs.append(rest)
    return freqs


def _hw_coords(k: int, vars: Sequence[E.Var]) -> dict[tuple[int, int], E.Expr]:
    return dict(zip(hw_pairs(k), vars))


def hw_simple(k: int) -> MapSpec:
    names = hw_vars(k)
    vs = E.variables(names)
    p = hw_frequencies(k, _hw_coords(k, vs))
    comps = []
    for i, j in hw_pairs(k):
        comps.append(E.Pow(p[i - 1], 2) if i == j else E.Const(2) * p[i - 1] * p[j - 1])
    return MapSpec(names, tuple(comps), tuple((0.0, 1.0) for _ in names))


def hw_sexed(k: int) -> MapSpec:
    m_names, f_names = hw_vars(k, "m"), hw_vars(k, "f")
    names = m_names + f_names
    vs = E.variables(names)
    d = len(m_names)
    pm = hw_frequencies(k, _hw_coords(k, vs[:d]))
    pf = hw_frequencies(k, _hw_coords(k, vs[d:]))
    comps = []
    for i, j in hw_pairs(k):
        if i == j:
            comps.append(pm[i - 1] * pf[i - 1])
        else:
            comps.append(pm[i - 1] * pf[j - 1] + pm[j - 1] * pf[i - 1])
    return MapSpec(names, tuple(comps + comps), tuple((0.0, 1.0) for _ in names))


# linear families

def _cos_sin(turns: Fraction):
    """cos and sin of 2*pi*turns, exact at multiples of a quarter turn."""
    turns = turns - math.floor(turns)
    quarter = turns * 4
    if quarter.denominator == 1:
        return [(1, 0), (0, 1), (-1, 0), (0, -1)][int(quarter)]
    theta = 2 * math.pi * float(turns)
    return math.cos(theta), math.sin(theta)


def rotation(turns: Fraction) -> MapSpec:
    c, s = _cos_sin(Fraction(turns))
    return linear_map([[c, -s], [s, c]])


def jordan_matrix(blocks: Sequence[str]) -> list[list]:
    """Block-diagonal matrix from tokens '1', '-1', 'R<p>/<q>', 'N<l>'."""
    mats = []
    for tok in blocks:
        tok = tok.strip()
        if tok in ("1", "+1"):
            mats.append([[1]])
        elif tok == "-1":
            mats.append([[-1]])
        elif tok[:1] in ("R", "r"):
            try:
                turns = Fraction(tok[1:])
            except ValueError:
                raise MapError(f"bad rotation block {tok!r}") from None
            c, s = _cos_sin(turns)
            mats.append([[c, -s], [s, c]])
        elif tok[:1] in ("N", "n"):
            try:
                size = int(tok[1:])
            except ValueError:
                raise MapError(f"bad nilpotent block {tok!r}") from None
            if size < 1:
                raise MapError("nilpotent block size must be >= 1")
            mats.append([[1 if c == r + 1 else 0 for c in range(size)] for r in range(size)])
        else:
            raise MapError(f"unknown Jordan block {tok!r}")
    m = sum(len(b) for b in mats)
    out = [[0] * m for _ in range(m)]
    off = 0
    for b in mats:
        for r, row in enumerate(b):
            for c, v in enumerate(row):
                out[off + r][off + c] = v
        off += len(b)
    return out


def jordan(blocks: Sequence[str]) -> MapSpec:
    return linear_map(jordan_matrix(blocks))
