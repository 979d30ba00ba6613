"""Explicit conjugacies to normal forms, verified forward as φ∘f = G∘φ."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np
from scipy.spatial import cKDTree

from . import expr as E
from .equations import default_window, restriction_classify, sup_deviation
from .interval import Interval1
from .maps import MapSpec, hw_frequencies, hw_pairs, hw_sexed, hw_simple, hw_vars
from .poly import NotPolynomialError, poly_canonical
from .sampling import genotype_simplex, low_discrepancy, sexed_region

GAUSS_POINTS = 32
FD_STEP = 1e-6
COLLISION_SEPARATION = 1e-9


class ConjugacyError(ValueError):
    pass


class HypothesisError(ConjugacyError):
    """A hypothesis of a construction fails; ``witness`` locates the failure."""

    def __init__(self, message: str, witness=None, value: float | None = None):
        super().__init__(message)
        self.witness = witness
        self.value = value


@dataclass
class ConjugacyReport:
    phi: MapSpec
    target: MapSpec
    residual: float
    sampled_residual: float
    injectivity: dict
    mode: str
    domain: list
    verified: bool
    tol: float
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "phi": self.phi.component_strings(),
            "target": self.target.component_strings(),
            "vars": list(self.phi.vars),
            "residual": self.residual,
            "sampled_residual": self.sampled_residual,
            "injectivity": self.injectivity,
            "mode": self.mode,
            "domain": self.domain,
            "verified": self.verified,
            "tol": self.tol,
            "details": self.details,
        }


def _simplify(e: E.Expr, vars) -> E.Expr:
    """Canonical polynomial form when possible, else ``e`` unchanged."""
    if E.is_polynomial(e):
        try:
            return poly_canonical(e, vars).to_expr()
        except NotPolynomialError:
            pass
    return e


def injectivity_screen(images: np.ndarray) -> dict:
    """Smallest distance between images of distinct sample points (a screen, not a proof)."""
    n = len(images)
    if n < 2:
        return {"min_separation": None, "pairs": 0, "collisions": 0}
    finite = np.all(np.isfinite(images), axis=1)
    pts = images[finite]
    tree = cKDTree(pts)
    dist, _ = tree.query(pts, k=2)
    nearest = dist[:, 1]
    return {
        "min_separation": float(nearest.min()),
        "pairs": n * (n - 1) // 2,
        "collisions": int(np.sum(nearest <= COLLISION_SEPARATION)) // 2,
    }


def verify_conjugacy(
    phi: MapSpec,
    f: MapSpec,
    G: MapSpec,
    window=None,
    samples: int = 4096,
    tol: float = 1e-9,
    seed: int = 0,
    points=None,
    exact: str = "auto",
) -> ConjugacyReport:
    """Residual sup |φ(f(z)) - G(φ(z))| on samples, exact when everything is polynomial."""
    if not (phi.dim == f.dim == G.dim):
        raise ValueError(f"dimension mismatch: phi {phi.dim}, f {f.dim}, G {G.dim}")
    win = default_window(f, window)
    pts = np.asarray(points, dtype=float) if points is not None else low_discrepancy(win, samples, seed)
    lhs = phi.evaluate(f.evaluate(pts))
    phi_pts = phi.evaluate(pts)
    rhs = G.evaluate(phi_pts)
    sampled, _ = sup_deviation(lhs, rhs)
    mode = "sampled"
    residual = sampled
    polynomial = phi.is_polynomial() and f.is_polynomial() and G.is_polynomial()
    if exact == "exact" and not polynomial:
        raise ConjugacyError("exact verification requires polynomial maps")
    exact_equal = None
    if exact != "sampled" and polynomial:
        left = phi.compose(f).polynomials()
        right = G.compose(phi).polynomials()
        exact_equal = left == right
        mode = "exact"
        residual = 0.0 if exact_equal else max(sampled, math.ulp(1.0))
    verified = bool(exact_equal) if mode == "exact" else sampled <= tol
    return ConjugacyReport(
        phi,
        G,
        residual,
        sampled,
        injectivity_screen(phi_pts),
        mode,
        [list(w) for w in win],
        verified,
        tol,
        {"points": int(len(pts))},
    )


def _neg_identity(vars) -> MapSpec:
    return MapSpec(vars, tuple(E.Neg(v) for v in E.variables(vars)))


def involution_conjugacy(f: MapSpec, window=None, samples: int = 4096, tol: float = 1e-9, seed: int = 0) -> ConjugacyReport:
    """φ = Id - f conjugates a decreasing involution of the line to -Id."""
    if f.dim != 1:
        raise ValueError("involution_conjugacy needs a one-dimensional map")
    win = default_window(f, window)
    restr = restriction_classify(f, Interval1(*win[0]), samples, tol)
    if restr.label != "involution":
        raise ConjugacyError(f"not an involution on the window (classified as {restr.label})")
    x = E.Var(0, f.vars[0])
    phi = MapSpec(f.vars, (_simplify(x - f.components[0], f.vars),), win)
    G = _neg_identity(f.vars)
    report = verify_conjugacy(phi, f, G, win, samples, tol, seed)
    xs = np.linspace(win[0][0], win[0][1], max(samples, 2))
    vals = phi.evaluate(xs[:, None])[:, 0]
    increasing = bool(np.all(np.diff(vals) > 0))
    report.details["phi_increasing"] = increasing
    report.verified = report.verified and increasing
    return report


# ---------------------------------------------------------------------------
# two-dimensional normal form g = (±x + y*gfrak(x, y), 0)


@dataclass
class NormalForm2D:
    sign: int | None
    gfrak: Callable | None
    exact: object | None
    second_component_deviation: float
    axis_deviation: float
    hypotheses_ok: bool
    residual: float | None = None
    quad_vs_exact: float | None = None
    messages: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.hypotheses_ok and self.residual is not None

    def to_dict(self) -> dict:
        return {
            "sign": self.sign,
            "gfrak_exact": self.exact.to_string() if self.exact is not None else None,
            "second_component_deviation": self.second_component_deviation,
            "axis_deviation": self.axis_deviation,
            "hypotheses_ok": self.hypotheses_ok,
            "residual": self.residual,
            "quad_vs_exact": self.quad_vs_exact,
            "messages": list(self.messages),
        }


def _dy_function(g1: E.Expr) -> Callable:
    try:
        d = E.derivative(g1, 1)
        return lambda x, y: np.broadcast_to(np.asarray(E.eval_expr(d, [x, y]), dtype=float), np.shape(x))
    except E.NotDifferentiableError:
        def numeric(x, y):
            hi = E.eval_expr(g1, [x, y + FD_STEP])
            lo = E.eval_expr(g1, [x, y - FD_STEP])
            return (np.asarray(hi, dtype=float) - np.asarray(lo, dtype=float)) / (2 * FD_STEP)
        return numeric


def gfrak_quadrature(g1: E.Expr, quad_points: int = GAUSS_POINTS) -> Callable:
    """(x0, y0) -> integral over t in [0, 1] of dg1/dy(x0, t*y0), by Gauss-Legendre."""
    nodes, weights = np.polynomial.legendre.leggauss(quad_points)
    t = 0.5 * (nodes + 1.0)
    w = 0.5 * weights
    dy = _dy_function(g1)

    def gfrak(x0, y0):
        x0 = np.atleast_1d(np.asarray(x0, dtype=float))
        y0 = np.atleast_1d(np.asarray(y0, dtype=float))
        xx = np.repeat(x0[:, None], len(t), axis=1)
        yy = y0[:, None] * t[None, :]
        vals = np.asarray(dy(xx.ravel(), yy.ravel()), dtype=float).reshape(xx.shape)
        return vals @ w

    return gfrak


def _normal_form_checks(f: MapSpec, window, samples: int, tol: float, seed: int):
    if f.dim != 2:
        raise ValueError("normal forms need a two-dimensional map")
    win = default_window(f, window)
    pts = low_discrepancy(win, samples, seed)
    vals = f.evaluate(pts)
    second = float(np.max(np.abs(vals[:, 1])))
    xs = np.linspace(win[0][0], win[0][1], max(samples // 8, 64))
    axis = f.evaluate(np.column_stack([xs, np.zeros_like(xs)]))[:, 0]
    dev_plus = float(np.max(np.abs(axis - xs)))
    dev_minus = float(np.max(np.abs(axis + xs)))
    sign = 1 if dev_plus <= dev_minus else -1
    return win, pts, second, sign, min(dev_plus, dev_minus)


def extract_gfrak(f: MapSpec, window=None, quad_points: int = GAUSS_POINTS, tol: float = 1e-9, samples: int = 4096, seed: int = 0) -> NormalForm2D:
    """Extract gfrak with g1 = sign*x + y*gfrak; raises when the hypotheses fail."""
    win, pts, second, sign, axis_dev = _normal_form_checks(f, window, samples, tol, seed)
    if second > tol:
        raise HypothesisError("second component is not identically zero", None, second)
    if axis_dev > tol:
        raise HypothesisError("g1(x, 0) is neither x nor -x", None, axis_dev)
    g1 = f.components[0]
    gfrak = gfrak_quadrature(g1, quad_points)
    exact = None
    quad_vs_exact = None
    messages = []
    if E.is_polynomial(g1):
        p = poly_canonical(g1, f.vars)
        x = p.variable(f.vars, 0)
        try:
            exact = (p - sign * x).exact_divide_by_var(1)
        except ArithmeticError as exc:
            raise HypothesisError(f"nonzero polynomial remainder: {exc}") from None
        q = gfrak(pts[:, 0], pts[:, 1])
        ex = exact.evaluate([pts[:, 0], pts[:, 1]])
        ex = np.broadcast_to(np.asarray(ex, dtype=float), q.shape)
        quad_vs_exact = float(np.max(np.abs(q - ex)))
    else:
        messages.append("g1 is not polynomial: quadrature only")
    return NormalForm2D(sign, gfrak, exact, second, axis_dev, True, None, quad_vs_exact, messages)


def normal_form_residual(f: MapSpec, window=None, samples: int = 4096, tol: float = 1e-9, seed: int = 0, quad_points: int = GAUSS_POINTS) -> NormalForm2D:
    """Test the normal-form hypotheses and report sup |g1 - (sign*x + y*gfrak)|."""
    win, pts, second, sign, axis_dev = _normal_form_checks(f, window, samples, tol, seed)
    messages = []
    if second > tol:
        messages.append(f"second component is not identically zero (max {second:.3g})")
    if axis_dev > tol:
        messages.append(f"g1(x, 0) is neither x nor -x (deviation {axis_dev:.3g})")
    if messages:
        return NormalForm2D(None, None, None, second, axis_dev, False, None, None, messages)
    try:
        nf = extract_gfrak(f, win, quad_points, tol, samples, seed)
    except HypothesisError as exc:
        return NormalForm2D(sign, None, None, second, axis_dev, False, None, None, [str(exc)])
    g1 = f.evaluate(pts)[:, 0]
    model = nf.sign * pts[:, 0] + pts[:, 1] * nf.gfrak(pts[:, 0], pts[:, 1])
    nf.residual = float(np.max(np.abs(g1 - model)))
    return nf


# ---------------------------------------------------------------------------
# conjugation of (g, 0) to the projection (x, 0)


def _dx_values(g: E.Expr, pts: np.ndarray) -> np.ndarray:
    try:
        d = E.derivative(g, 0)
        v = E.eval_expr(d, [pts[:, 0], pts[:, 1]])
    except E.NotDifferentiableError:
        hi = E.eval_expr(g, [pts[:, 0] + FD_STEP, pts[:, 1]])
        lo = E.eval_expr(g, [pts[:, 0] - FD_STEP, pts[:, 1]])
        v = (np.asarray(hi, dtype=float) - np.asarray(lo, dtype=float)) / (2 * FD_STEP)
    return np.broadcast_to(np.asarray(v, dtype=float), (len(pts),)).copy()


def _root_on_segment(fn, p: np.ndarray, q: np.ndarray, iters: int = 200) -> np.ndarray:
    fp = fn(p[None, :])[0]
    for _ in range(iters):
        m = 0.5 * (p + q)
        fm = fn(m[None, :])[0]
        if fm == 0:
            return m
        if (fm > 0) == (fp > 0):
            p, fp = m, fm
        else:
            q = m
        if np.max(np.abs(p - q)) < 1e-15:
            break
    return 0.5 * (p + q)


def projection_conjugacy(f: MapSpec, window=None, samples: int = 4096, tol: float = 1e-9, seed: int = 0) -> ConjugacyReport:
    """φ(x, y) = (g(x, y), y) conjugates f = (g, 0) to P(x, y) = (x, 0) when dg/dx != 0."""
    win, pts, second, sign, axis_dev = _normal_form_checks(f, window, samples, tol, seed)
    if second > tol:
        raise HypothesisError("second component is not identically zero", None, second)
    if sign != 1 or axis_dev > tol:
        raise HypothesisError("g(x, 0) = x fails on the sample", None, axis_dev)
    g = f.components[0]
    dx = _dx_values(g, pts)
    pos, neg = dx > 0, dx < 0
    if pos.any() and neg.any():
        tree = cKDTree(pts[pos])
        d, j = tree.query(pts[neg])
        i = int(np.argmin(d))
        p, q = pts[neg][i], pts[pos][j[i]]
        root = _root_on_segment(lambda z: _dx_values(g, z), p, q)
        val = float(_dx_values(g, root[None, :])[0])
        raise HypothesisError(
            f"dg/dx changes sign in the window; vanishes near {root.tolist()}", root.tolist(), val
        )
    min_abs = float(np.min(np.abs(dx)))
    if min_abs <= tol:
        i = int(np.argmin(np.abs(dx)))
        raise HypothesisError("dg/dx vanishes in the window", pts[i].tolist(), float(dx[i]))
    x, y = E.variables(f.vars)
    phi = MapSpec(f.vars, (g, y), win)
    P = MapSpec(f.vars, (x, E.Const(0)))
    report = verify_conjugacy(phi, f, P, win, samples, tol, seed, points=pts)
    report.details["min_abs_dgdx"] = min_abs
    report.details["dgdx_sign"] = 1 if pos.all() else -1
    return report


def invert_projection_phi(g: E.Expr, u: float, y: float, lo: float, hi: float, tol: float = 1e-12) -> float:
    """Solve g(x, y) = u for x in [lo, hi] by bisection along the monotone slice."""
    glo = float(E.eval_expr(g, [lo, y]))
    ghi = float(E.eval_expr(g, [hi, y]))
    if (glo - u) * (ghi - u) > 0:
        raise ValueError("value is outside the image of the slice")
    increasing = ghi >= glo
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if (float(E.eval_expr(g, [mid, y])) < u) == increasing:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# strip {|y| < h(x)} to the plane


@dataclass
class StripReport:
    psi: MapSpec
    residual: float
    monotone: bool
    h_min: float
    verified: bool

    def to_dict(self) -> dict:
        return {
            "psi": self.psi.component_strings(),
            "vars": list(self.psi.vars),
            "residual": self.residual,
            "monotone": self.monotone,
            "h_min": self.h_min,
            "verified": self.verified,
        }


def strip_to_plane(h: E.Expr, window_x, samples: int = 257, tol: float = 1e-12) -> StripReport:
    """ψ(x, y) = (x, tan(pi*y / (2 h(x)))) and its commutation with the projection."""
    lo, hi = (float(v) for v in window_x)
    x, y = E.variables(("x", "y"))
    h = E.compose_symbolic(h, [x]) if E.max_var_index(h) >= 0 else h
    xs = np.linspace(lo, hi, max(samples, 2))
    hv = np.broadcast_to(np.asarray(E.eval_expr(h, [xs, np.zeros_like(xs)]), dtype=float), xs.shape)
    if not np.all(hv > 0):
        i = int(np.argmin(hv))
        raise HypothesisError("h must be positive on the window", [float(xs[i])], float(hv[i]))
    psi = MapSpec(("x", "y"), (x, E.tan(E.Const(math.pi) * y / (E.Const(2) * h))))
    P = MapSpec(("x", "y"), (x, E.Const(0)))
    u = np.linspace(-1, 1, max(samples, 3))[1:-1]
    xx, uu = np.meshgrid(xs, u, indexing="ij")
    yy = uu * hv[:, None]
    pts = np.column_stack([xx.ravel(), yy.ravel()])
    lhs = psi.evaluate(P.evaluate(pts))
    rhs = P.evaluate(psi.evaluate(pts))
    residual, _ = sup_deviation(lhs, rhs)
    second = psi.evaluate(pts)[:, 1].reshape(xx.shape)
    monotone = bool(np.all(np.diff(second, axis=1) > 0))
    return StripReport(psi, residual, monotone, float(hv.min()), residual <= tol and monotone)


# ---------------------------------------------------------------------------
# Hardy-Weinberg conjugacies


def _tidy(names, comps) -> MapSpec:
    return MapSpec(names, tuple(_simplify(c, names) for c in comps))


def hw_simple_conjugacy_maps(k: int) -> tuple[MapSpec, MapSpec]:
    names = hw_vars(k)
    vs = E.variables(names)
    coords = dict(zip(hw_pairs(k), vs))
    p = hw_frequencies(k, coords)
    phi, target = [], []
    for (i, j), v in coords.items():
        if i == j:
            phi.append(p[i - 1])
            target.append(v)
        else:
            phi.append(v - E.Const(2) * p[i - 1] * p[j - 1])
            target.append(E.Const(0))
    return _tidy(names, phi), _tidy(names, target)


def hw_sexed_conjugacy_maps(k: int) -> tuple[MapSpec, MapSpec]:
    """φ = (φ^M, φ^F) and the target G; y^F_kk is read as -(sum of the other y^F_ii)."""
    m_names, f_names = hw_vars(k, "m"), hw_vars(k, "f")
    names = m_names + f_names
    vs = E.variables(names)
    d = len(m_names)
    pairs = hw_pairs(k)
    cm = dict(zip(pairs, vs[:d]))
    cf = dict(zip(pairs, vs[d:]))
    pm = hw_frequencies(k, cm)
    pf = hw_frequencies(k, cf)
    a = [(pm[i] + pf[i]) / 2 for i in range(k - 1)]
    rest: E.Expr = E.Const(1)
    for ai in a:
        rest = rest - ai
    a.append(rest)
    phi_m, phi_f = [], []
    for i, j in pairs:
        if i == j:
            phi_m.append(a[i - 1])
            phi_f.append((pm[i - 1] - pf[i - 1]) / 2)
        else:
            phi_m.append(cm[(i, j)] - E.Const(2) * a[i - 1] * a[j - 1])
            phi_f.append(cm[(i, j)] - cf[(i, j)])
    # target in the φ coordinates
    ym = dict(zip(pairs, vs[:d]))
    yf = dict(zip(pairs, vs[d:]))
    diag_f = [yf[(i, i)] for i in range(1, k)]
    last: E.Expr = E.Const(0)
    for t in diag_f:
        last = last - t
    diag_f.append(last)
    g_m, g_f = [], []
    for i, j in pairs:
        if i == j:
            g_m.append(ym[(i, i)])
        else:
            g_m.append(E.Const(-2) * diag_f[i - 1] * diag_f[j - 1])
        g_f.append(E.Const(0))
    return _tidy(names, phi_m + phi_f), _tidy(names, g_m + g_f)


def hw_conjugacy(k: int, variant: str = "simple", samples: int = 1000, tol: float = 1e-12, seed: int = 0, exact: str | None = None) -> ConjugacyReport:
    """Build and verify the Hardy-Weinberg conjugacy; exact for k <= 3 by default."""
    if k < 2:
        raise ValueError("k must be at least 2")
    if variant == "simple":
        f = hw_simple(k)
        phi, G = hw_simple_conjugacy_maps(k)
        pts = genotype_simplex(k, samples, seed)
    elif variant == "sexed":
        f = hw_sexed(k)
        phi, G = hw_sexed_conjugacy_maps(k)
        pts = sexed_region(k, samples, seed)
    else:
        raise ValueError(f"unknown variant {variant!r}")
    if exact is None:
        exact = "auto" if k <= 3 else "sampled"
    report = verify_conjugacy(phi, f, G, f.window, samples, tol, seed, points=pts, exact=exact)
    report.details["variant"] = variant
    report.details["k"] = k
    return report
