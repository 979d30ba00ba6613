"""Decide f^n = f^k exactly (polynomial maps) or on deterministic samples."""

from __future__ import annotations

import cmath
import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from math import comb
from typing import Sequence

import numpy as np

from .interval import Interval1
from .maps import MapSpec, identity_map
from .poly import Polynomial
from .sampling import low_discrepancy

DEFAULT_TOL = 1e-9
DEFAULT_SAMPLES = 4096
DEFAULT_SEED = 0
EXACT_DEGREE_CAP = 64
EXACT_TERM_CAP = 20000

LABELS = ("periodic", "idempotent", "eventually-periodic", "constant-power", "none")


class NotLinearError(ValueError):
    pass


class ExactModeError(ValueError):
    pass


@dataclass
class EquivalenceResult:
    equal: bool
    deviation: float
    argmax: list[float] | None
    mode: str

    def to_dict(self) -> dict:
        return {"equal": self.equal, "deviation": self.deviation, "argmax": self.argmax, "mode": self.mode}


@dataclass
class PairCheck:
    n: int
    k: int
    holds: bool
    deviation: float
    witness: list[float] | None
    mode: str

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "k": self.k,
            "holds": self.holds,
            "deviation": self.deviation,
            "witness": self.witness,
            "mode": self.mode,
        }


@dataclass
class EquationReport:
    pair: tuple[int, int] | None
    label: str
    mode: str
    residual: float | None
    tol: float
    window: list[list[float]]
    samples: int
    seed: int
    checked: list[PairCheck] = field(default_factory=list)
    constant_power: bool | None = None
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "pair": list(self.pair) if self.pair else None,
            "label": self.label,
            "mode": self.mode,
            "residual": self.residual,
            "tol": self.tol,
            "window": self.window,
            "samples": self.samples,
            "seed": self.seed,
            "checked": [c.to_dict() for c in self.checked],
            "constant_power": self.constant_power,
            "warnings": list(self.warnings),
        }


def label_for(n: int, k: int) -> str:
    if k == 0:
        return "periodic"
    if (n, k) == (2, 1):
        return "idempotent"
    return "eventually-periodic"


def default_window(f: MapSpec, window=None):
    if window is not None:
        return tuple((float(a), float(b)) for a, b in window)
    if f.window is not None:
        return f.window
    return tuple((-1.0, 1.0) for _ in range(f.dim))


def sup_deviation(a: np.ndarray, b: np.ndarray) -> tuple[float, int]:
    """Max over rows of the sup-norm row difference; NaN/inf mismatches count as inf."""
    with np.errstate(invalid="ignore"):
        diff = np.abs(a - b)
    same = (a == b) | (np.isnan(a) & np.isnan(b))
    diff = np.where(same, 0.0, diff)
    diff = np.where(np.isnan(diff), np.inf, diff)
    rows = diff.max(axis=1)
    idx = int(np.argmax(rows))
    return float(rows[idx]), idx


class _Iterates:
    """Cached exact and sampled powers of one map."""

    def __init__(self, f: MapSpec, window, samples: int, seed: int, mode: str, points=None):
        self.f = f
        self.window = default_window(f, window)
        self.samples = samples
        self.seed = seed
        self.mode = mode
        self._points = None if points is None else np.asarray(points, dtype=float)
        self._values: list[np.ndarray] = []
        self._exact: list[list[Polynomial]] | None = None
        self.exact_blocked: str | None = None
        self.warnings: list[str] = []
        if mode == "auto" and f.is_polynomial() and f.has_float_constants():
            # rounded coefficients make exact identities fail spuriously
            self.exact_blocked = "map has floating-point coefficients"
        elif mode in ("auto", "exact"):
            if f.is_polynomial():
                self._exact = [identity_map(f.dim, f.vars).polynomials()]
                self._gens = f.polynomials()
            else:
                self.exact_blocked = "map is not polynomial"
                if mode == "exact":
                    raise ExactModeError("exact mode requires polynomial components")

    @property
    def points(self) -> np.ndarray:
        if self._points is None:
            self._points = low_discrepancy(self.window, self.samples, self.seed)
        return self._points

    def values(self, n: int) -> np.ndarray:
        if not self._values:
            self._values.append(self.points)
        while len(self._values) <= n:
            self._values.append(self.f.evaluate(self._values[-1]))
        return self._values[n]

    def exact(self, n: int) -> list[Polynomial] | None:
        if self._exact is None:
            return None
        while len(self._exact) <= n:
            prev = self._exact[-1]
            deg = max(p.degree() for p in self._gens) * max(1, max(p.degree() for p in prev))
            nv = self.f.dim
            if deg > EXACT_DEGREE_CAP or comb(deg + nv, nv) > EXACT_TERM_CAP:
                msg = (
                    f"exact composition of power {len(self._exact)} exceeds the degree/size cap; "
                    "falling back to sampled mode"
                )
                self.exact_blocked = msg
                if self.mode == "exact":
                    raise ExactModeError(msg)
                warnings.warn(msg, RuntimeWarning, stacklevel=3)
                self.warnings.append(msg)
                self._exact = None
                return None
            self._exact.append([p.compose(prev) for p in self._gens])
        return self._exact[n]

    def compare(self, n: int, k: int, tol: float) -> PairCheck:
        pn, pk = self.exact(n), self.exact(k)
        if pn is not None and pk is not None:
            if pn == pk:
                return PairCheck(n, k, True, 0.0, None, "exact")
            dev, idx = sup_deviation(self.values(n), self.values(k))
            return PairCheck(n, k, False, dev, self.points[idx].tolist(), "exact")
        dev, idx = sup_deviation(self.values(n), self.values(k))
        holds = dev <= tol
        return PairCheck(n, k, holds, dev, None if holds else self.points[idx].tolist(), "sampled")


def maps_equal(
    a: MapSpec,
    b: MapSpec,
    window=None,
    samples: int = DEFAULT_SAMPLES,
    tol: float = DEFAULT_TOL,
    mode: str = "auto",
    seed: int = DEFAULT_SEED,
    points=None,
) -> EquivalenceResult:
    """Compare two maps exactly (canonical polynomials) or by sup-deviation on samples."""
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")
    if mode not in ("auto", "exact", "sampled"):
        raise ValueError(f"unknown mode {mode!r}")
    both_poly = a.is_polynomial() and b.is_polynomial()
    if mode == "exact" and not both_poly:
        raise ExactModeError("exact mode requires polynomial components")
    if mode == "auto" and (a.has_float_constants() or b.has_float_constants()):
        mode = "sampled"

    win = default_window(a, window if window is not None else b.window)
    pts = np.asarray(points, dtype=float) if points is not None else low_discrepancy(win, samples, seed)
    dev, idx = sup_deviation(a.evaluate(pts), b.evaluate(pts))
    argmax = pts[idx].tolist()
    if mode != "sampled" and both_poly:
        pa = a.polynomials()
        pb = [p if p.vars == pa[0].vars else Polynomial(pa[0].vars, p.terms) for p in b.polynomials()]
        if pa == pb:
            return EquivalenceResult(True, 0.0, None, "exact")
        return EquivalenceResult(False, dev, argmax, "exact")
    return EquivalenceResult(dev <= tol, dev, argmax, "sampled")


def detect_minimal_pair(
    f: MapSpec,
    n_max: int = 4,
    window=None,
    samples: int = DEFAULT_SAMPLES,
    tol: float = DEFAULT_TOL,
    seed: int = DEFAULT_SEED,
    mode: str = "auto",
) -> EquationReport:
    """First pair k < n <= n_max, ordered by (n, k), with f^n = f^k."""
    if n_max < 2:
        raise ValueError("n_max must be at least 2")
    it = _Iterates(f, window, samples, seed, mode)
    checked = []
    found = None
    for n in range(1, n_max + 1):
        for k in range(0, n):
            c = it.compare(n, k, tol)
            checked.append(c)
            if c.holds:
                found = c
                break
        if found:
            break
    modes = {c.mode for c in checked}
    mode_used = "exact" if modes == {"exact"} else "sampled"
    window_list = [list(w) for w in it.window]
    if found is None:
        return EquationReport(None, "none", mode_used, None, tol, window_list, samples, seed, checked, None, it.warnings)
    n, k = found.n, found.k
    residual = None if found.mode == "exact" else found.deviation
    constant = _power_is_constant(it, k, tol) if k >= 1 else False
    return EquationReport(
        (n, k), label_for(n, k), mode_used, residual, tol, window_list, samples, seed, checked, constant, it.warnings
    )


def _power_is_constant(it: _Iterates, k: int, tol: float) -> bool:
    polys = it.exact(k)
    if polys is not None:
        return all(p.is_constant() for p in polys)
    vals = it.values(k)
    spread = np.nanmax(vals, axis=0) - np.nanmin(vals, axis=0)
    return bool(np.all(spread <= tol))


def check_pair(
    f: MapSpec,
    n: int,
    k: int,
    window=None,
    samples: int = DEFAULT_SAMPLES,
    tol: float = DEFAULT_TOL,
    seed: int = DEFAULT_SEED,
    mode: str = "auto",
) -> PairCheck:
    if not n > k >= 0:
        raise ValueError("need n > k >= 0")
    return _Iterates(f, window, samples, seed, mode).compare(n, k, tol)


@dataclass
class PowerResult:
    h: MapSpec
    exponent: int
    precondition: PairCheck
    idempotence: EquivalenceResult | None
    verified: bool


def idempotent_power(
    f: MapSpec,
    n: int,
    k: int,
    window=None,
    samples: int = DEFAULT_SAMPLES,
    tol: float = DEFAULT_TOL,
    seed: int = DEFAULT_SEED,
) -> PowerResult:
    """h = f^(k(n-k)) and whether h∘h = h, after checking f^n = f^k."""
    pre = check_pair(f, n, k, window, samples, tol, seed)
    e = k * (n - k)
    h = f.power(e)
    if not pre.holds:
        return PowerResult(h, e, pre, None, False)
    win = default_window(f, window)
    hh = h.compose(h)
    res = maps_equal(hh, h, win, samples, tol, seed=seed)
    return PowerResult(h, e, pre, res, res.equal)


def corollary_identities(
    f: MapSpec,
    n: int,
    k: int,
    ls: Sequence[int] = (0, 1, 2),
    window=None,
    samples: int = DEFAULT_SAMPLES,
    tol: float = DEFAULT_TOL,
    seed: int = DEFAULT_SEED,
) -> list[tuple[int, int, PairCheck]]:
    """Check f^(l1(n-k)+k) = f^(l2(n-k)+k) for every l1 < l2 from ``ls``."""
    it = _Iterates(f, window, samples, seed, "auto")
    out = []
    for a in ls:
        for b in ls:
            if a < b:
                ea, eb = a * (n - k) + k, b * (n - k) + k
                out.append((a, b, it.compare(eb, ea, tol)))
    return out


# ---------------------------------------------------------------------------
# restriction to the image


class NotInvariantError(ValueError):
    pass


@dataclass
class RestrictionResult:
    label: str
    identity_deviation: float
    involution_deviation: float
    decreasing: bool
    invariant: bool
    invariance_excess: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def restriction_classify(
    f: MapSpec,
    image: Interval1,
    samples: int = DEFAULT_SAMPLES,
    tol: float = DEFAULT_TOL,
    require_invariant: bool = False,
) -> RestrictionResult:
    """Classify f on ``image`` as identity, involution (decreasing, f∘f = Id) or other.

    Invariance of ``image`` is measured and reported; it is enforced only
    with ``require_invariant``.
    """
    if f.dim != 1:
        raise ValueError("restriction_classify needs a one-dimensional map")
    if not (math.isfinite(image.lo) and math.isfinite(image.hi)):
        raise ValueError("restriction_classify needs a bounded interval")
    xs = np.linspace(image.lo, image.hi, max(samples, 2)) if image.hi > image.lo else np.array([image.lo])
    fx = f.evaluate(xs[:, None])[:, 0]
    ffx = f.evaluate(fx[:, None])[:, 0]
    excess = float(np.max(np.maximum(image.lo - fx, fx - image.hi), initial=0.0))
    invariant = excess <= tol
    if require_invariant and not invariant:
        raise NotInvariantError(f"interval is not invariant: image leaves it by {excess:.3g}")
    id_dev = float(np.max(np.abs(fx - xs)))
    inv_dev = float(np.max(np.abs(ffx - xs)))
    decreasing = bool(len(xs) > 1 and np.all(np.diff(fx) < 0))
    if id_dev <= tol:
        label = "identity"
    elif inv_dev <= tol and decreasing:
        label = "involution"
    else:
        label = "other"
    return RestrictionResult(label, id_dev, inv_dev, decreasing, invariant, excess)


# ---------------------------------------------------------------------------
# linear maps


def linear_matrix(f: MapSpec) -> tuple[list[list], bool]:
    """Matrix of a homogeneous linear map; second value says whether it is exact."""
    if not f.is_polynomial():
        raise NotLinearError("components are not polynomial")
    exact = not f.has_float_constants()
    rows = []
    for p in f.polynomials():
        row: list = [Fraction(0)] * f.dim
        for mono, c in p.terms.items():
            if sum(mono) != 1:
                raise NotLinearError(f"component {p.to_string()} is not homogeneous linear")
            row[mono.index(1)] = c
        rows.append(row if exact else [float(v) for v in row])
    return rows, exact


def _mat_mul(a, b):
    n = len(a)
    return [[sum(a[i][t] * b[t][j] for t in range(n)) for j in range(n)] for i in range(n)]


def _mat_pow(a, e: int):
    n = len(a)
    result = [[Fraction(int(i == j)) for j in range(n)] for i in range(n)]
    base = a
    while e:
        if e & 1:
            result = _mat_mul(result, base)
        base = _mat_mul(base, base)
        e >>= 1
    return result


# univariate polynomials over Q as coefficient lists, lowest degree first

def _trim(p):
    p = list(p)
    while p and p[-1] == 0:
        p.pop()
    return p


def _charpoly(a) -> list[Fraction]:
    """det(tI - A) by the Faddeev-LeVerrier recursion."""
    n = len(a)
    coeffs = [Fraction(0)] * (n + 1)
    coeffs[n] = Fraction(1)
    mk = [[Fraction(0)] * n for _ in range(n)]
    for k in range(1, n + 1):
        am = _mat_mul(a, mk)
        mk = [[am[i][j] + (coeffs[n - k + 1] if i == j else 0) for j in range(n)] for i in range(n)]
        amk = _mat_mul(a, mk)
        coeffs[n - k] = -sum(amk[i][i] for i in range(n)) / k
    return coeffs


def _divmod(p, q):
    p, q = _trim(p), _trim(q)
    quot = [Fraction(0)] * max(len(p) - len(q) + 1, 1)
    r = list(p)
    while len(_trim(r)) >= len(q):
        r = _trim(r)
        shift = len(r) - len(q)
        c = r[-1] / q[-1]
        quot[shift] = c
        for i, qc in enumerate(q):
            r[shift + i] -= c * qc
    return _trim(quot), _trim(r)


def _gcd(p, q):
    p, q = _trim(p), _trim(q)
    while q:
        _, r = _divmod(p, q)
        p, q = q, r
    return [c / p[-1] for c in p]


def _deriv(p):
    return [i * c for i, c in enumerate(p)][1:]


def _mat_poly(a, p):
    n = len(a)
    result = [[Fraction(0)] * n for _ in range(n)]
    for c in reversed(_trim(p)):
        result = _mat_mul(result, a)
        for i in range(n):
            result[i][i] += c
    return result


def _spectral_exact(a, n: int, k: int) -> tuple[bool, str]:
    chi = _charpoly(a)
    zeros = 0
    while zeros < len(chi) - 1 and chi[zeros] == 0:
        zeros += 1
    chi1 = chi[zeros:]
    if len(chi1) > 1:
        g = _gcd(chi1, _deriv(chi1))
        r, _ = _divmod(chi1, g)
    else:
        r = [Fraction(1)]
    target = [Fraction(-1)] + [Fraction(0)] * (n - k - 1) + [Fraction(1)]
    _, rem = _divmod(target, r)
    roots_ok = not rem
    mk = _mat_pow(a, k)
    nilp_diag_ok = all(v == 0 for row in _mat_mul(mk, _mat_poly(a, r)) for v in row)
    notes = []
    notes.append(f"eigenvalue 0 has algebraic multiplicity {zeros}")
    notes.append(
        "nonzero eigenvalues are roots of t^%d - 1" % (n - k) if roots_ok else
        "some nonzero eigenvalue is not a root of t^%d - 1" % (n - k)
    )
    notes.append(
        "minimal polynomial divides t^%d times the squarefree part" % k if nilp_diag_ok else
        "a nilpotent block exceeds size %d or a nonzero eigenvalue is defective" % k
    )
    return roots_ok and nilp_diag_ok, "; ".join(notes)


def _rank(m: np.ndarray, tol: float) -> int:
    if m.size == 0:
        return 0
    s = np.linalg.svd(m, compute_uv=False)
    return int(np.sum(s > tol * max(1.0, s[0] if len(s) else 1.0)))


def _spectral_float(a: np.ndarray, n: int, k: int, tol: float) -> tuple[bool, str]:
    m = a.shape[0]
    ranks = [_rank(np.linalg.matrix_power(a, j), tol) for j in range(m + 2)]
    index = next(j for j in range(m + 1) if ranks[j] == ranks[j + 1])
    r = ranks[m]
    notes = [f"eigenvalue 0 has index {index}"]
    ok = index <= k
    if r:
        u, _, _ = np.linalg.svd(np.linalg.matrix_power(a, m))
        q = u[:, :r]
        b = q.T @ a @ q
        lams = np.linalg.eigvals(b)
        bad = [lam for lam in lams if abs(lam ** (n - k) - 1) > 1e-6]
        if not bad:
            notes.append(f"{r} nonzero eigenvalues, all {n - k}th roots of unity")
        else:
            ok = False
            notes.append(f"eigenvalue {complex(bad[0]):.6g} is not an {n - k}th root of unity")
        distinct: list[complex] = []
        for lam in lams:
            if all(abs(lam - d) > 1e-6 for d in distinct):
                distinct.append(lam)
        for lam in distinct:
            shifted = b - lam * np.eye(r)
            if _rank(shifted, 1e-6) != _rank(shifted @ shifted, 1e-6):
                ok = False
                notes.append(f"eigenvalue {complex(lam):.6g} is defective")
    if index > k:
        notes.append(f"nilpotent part has a block of size {index} > {k}")
    return ok, "; ".join(notes)


@dataclass
class LinearReport:
    satisfies: bool
    power_verdict: bool
    spectral_verdict: bool
    agree: bool
    eigenvalues: list[list[float]]
    diagnosis: str
    mode: str

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def linear_solution_check(f: MapSpec, n: int, k: int, tol: float = 1e-8) -> LinearReport:
    """Matrix-power verdict M^n = M^k and an independent spectral verdict."""
    if not n > k >= 0:
        raise ValueError("need n > k >= 0")
    rows, exact = linear_matrix(f)
    m = len(rows)
    if exact:
        power_ok = _mat_pow(rows, n) == _mat_pow(rows, k)
    else:
        a = np.array(rows, dtype=float)
        diff = np.linalg.matrix_power(a, n) - np.linalg.matrix_power(a, k)
        power_ok = bool(np.max(np.abs(diff), initial=0.0) <= tol)
    if exact and m <= 4:
        spec_ok, diag = _spectral_exact(rows, n, k)
        mode = "exact"
    else:
        spec_ok, diag = _spectral_float(np.array(rows, dtype=float), n, k, tol)
        mode = "exact-power" if exact else "float"
    eig = np.linalg.eigvals(np.array(rows, dtype=float))
    eig = sorted((complex(v) for v in eig), key=lambda z: (round(z.real, 9), round(z.imag, 9)))
    return LinearReport(
        power_ok and spec_ok,
        bool(power_ok),
        bool(spec_ok),
        bool(power_ok) == bool(spec_ok),
        [[z.real, z.imag] for z in eig],
        diag,
        mode,
    )


# ---------------------------------------------------------------------------
# complex affine maps z -> a z + b


@dataclass
class AffineClass:
    kind: str  # rotation | identity | translation-no-solution | constant | no-solution
    satisfies: bool
    angle: float | None = None
    center: complex | None = None

    def to_dict(self) -> dict:
        center = None if self.center is None else [self.center.real, self.center.imag]
        return {"kind": self.kind, "satisfies": self.satisfies, "angle": self.angle, "center": center}


def _as_complex(v) -> complex:
    if isinstance(v, (tuple, list)):
        return complex(float(v[0]), float(v[1]))
    return complex(v)


def affine_complex_classify(a, b, n: int, k: int, tol: float = 1e-12) -> AffineClass:
    """Classify f(z) = a z + b against f^n = f^k."""
    if not n > k >= 0:
        raise ValueError("need n > k >= 0")
    a, b = _as_complex(a), _as_complex(b)
    if abs(a) <= tol:
        return AffineClass("constant", k >= 1, None, b)
    if abs(a - 1) <= tol:
        if abs(b) <= tol:
            return AffineClass("identity", True)
        return AffineClass("translation-no-solution", False)
    holds = abs(a ** (n - k) - 1) <= tol * max(1, n - k)
    if not holds:
        return AffineClass("no-solution", False, cmath.phase(a), b / (1 - a))
    return AffineClass("rotation", True, cmath.phase(a), b / (1 - a))
