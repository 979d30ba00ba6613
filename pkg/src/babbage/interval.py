"""Numerical image enclosures and image chains for maps of the real line."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .expr import EvaluationError

EPS = np.finfo(float).eps
SQRT_EPS = float(np.sqrt(EPS))
BISECT_WIDTH = 1e-12
REFINE_CANDIDATES = 8


@dataclass(frozen=True)
class Interval1:
    lo: float
    hi: float
    lo_closed: bool = True
    hi_closed: bool = True

    def __post_init__(self):
        lo, hi = float(self.lo), float(self.hi)
        if math.isnan(lo) or math.isnan(hi) or lo > hi:
            raise ValueError(f"invalid interval [{lo}, {hi}]")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        # infinite endpoints are always open
        if math.isinf(lo):
            object.__setattr__(self, "lo_closed", False)
        if math.isinf(hi):
            object.__setattr__(self, "hi_closed", False)

    @property
    def width(self) -> float:
        return self.hi - self.lo

    @property
    def bounded(self) -> bool:
        return math.isfinite(self.lo) and math.isfinite(self.hi)

    def contains(self, x: float, tol: float = 0.0) -> bool:
        return self.lo - tol <= x <= self.hi + tol

    def is_subset(self, other: "Interval1", tol: float = 0.0) -> bool:
        return other.lo - tol <= self.lo and self.hi <= other.hi + tol

    def intersect(self, other: "Interval1") -> "Interval1":
        lo, hi = max(self.lo, other.lo), min(self.hi, other.hi)
        if lo > hi:
            raise ValueError(f"empty intersection of {self} and {other}")
        lo_c = (self.lo_closed if self.lo >= other.lo else True) and (other.lo_closed if other.lo >= self.lo else True)
        hi_c = (self.hi_closed if self.hi <= other.hi else True) and (other.hi_closed if other.hi <= self.hi else True)
        return Interval1(lo, hi, lo_c, hi_c)

    def approx_equal(self, other: "Interval1", tol: float) -> bool:
        # closedness is informational only
        return abs(self.lo - other.lo) <= tol and abs(self.hi - other.hi) <= tol

    def row(self, slack: float = 0.0) -> list:
        return [self.lo, self.hi, self.lo_closed, self.hi_closed, slack]

    def __str__(self):
        left = "[" if self.lo_closed else "("
        right = "]" if self.hi_closed else ")"
        return f"{left}{self.lo:.12g}, {self.hi:.12g}{right}"


@dataclass
class Enclosure:
    interval: Interval1
    slack: float
    note: str = ""
    argmin: float = math.nan
    argmax: float = math.nan


def _clip(f, I: Interval1) -> tuple[Interval1, str]:
    if I.bounded:
        return I, ""
    if f.window is None:
        raise ValueError("unbounded interval and the map declares no window to clip to")
    lo_w, hi_w = f.window[0]
    clipped = Interval1(max(I.lo, lo_w), min(I.hi, hi_w))
    return clipped, f"clipped {I} to the declared window {clipped}"


def _values(f, xs: np.ndarray) -> np.ndarray:
    v = f.evaluate(np.asarray(xs, dtype=float).reshape(-1, 1))[:, 0]
    if not np.all(np.isfinite(v)):
        bad = float(np.asarray(xs).reshape(-1)[np.argmax(~np.isfinite(v))])
        raise EvaluationError(f"non-finite value at x = {bad!r}")
    return v


def _refine(f, a: np.ndarray, b: np.ndarray, sign: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Bisect on the sign of the derivative to locate extrema of sign*f in [a, b].

    Returns the best point and value seen per bracket, plus the final
    bracket variation used as a slack estimate.
    """
    a, b = a.copy(), b.copy()
    best_x = np.where(sign * _values(f, a) <= sign * _values(f, b), a, b)
    best_v = _values(f, best_x)
    for _ in range(200):
        width = b - a
        if np.all(width <= BISECT_WIDTH):
            break
        mid = 0.5 * (a + b)
        # below ~sqrt(eps) the difference quotient is rounding noise
        step = np.maximum(width * 1e-3, SQRT_EPS * (1 + np.abs(mid)))
        slope = sign * (_values(f, mid + step) - _values(f, mid - step))
        vm = _values(f, mid)
        better = sign * vm < sign * best_v
        best_x = np.where(better, mid, best_x)
        best_v = np.where(better, vm, best_v)
        # sign*f increasing at mid -> extremum lies to the left
        go_left = slope > 0
        a = np.where(go_left, a, mid)
        b = np.where(go_left, mid, b)
    va, vb = _values(f, a), _values(f, b)
    for cand in (a, b):
        vc = _values(f, cand)
        better = sign * vc < sign * best_v
        best_x = np.where(better, cand, best_x)
        best_v = np.where(better, vc, best_v)
    # two-sided spread about the midpoint also covers a kink inside the bracket
    vmid = _values(f, 0.5 * (a + b))
    variation = np.abs(va - vmid) + np.abs(vb - vmid)
    return best_x, best_v, variation


def enclose_image(f, I: Interval1, resolution: int = 4096) -> Enclosure:
    """Numerical enclosure of f(I): dense samples plus refinement of extrema."""
    if f.dim != 1:
        raise ValueError("enclose_image needs a one-dimensional map")
    I, note = _clip(f, I)
    if I.width == 0:
        v = float(_values(f, np.array([I.lo]))[0])
        slack = 4 * EPS * (1 + abs(v))
        return Enclosure(Interval1(v - slack, v + slack), slack, note, I.lo, I.lo)
    xs = np.linspace(I.lo, I.hi, max(resolution, 3))
    vs = _values(f, xs)
    slack_parts = [4 * EPS * (1 + float(np.max(np.abs(vs))))]

    def extreme(sign: float) -> tuple[float, float]:
        s = sign * vs
        i0 = int(np.argmin(s))
        best_x, best_v = float(xs[i0]), float(vs[i0])
        inner = s[1:-1]
        local = np.nonzero((inner <= s[:-2]) & (inner <= s[2:]))[0] + 1
        if len(local):
            order = local[np.argsort(s[local], kind="stable")][:REFINE_CANDIDATES]
            a = xs[order - 1]
            b = xs[order + 1]
            rx, rv, var = _refine(f, a, b, sign)
            j = int(np.argmin(sign * rv))
            if sign * rv[j] < sign * best_v:
                best_x, best_v = float(rx[j]), float(rv[j])
            slack_parts.append(float(var[j]))
        return best_x, best_v

    xmin, vmin = extreme(1.0)
    xmax, vmax = extreme(-1.0)
    slack = float(max(slack_parts))
    closed = I.lo_closed and I.hi_closed
    return Enclosure(Interval1(vmin - slack, vmax + slack, closed, closed), slack, note, xmin, xmax)


@dataclass
class ImageChain:
    intervals: list[Interval1]
    slacks: list[float]
    notes: list[str] = field(default_factory=list)

    def rows(self) -> list[list]:
        return [iv.row(s) for iv, s in zip(self.intervals, self.slacks)]

    def to_dict(self) -> dict:
        return {"chain": self.rows(), "notes": list(self.notes)}


def image_chain(f, I: Interval1, k: int, resolution: int = 4096) -> ImageChain:
    """I, f(I), ..., f^k(I), each enclosure intersected with the previous step."""
    if k < 0:
        raise ValueError("k must be non-negative")
    I, note = _clip(f, I)
    intervals, slacks, notes = [I], [0.0], [note] if note else []
    current = I
    for _ in range(k):
        enc = enclose_image(f, current, resolution)
        try:
            current = enc.interval.intersect(current)
        except ValueError:
            raise ValueError(f"image enclosure {enc.interval} misses the previous step {current}") from None
        intervals.append(current)
        slacks.append(enc.slack)
    return ImageChain(intervals, slacks, notes)


@dataclass
class Verification1D:
    n: int
    k: int
    reduction: str
    verified: bool
    restriction: object
    chain: ImageChain
    deviation: float
    witness: float | None
    endpoint_quotients: dict

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "k": self.k,
            "reduction": self.reduction,
            "verified": self.verified,
            "restriction": self.restriction.to_dict(),
            "chain": self.chain.rows(),
            "deviation": self.deviation,
            "witness": self.witness,
            "endpoint_quotients": self.endpoint_quotients,
        }


def verify_1d_equation(f, I: Interval1, n: int, k: int, resolution: int = 4096, tol: float = 1e-9) -> Verification1D:
    """Reduce f^n = f^k to f^(k+1) = f^k (n-k odd) or f^(k+2) = f^k (n-k even) and check it."""
    from .equations import restriction_classify

    if not n > k >= 1:
        raise ValueError("need n > k >= 1")
    step = 1 if (n - k) % 2 else 2
    reduction = f"f^{k + step} = f^{k}"
    chain = image_chain(f, I, k, resolution)
    image = chain.intervals[-1]
    restr = restriction_classify(f, image, resolution, tol)
    label_ok = restr.label == "identity" or (step == 2 and restr.label == "involution")

    base = chain.intervals[0]
    xs = np.linspace(base.lo, base.hi, max(resolution, 2))
    fk = f.iterate_points(xs[:, None], k)
    fks = f.iterate_points(fk, step)
    diff = np.abs(fks - fk)[:, 0]
    diff = np.where(np.isnan(diff), np.inf, diff)
    i = int(np.argmax(diff))
    deviation = float(diff[i])
    witness = None if deviation <= tol else float(xs[i])
    quotients = _endpoint_quotients(f, image)
    return Verification1D(n, k, reduction, label_ok and deviation <= tol, restr, chain, deviation, witness, quotients)


def _endpoint_quotients(f, image: Interval1, h: float = 1e-6) -> dict:
    """One-sided difference quotients of f at the ends of the image."""
    out = {}
    for name, x in (("lo", image.lo), ("hi", image.hi)):
        fx, fl, fr = _values(f, np.array([x, x - h, x + h]))
        out[name] = {"left": float((fx - fl) / h), "right": float((fr - fx) / h)}
    return out
