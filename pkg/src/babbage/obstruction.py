"""Grid evidence against linearizability: preimage components, crossings, critical points."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import ndimage
from scipy.optimize import least_squares

from . import expr as E
from .maps import MapSpec

# per-axis cap used when doubling the grid for the stability check
REFINE_CAP = {1: 1 << 20, 2: 4096, 3: 256, 4: 80}
CHUNK_POINTS = 1 << 17


@dataclass(frozen=True)
class GridWindow:
    bounds: tuple[tuple[float, float], ...]
    cells: tuple[int, ...]

    def __post_init__(self):
        bounds = tuple((float(a), float(b)) for a, b in self.bounds)
        cells = tuple(int(c) for c in self.cells)
        if len(cells) == 1 and len(bounds) > 1:
            cells = cells * len(bounds)
        if len(bounds) == 1 and len(cells) > 1:
            bounds = bounds * len(cells)
        if len(bounds) != len(cells):
            raise ValueError("bounds and cell counts have different lengths")
        for lo, hi in bounds:
            if not lo < hi:
                raise ValueError(f"grid axis [{lo}, {hi}] needs lo < hi")
        if any(c < 8 for c in cells):
            raise ValueError("grids need at least 8 cells per axis")
        object.__setattr__(self, "bounds", bounds)
        object.__setattr__(self, "cells", cells)

    @property
    def ndim(self) -> int:
        return len(self.cells)

    @property
    def cell_size(self) -> tuple[float, ...]:
        return tuple((hi - lo) / n for (lo, hi), n in zip(self.bounds, self.cells))

    def centers(self, axis: int) -> np.ndarray:
        lo, _ = self.bounds[axis]
        h = self.cell_size[axis]
        return lo + (np.arange(self.cells[axis]) + 0.5) * h

    def nodes(self, axis: int) -> np.ndarray:
        lo, hi = self.bounds[axis]
        return np.linspace(lo, hi, self.cells[axis] + 1)

    def center_of(self, index: Sequence[int]) -> list[float]:
        return [float(self.centers(a)[i]) for a, i in enumerate(index)]

    def refined(self, cap: int | None = None) -> "GridWindow":
        cap = cap if cap is not None else REFINE_CAP.get(self.ndim, 64)
        return GridWindow(self.bounds, tuple(min(2 * c, max(cap, c)) for c in self.cells))


@dataclass
class ComponentReport:
    count: int
    representatives: list[list[float]]
    resolution: list[int]
    stable: bool | None
    refined_count: int | None = None
    refined_resolution: list[int] | None = None
    marked_cells: int = 0
    factor: float = 1.0
    rule: str = "|F_j(c) - t_j| <= factor * (h/2) * (1 + sum_i |dF_j/dx_i(c)|) for every j"
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _gradients(comps: Sequence[E.Expr], ndim: int):
    """Symbolic partials per component, or None to request finite differences."""
    out = []
    for c in comps:
        try:
            out.append([E.derivative(c, i) for i in range(ndim)])
        except E.NotDifferentiableError:
            out.append(None)
    return out


def _eval(e: E.Expr, cols: list[np.ndarray]) -> np.ndarray:
    return np.broadcast_to(np.asarray(E.eval_expr(e, cols), dtype=float), cols[0].shape)


def _grad_abs_sum(c: E.Expr, partials, cols: list[np.ndarray], steps: Sequence[float]) -> np.ndarray:
    total = np.zeros(cols[0].shape)
    for i in range(len(cols)):
        if partials is not None:
            d = _eval(partials[i], cols)
        else:
            hi = list(cols)
            lo = list(cols)
            hi[i] = cols[i] + steps[i]
            lo[i] = cols[i] - steps[i]
            d = (_eval(c, hi) - _eval(c, lo)) / (2 * steps[i])
        total = total + np.abs(d)
    return total


def mark_cells(comps: Sequence[E.Expr], target: Sequence[float], window: GridWindow, factor: float = 1.0) -> np.ndarray:
    """Boolean grid of cells whose center satisfies the gradient-scaled level test."""
    ndim = window.ndim
    if not 1 <= ndim <= 4:
        raise ValueError(f"unsupported dimension {ndim}; grids support 1 to 4 axes")
    if len(comps) != len(target):
        raise ValueError("target length does not match the number of components")
    grads = _gradients(comps, ndim)
    h = max(window.cell_size)
    steps = [s / 4 for s in window.cell_size]
    axes = [window.centers(a) for a in range(ndim)]
    mask = np.zeros(window.cells, dtype=bool)
    flat = mask.reshape(-1)
    total = flat.size
    with np.errstate(all="ignore"):
        for start in range(0, total, CHUNK_POINTS):
            stop = min(start + CHUNK_POINTS, total)
            index = np.unravel_index(np.arange(start, stop), window.cells)
            cols = [axes[a][index[a]] for a in range(ndim)]
            ok = np.ones(stop - start, dtype=bool)
            for c, partials, t in zip(comps, grads, target):
                val = _eval(c, cols)
                thresh = factor * (h / 2) * (1 + _grad_abs_sum(c, partials, cols, steps))
                ok &= np.abs(val - float(t)) <= thresh
                if not ok.any():
                    break
            flat[start:stop] = ok
    return mask


def label_components(mask: np.ndarray) -> tuple[np.ndarray, int]:
    """Face-adjacent connected components of a boolean grid."""
    structure = ndimage.generate_binary_structure(mask.ndim, 1)
    labels, count = ndimage.label(mask, structure=structure)
    return labels, int(count)


def _representatives(labels: np.ndarray, count: int, window: GridWindow) -> list[list[float]]:
    if count == 0:
        return []
    where = np.flatnonzero(labels)
    uniq, first = np.unique(labels.reshape(-1)[where], return_index=True)
    return [window.center_of(np.unravel_index(where[i], labels.shape)) for i in first]


def _components(comps, target, window: GridWindow, factor: float, check_stability: bool, cap: int | None) -> ComponentReport:
    mask = mark_cells(comps, target, window, factor)
    labels, count = label_components(mask)
    reps = _representatives(labels, count, window)
    marked = int(mask.sum())
    del mask, labels
    report = ComponentReport(count, reps, list(window.cells), None, marked_cells=marked, factor=factor)
    if check_stability:
        fine = window.refined(cap)
        if fine.cells == window.cells:
            report.notes.append("refinement cap reached; stability not checked")
        else:
            fmask = mark_cells(comps, target, fine, factor)
            _, fcount = label_components(fmask)
            report.refined_count = fcount
            report.refined_resolution = list(fine.cells)
            report.stable = fcount == count
            if fine.cells != tuple(2 * c for c in window.cells):
                report.notes.append(f"refinement capped at {list(fine.cells)}")
    return report


def preimage_components(
    f: MapSpec,
    target: Sequence[float],
    window: GridWindow,
    factor: float = 1.0,
    check_stability: bool = True,
    cap: int | None = None,
) -> ComponentReport:
    """Count connected components of f^{-1}(target) on a grid."""
    if window.ndim != f.dim:
        raise ValueError(f"grid has {window.ndim} axes for a {f.dim}-dimensional map")
    if len(target) != f.dim:
        raise ValueError("target length must equal the map dimension")
    return _components(f.components, target, window, factor, check_stability, cap)


def fixed_point_sample(
    f: MapSpec,
    window: GridWindow,
    factor: float = 1.0,
    check_stability: bool = True,
    cap: int | None = None,
) -> ComponentReport:
    """Components of the fixed set {z : f(z) = z}, from the displacement f - Id."""
    if window.ndim != f.dim:
        raise ValueError(f"grid has {window.ndim} axes for a {f.dim}-dimensional map")
    disp = [c - v for c, v in zip(f.components, E.variables(f.vars))]
    return _components(disp, [0.0] * f.dim, window, factor, check_stability, cap)


def write_marked_csv(path: str, comps: Sequence[E.Expr], target: Sequence[float], window: GridWindow, factor: float = 1.0) -> int:
    """Write the centers of marked cells (and their component label) as CSV; returns the row count."""
    mask = mark_cells(comps, target, window, factor)
    labels, _ = label_components(mask)
    idx = np.argwhere(mask)
    axes = [window.centers(a) for a in range(window.ndim)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"c{a}" for a in range(window.ndim)] + ["component"])
        for row in idx:
            w.writerow([repr(float(axes[a][i])) for a, i in enumerate(row)] + [int(labels[tuple(row)])])
    return len(idx)


# ---------------------------------------------------------------------------
# local structure of plane level sets


def local_branch_count(g: E.Expr, point: Sequence[float], radius: float = 0.1, circle_samples: int = 720, tol: float = 1e-9) -> int:
    """Half the number of sign changes of g on a small circle around ``point``."""
    x0, y0 = (float(v) for v in point)
    v0 = float(E.eval_expr(g, [x0, y0]))
    if abs(v0) > tol:
        raise ValueError(f"point is not on the level set (g = {v0:.3g})")
    theta = np.linspace(0.0, 2 * math.pi, circle_samples, endpoint=False)
    xs = x0 + radius * np.cos(theta)
    ys = y0 + radius * np.sin(theta)
    vals = _eval(g, [xs, ys])
    signs = np.sign(vals)
    signs = signs[signs != 0]
    if len(signs) == 0:
        return 0
    changes = int(np.sum(signs != np.roll(signs, 1)))
    return changes // 2


# ---------------------------------------------------------------------------
# critical points


@dataclass
class VanishCell:
    index: list[int]
    center: list[float]
    point: list[float]
    grad_norm: float
    value: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _node_values(exprs: Sequence[E.Expr], window: GridWindow) -> list[np.ndarray]:
    grids = np.meshgrid(*[window.nodes(a) for a in range(window.ndim)], indexing="ij")
    cols = [g.ravel() for g in grids]
    with np.errstate(all="ignore"):
        return [_eval(e, cols).reshape(grids[0].shape) for e in exprs]


def _corner_extremes(values: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-cell min, max and min |.| over the 2^d corners of each cell."""
    nd = values.ndim
    lo = hi = amin = None
    for corner in np.ndindex(*(2,) * nd):
        sl = tuple(slice(c, c + n - 1) for c, n in zip(corner, values.shape))
        v = values[sl]
        lo = v if lo is None else np.minimum(lo, v)
        hi = v if hi is None else np.maximum(hi, v)
        amin = np.abs(v) if amin is None else np.minimum(amin, np.abs(v))
    return lo, hi, amin


def gradient_vanish_scan(g: E.Expr, window: GridWindow, tol: float = 1e-6, max_candidates: int = 20000) -> list[VanishCell]:
    """Cells where the gradient of g vanishes (to ``tol`` after local refinement)."""
    ndim = window.ndim
    if E.max_var_index(g) >= ndim:
        raise ValueError("expression has more variables than the grid")
    try:
        partials = [E.derivative(g, i) for i in range(ndim)]
        numeric = False
    except E.NotDifferentiableError:
        partials = None
        numeric = True
    if numeric:
        steps = [s / 8 for s in window.cell_size]

        def grad_at(z):
            cols = [np.atleast_1d(np.asarray(v, dtype=float)) for v in z]
            out = []
            for i in range(ndim):
                hi = list(cols)
                lo = list(cols)
                hi[i] = cols[i] + steps[i]
                lo[i] = cols[i] - steps[i]
                out.append((_eval(g, hi) - _eval(g, lo)) / (2 * steps[i]))
            return out

        grids = np.meshgrid(*[window.nodes(a) for a in range(ndim)], indexing="ij")
        node_grads = [v.reshape(grids[0].shape) for v in grad_at([gr.ravel() for gr in grids])]
    else:
        def grad_at(z):
            cols = [np.atleast_1d(np.asarray(v, dtype=float)) for v in z]
            return [_eval(p, cols) for p in partials]

        node_grads = _node_values(partials, window)

    candidate = np.ones(window.cells, dtype=bool)
    for vals in node_grads:
        lo, hi, amin = _corner_extremes(vals)
        crosses = (lo <= 0) & (hi >= 0)
        near = amin <= np.maximum(tol, hi - lo)
        candidate &= crosses | near
    idx = np.argwhere(candidate)
    if len(idx) > max_candidates:
        raise ValueError(f"{len(idx)} candidate cells; refine the grid or lower the tolerance")
    h = window.cell_size
    out = []
    for cell in idx:
        lo = np.array([window.bounds[a][0] + cell[a] * h[a] for a in range(ndim)])
        hi = lo + np.array(h)
        center = 0.5 * (lo + hi)
        # a little room so roots on a cell face are reachable from inside
        pad = 0.25 * np.array(h)
        res = least_squares(
            lambda z: np.array([float(v[0]) for v in grad_at(z)]),
            center,
            bounds=(lo - pad, hi + pad),
            xtol=1e-15,
            ftol=1e-15,
            gtol=1e-15,
        )
        z = res.x
        gn = float(max(abs(float(v[0])) for v in grad_at(z)))
        if gn <= tol:
            val = float(_eval(g, [np.atleast_1d(v) for v in z])[0])
            out.append(VanishCell(cell.tolist(), center.tolist(), z.tolist(), gn, val))
    return out
