"""Deterministic sample generators for windows and Hardy-Weinberg regions."""

from __future__ import annotations

import itertools
import math
from typing import Sequence

import numpy as np
from scipy.stats import qmc

Window = tuple[tuple[float, float], ...]


def as_window(window: Sequence[Sequence[float]]) -> Window:
    out = []
    for axis in window:
        lo, hi = (float(v) for v in axis)
        if not lo <= hi:
            raise ValueError(f"window axis [{lo}, {hi}] has lo > hi")
        out.append((lo, hi))
    return tuple(out)


def window_anchors(window: Window) -> np.ndarray:
    """Corners (for up to 6 axes) and the center of ``window``."""
    lo = np.array([a[0] for a in window])
    hi = np.array([a[1] for a in window])
    pts = [0.5 * (lo + hi)]
    if len(window) <= 6:
        for corner in itertools.product((0, 1), repeat=len(window)):
            c = np.array(corner, dtype=bool)
            pts.append(np.where(c, hi, lo))
    return np.array(pts)


def low_discrepancy(window: Sequence[Sequence[float]], count: int, seed: int = 0, anchors: bool = True) -> np.ndarray:
    """``count`` scrambled Sobol points scaled to ``window``.

    With ``anchors`` the window center and corners are prepended, so
    extreme deviations at the boundary are not missed.
    """
    window = as_window(window)
    d = len(window)
    lo = np.array([a[0] for a in window])
    hi = np.array([a[1] for a in window])
    if count > 0:
        sobol = qmc.Sobol(d, scramble=True, seed=seed)
        unit = sobol.random_base2(max(0, math.ceil(math.log2(count))))[:count]
        pts = lo + unit * (hi - lo)
    else:
        pts = np.empty((0, d))
    if anchors:
        pts = np.vstack([window_anchors(window), pts])
    return pts


def uniform_grid_1d(lo: float, hi: float, count: int) -> np.ndarray:
    return np.linspace(lo, hi, max(count, 2))


def genotype_simplex(k: int, count: int, seed: int = 0) -> np.ndarray:
    """Random points of the genotype-proportion simplex for ``k`` alleles.

    Coordinates follow the Hardy-Weinberg variable order (pairs i <= j,
    excluding the implied (k, k) entry).
    """
    rng = np.random.default_rng(seed)
    size = k * (k + 1) // 2
    full = rng.dirichlet(np.ones(size), size=count)
    return full[:, :-1]


def sexed_region(k: int, count: int, seed: int = 0) -> np.ndarray:
    """Random points of the product of two genotype simplices."""
    rng = np.random.default_rng(seed)
    size = k * (k + 1) // 2
    male = rng.dirichlet(np.ones(size), size=count)[:, :-1]
    female = rng.dirichlet(np.ones(size), size=count)[:, :-1]
    return np.hstack([male, female])
