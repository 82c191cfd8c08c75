"""Monotone transport maps, their fixed point structure, and orbit grids.

The increasing rearrangement between two measures is
T = quantile_target o cdf_source.  Composition goes through (p, 1-p) pairs so
both tails keep full precision, and the derivative comes from the density
ratio dT/dx = pdf_source(x) / pdf_target(T(x)) with a finite difference
fallback where the ratio degenerates.

Fixed point detection scans T(x) - x on a dyadic grid, refines isolated sign
changes with a bracketing root solve, refines tangential touches through local
minima of |T(x) - x|, and merges plateau runs into fixed intervals.  The
complement decomposes into open intervals on which x and T(x) move the same
direction; each carries that direction sign.

Orbit grids iterate x_{k+1} = T(x_k) (or the inverse) until a boundary, a step
floor, or a step cap is hit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .config import DEFAULT_CONFIG, BuildConfig
from .errors import DegenerateOrbitError, InputError, InvalidMapError
from .measures import Measure1D

__all__ = [
    "MonotoneMap",
    "compute_monotone_map",
    "map_from_callables",
    "map_derivative",
    "FixedPointPartition",
    "MovingInterval",
    "find_fixed_points",
    "OrbitStop",
    "OrbitGrid",
    "build_orbit_grid",
]

# probabilities are clamped away from exact 0/1 before quantile composition so
# unbounded targets map support endpoints to (large) finite points
_P_FLOOR = 1e-300


# ======================================================================
# map objects
# ======================================================================

@dataclass(frozen=True)
class MonotoneMap:
    """Strictly increasing map with derivative, inverse, and optional curvature.

    forward/derivative/inverse/second_derivative accept scalars or arrays.
    second_derivative is None when the underlying densities provide no
    derivative; consumers fall back to finite differences.
    """

    forward: Callable
    derivative: Callable
    inverse: Callable
    second_derivative: Callable | None = None
    source: Measure1D | None = None
    target: Measure1D | None = None
    label: str = "monotone-map"

    def __call__(self, x):
        return self.forward(x)


def compute_monotone_map(m0: Measure1D, m1: Measure1D) -> MonotoneMap:
    """Increasing rearrangement pushing m0 onto m1, via tail-paired quantiles."""

    def forward(x):
        p, q = m0.cdf_pair(x)
        p = np.clip(p, _P_FLOOR, 1.0)
        q = np.clip(q, _P_FLOOR, 1.0)
        return m1.quantile_pair(p, q)

    def derivative(x):
        return _density_ratio_derivative(m0, m1, forward, x)

    def inverse(y):
        p, q = m1.cdf_pair(y)
        p = np.clip(p, _P_FLOOR, 1.0)
        q = np.clip(q, _P_FLOOR, 1.0)
        return m0.quantile_pair(p, q)

    second = None
    if m0.has_pdf_derivative and m1.has_pdf_derivative:
        def second(x):  # noqa: F811 - deliberate conditional definition
            y = forward(x)
            dT = derivative(x)
            num = m0.pdf_derivative(x) - dT * dT * m1.pdf_derivative(y)
            den = m1.pdf(y)
            return _guarded_div(num, den)

    return MonotoneMap(forward, derivative, inverse, second, m0, m1,
                       label="quantile-composition")


def _guarded_div(num, den):
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(den != 0.0, num / np.where(den != 0.0, den, 1.0), np.nan)
    if out.ndim == 0:
        return float(out)
    return out


def _density_ratio_derivative(m0, m1, forward, x):
    """dT/dx = pdf0(x)/pdf1(T(x)), with a central difference where 0/0."""
    x_arr = np.asarray(x, dtype=float)
    scalar = x_arr.ndim == 0
    x_arr = np.atleast_1d(x_arr)
    y = np.asarray(forward(x_arr), dtype=float)
    p0 = np.atleast_1d(np.asarray(m0.pdf(x_arr), dtype=float))
    p1 = np.atleast_1d(np.asarray(m1.pdf(y), dtype=float))
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(p1 > 0.0, p0 / np.where(p1 > 0.0, p1, 1.0), np.nan)
    bad = ~np.isfinite(out)
    if np.any(bad):
        lo, hi = m0.support
        w = _finite_width(m0)
        h = max(1e-7 * w, 1e-12)
        xb = x_arr[bad]
        xl = np.maximum(xb - h, lo if math.isfinite(lo) else xb - h)
        xr = np.minimum(xb + h, hi if math.isfinite(hi) else xb + h)
        with np.errstate(invalid="ignore"):
            fd = (np.asarray(forward(xr), dtype=float)
                  - np.asarray(forward(xl), dtype=float)) / (xr - xl)
        out[bad] = fd
    return float(out[0]) if scalar else out


def _finite_width(m: Measure1D) -> float:
    lo, hi = m.window(1e-10)
    return max(hi - lo, 1e-300)


def map_from_callables(forward: Callable, *, inverse: Callable | None = None,
                       derivative: Callable | None = None,
                       second_derivative: Callable | None = None,
                       source: Measure1D | None = None,
                       target: Measure1D | None = None,
                       domain: tuple[float, float] | None = None,
                       label: str = "callable-map") -> MonotoneMap:
    """Wrap closed-form map callables, filling gaps numerically.

    A missing derivative becomes a central difference; a missing inverse becomes
    a bracketed root solve on the given domain (required in that case).
    """
    if derivative is None:
        scale = 1.0
        if domain is not None:
            scale = max(abs(domain[0]), abs(domain[1]), 1.0)

        def derivative(x, _f=forward, _s=scale):
            x = np.asarray(x, dtype=float)
            h = (np.abs(x) + _s) * 6.0e-6
            return (np.asarray(_f(x + h), dtype=float)
                    - np.asarray(_f(x - h), dtype=float)) / (2.0 * h)

    if inverse is None:
        if domain is None:
            raise InputError("map_from_callables: domain is required to invert numerically")
        lo, hi = domain

        def inverse(y, _f=forward, _lo=lo, _hi=hi):
            y_arr = np.asarray(y, dtype=float)
            scalar = y_arr.ndim == 0
            y_arr = np.atleast_1d(y_arr)
            out = np.empty_like(y_arr)
            for i, yi in enumerate(y_arr):
                out[i] = brentq(lambda t: float(_f(t)) - yi, _lo, _hi, xtol=1e-15)
            return float(out[0]) if scalar else out

    return MonotoneMap(forward, derivative, inverse, second_derivative,
                       source, target, label=label)


def map_derivative(T: MonotoneMap, x):
    """Derivative of the map at x (vectorized)."""
    return T.derivative(x)


# ======================================================================
# fixed point structure
# ======================================================================

@dataclass(frozen=True)
class MovingInterval:
    """Open interval between fixed boundaries on which the map moves one way."""

    lo: float
    hi: float
    direction: int          # +1 if T(x) > x on the interval, -1 if T(x) < x
    lo_is_fixed: bool       # True when the endpoint is a fixed boundary of the map
    hi_is_fixed: bool

    @property
    def width(self) -> float:
        return self.hi - self.lo


@dataclass(frozen=True)
class FixedPointPartition:
    """Fixed set of a monotone map plus the signed moving complement.

    fixed_intervals are closed, disjoint, sorted; single points appear as
    degenerate [a, a] intervals.  moving_intervals partition the rest of the
    working domain.  indeterminate marks fixed boundaries where |T' - 1| falls
    below the configured threshold (orbit truncation will be harmonic there).
    """

    domain: tuple[float, float]
    fixed_intervals: tuple[tuple[float, float], ...]
    moving_intervals: tuple[MovingInterval, ...]
    indeterminate: tuple[float, ...] = ()

    @property
    def fixed_points(self) -> tuple[float, ...]:
        """Flat sorted list of fixed-interval endpoints (plateaus contribute two)."""
        out = []
        for a, b in self.fixed_intervals:
            out.append(a)
            if b != a:
                out.append(b)
        return tuple(out)

    def locate(self, x: float) -> tuple[str, int]:
        """Classify a point: ('fixed', i) or ('moving', i) or ('outside', -1)."""
        for i, (a, b) in enumerate(self.fixed_intervals):
            if a <= x <= b:
                return ("fixed", i)
        for i, itv in enumerate(self.moving_intervals):
            if itv.lo <= x <= itv.hi:
                return ("moving", i)
        return ("outside", -1)


def find_fixed_points(T: MonotoneMap, *, domain: tuple[float, float] | None = None,
                      config: BuildConfig = DEFAULT_CONFIG,
                      search: tuple[float, float] | None = None) -> FixedPointPartition:
    """Locate the fixed set of T and the signed moving intervals around it.

    domain is the working interval the partition should cover (defaults to the
    convex hull of the source and target windows); search restricts where fixed
    points may occur (defaults to the source window, where the map is defined).
    """
    if domain is None:
        if T.source is None or T.target is None:
            raise InputError("find_fixed_points: domain required for measure-free maps")
        w0 = T.source.window(config.eps_tail)
        w1 = T.target.window(config.eps_tail)
        domain = (min(w0[0], w1[0]), max(w0[1], w1[1]))
    if search is None:
        if T.source is not None:
            search = T.source.window(config.eps_tail)
        else:
            search = domain
    lo, hi = float(domain[0]), float(domain[1])
    slo, shi = max(float(search[0]), lo), min(float(search[1]), hi)
    if not shi > slo:
        raise InputError("find_fixed_points: empty search interval")
    width = hi - lo
    tol = config.fixed_point_tol_rel * width

    n = int(config.fixed_point_grid)
    xs = np.linspace(slo, shi, n + 1)
    g = np.asarray(T.forward(xs), dtype=float) - xs
    if not np.all(np.isfinite(g)):
        raise InvalidMapError("find_fixed_points: map returned non-finite values on the grid")

    fixed: list[tuple[float, float]] = []
    near = np.abs(g) <= tol

    # --- plateau runs of near-zero displacement -------------------------------
    i = 0
    while i <= n:
        if near[i]:
            j = i
            while j + 1 <= n and near[j + 1]:
                j += 1
            a = _refine_plateau_edge(T, xs, g, i, tol, left=True)
            b = _refine_plateau_edge(T, xs, g, j, tol, left=False)
            fixed.append((a, b))
            i = j + 1
        else:
            i += 1

    # --- isolated sign changes ------------------------------------------------
    sgn = np.sign(g)
    for k in range(n):
        if near[k] or near[k + 1]:
            continue
        if sgn[k] * sgn[k + 1] < 0:
            r = brentq(lambda t: float(T.forward(t)) - t, xs[k], xs[k + 1],
                       xtol=max(tol, 1e-15))
            fixed.append((r, r))

    # --- tangential touches: local minima of |g| dipping well below scale -----
    ag = np.abs(g)
    cand_tol = max(tol * 1e6, (4.0 * (shi - slo) / n) ** 2)
    for k in range(1, n):
        if near[k] or sgn[k - 1] * sgn[k + 1] < 0:
            continue
        if ag[k] < ag[k - 1] and ag[k] < ag[k + 1] and ag[k] <= cand_tol:
            res = minimize_scalar(lambda t: abs(float(T.forward(t)) - t),
                                  bounds=(xs[k - 1], xs[k + 1]), method="bounded",
                                  options={"xatol": max(tol * 1e-3, 1e-15)})
            if abs(res.fun) <= tol:
                r = float(res.x)
                fixed.append((r, r))

    fixed = _merge_intervals(fixed, gap=max(tol, 4.0 * (shi - slo) / n * 1e-6))

    # --- flag fixed boundaries with slope numerically 1 -----------------------
    indeterminate: list[float] = []
    for a, b in fixed:
        for e in {a, b}:
            try:
                de = float(np.asarray(T.derivative(e), dtype=float))
            except Exception:
                de = np.nan
            if not np.isfinite(de) or abs(de - 1.0) <= config.indeterminate_slope_tol:
                indeterminate.append(e)

    # --- moving complement ----------------------------------------------------
    moving: list[MovingInterval] = []
    prev = lo
    for a, b in fixed:
        if a > prev + max(tol, 0.0):
            moving.append(_make_moving(T, prev, a, prev > lo or _is_fixed_at(fixed, prev),
                                       True, slo, shi, tol))
        prev = max(prev, b)
    if hi > prev + max(tol, 0.0):
        moving.append(_make_moving(T, prev, hi, _is_fixed_at(fixed, prev), False,
                                   slo, shi, tol))

    return FixedPointPartition(domain=(lo, hi),
                               fixed_intervals=tuple(fixed),
                               moving_intervals=tuple(moving),
                               indeterminate=tuple(sorted(set(indeterminate))))


def _is_fixed_at(fixed, x):
    return any(abs(x - a) == 0.0 or abs(x - b) == 0.0 for a, b in fixed)


def _make_moving(T, a, b, lo_fixed, hi_fixed, slo, shi, tol):
    """Build a MovingInterval, reading the direction inside the searchable part."""
    pa, pb = max(a, slo), min(b, shi)
    if pb <= pa:
        # interval lies outside where T is defined; direction from the nearer side
        mid = 0.5 * (a + b)
        probe = np.clip(mid, slo, shi)
        probes = np.array([probe])
    else:
        probes = pa + (pb - pa) * np.array([0.25, 0.5, 0.75])
    gv = np.asarray(T.forward(probes), dtype=float) - probes
    gv = gv[np.abs(gv) > tol]
    if gv.size == 0:
        direction = 0
    else:
        s = np.sign(gv)
        if not np.all(s == s[0]):
            raise InvalidMapError(
                f"moving interval ({a:.6g}, {b:.6g}): displacement changes sign "
                "away from the detected fixed set; refine the fixed point grid")
        direction = int(s[0])
    if direction == 0:
        raise InvalidMapError(
            f"moving interval ({a:.6g}, {b:.6g}): displacement is numerically zero; "
            "fixed point detection missed a plateau")
    return MovingInterval(a, b, direction, lo_fixed, hi_fixed)


def _refine_plateau_edge(T, xs, g, idx, tol, *, left):
    """Push a plateau edge to sub-grid accuracy by bisecting |T(x) - x| = tol."""
    n = len(xs) - 1
    if left:
        if idx == 0:
            return float(xs[0])
        a, b = xs[idx - 1], xs[idx]
    else:
        if idx == n:
            return float(xs[n])
        a, b = xs[idx], xs[idx + 1]
    f = lambda t: abs(float(T.forward(t)) - t) - tol
    fa, fb = f(a), f(b)
    if fa == 0.0:
        return float(a)
    if fb == 0.0:
        return float(b)
    if (fa < 0) == (fb < 0):
        return float(xs[idx])
    r = brentq(f, a, b, xtol=1e-15)
    return float(r)


def _merge_intervals(intervals, gap):
    if not intervals:
        return []
    ivs = sorted((float(a), float(b)) for a, b in intervals)
    out = [list(ivs[0])]
    for a, b in ivs[1:]:
        if a <= out[-1][1] + gap:
            out[-1][1] = max(out[-1][1], b)
        else:
            out.append([a, b])
    return [(a, b) for a, b in out]


# ======================================================================
# orbit grids
# ======================================================================

@dataclass(frozen=True)
class OrbitStop:
    """Stopping rule for orbit iteration."""

    min_step: float = 0.0       # absolute step floor
    max_steps: int = 10 ** 6
    boundary_lo: float = -math.inf
    boundary_hi: float = math.inf


@dataclass(frozen=True)
class OrbitGrid:
    """Iterates x, T(x), T(T(x)), ... with the reason iteration stopped."""

    anchors: np.ndarray
    seed_interval: tuple[float, float]
    reason: str                 # "boundary" | "min-step" | "max-steps"

    @property
    def depth(self) -> int:
        return self.anchors.size - 1


def build_orbit_grid(step_fn: Callable, x0: float, stop: OrbitStop,
                     *, label: str = "orbit") -> OrbitGrid:
    """Iterate step_fn from x0 under the given stopping rule.

    Raises DegenerateOrbitError when the very first step already falls under the
    step floor (x0 is numerically fixed).
    """
    x = float(x0)
    anchors = [x]
    reason = "max-steps"
    first = float(step_fn(x))
    if not math.isfinite(first):
        raise InvalidMapError(f"{label}: step map returned non-finite value at {x:.6g}")
    if abs(first - x) <= stop.min_step:
        raise DegenerateOrbitError(
            f"{label}: start {x0:.6g} is a fixed point to within the step floor")
    for _ in range(stop.max_steps):
        nxt = float(step_fn(x))
        if not math.isfinite(nxt):
            raise InvalidMapError(f"{label}: step map returned non-finite value at {x:.6g}")
        if nxt < stop.boundary_lo or nxt > stop.boundary_hi:
            reason = "boundary"
            break
        anchors.append(nxt)
        if abs(nxt - x) <= stop.min_step:
            reason = "min-step"
            x = nxt
            break
        x = nxt
    else:
        reason = "max-steps"
    arr = np.asarray(anchors, dtype=float)
    seed = (float(arr[0]), float(arr[1])) if arr.size > 1 else (float(arr[0]), float(arr[0]))
    return OrbitGrid(anchors=arr, seed_interval=seed, reason=reason)
