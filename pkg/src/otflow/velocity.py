"""Autonomous velocity fields whose unit-time flow realizes a monotone map.

Construction, per moving interval of the map's fixed point partition:

  1. Seed.  Pick an anchor x0 (the trailing interval end when it is free, the
     midpoint of the source portion when the trailing end is a fixed point) and
     prescribe v freely on the seed interval [x0, T(x0)] as a polynomial
     profile.  The profile is scaled so the travel time across the seed,
     integral of dx/v, is exactly one.

  2. Closure.  Propagate node tables through the functional equation
     v(T(x)) = T'(x) v(x) and its derivative recursion
     v'(T(x)) = v'(x) + v(x) T''(x)/T'(x), forward by T toward the leading end
     and backward by T^(-1) toward the trailing end.  Each orbit step yields
     one interpolation piece whose node values and node derivatives satisfy
     the functional equation exactly; between nodes the field is a cubic
     Hermite interpolant.

  3. Primitive.  Alongside v the primitive F with F' = 1/v is accumulated:
     quadrature on the seed, then exact unit shifts F(T(x)) = F(x) + 1 across
     pieces.  (F, F^(-1)) drive the flow phi(t, x) = F^(-1)(F(x) + t) and make
     the unit-travel-time property a structural identity at the nodes.

Orbit marching stops at a free boundary, below a step floor, or at a step cap;
near fixed ends the remaining gap is recorded as a truncation zone where the
field continues by the linear pinch v = rate * (x - fp).  Moving intervals
narrower than a resolution floor are left unbuilt and flagged.

Array convention: while marching, node arrays are kept in motion order (from
the anchor toward the image), so index relations are direction independent:
a forward piece's first node coincides with its source's last node, a backward
piece's last node coincides with its source's first node.  Junction nodes are
bitwise equal by evaluation chaining (forward) or explicit pinning (backward),
so assembled breakpoints dedupe exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.polynomial import Polynomial
from scipy.integrate import quad
from scipy.interpolate import CubicHermiteSpline, PPoly

from .config import DEFAULT_CONFIG, BuildConfig
from .errors import (ConstructionError, DegenerateOrbitError, InputError,
                     NormalizationError, SearchFailureError,
                     SeedCompatibilityError, SeedSignError)
from .measures import Measure1D, translate
from .monotone import (FixedPointPartition, MonotoneMap, MovingInterval,
                       compute_monotone_map, find_fixed_points)

__all__ = [
    "SeedSpec",
    "TruncationZone",
    "IntervalField",
    "UnbuiltInterval",
    "VelocityField1D",
    "build_velocity",
    "build_no_fixed_point",
    "build_one_fixed_point",
    "build_two_fixed_points",
    "time_normalize",
    "julia_residual",
    "approximate_lipschitz",
    "ApproximateResult",
]

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)


# ======================================================================
# seed profiles
# ======================================================================

@dataclass(frozen=True)
class SeedSpec:
    """Free data prescribed on a seed interval.

    kind:
        "constant"    v identically v0 (requires T'(x0) = 1)
        "affine"      straight line between the two forced endpoint values
        "hermite_ck"  C^k junction matching; order_k = 1 gives a cubic whose
                      endpoint derivatives satisfy the derivative recursion
    v0: signed value at the anchor x0 (default: the displacement T(x0) - x0).
    d1: free slope at the anchor for hermite_ck (default: the affine slope).

    The overall scale of the profile is irrelevant; unit-time normalization
    fixes it, so seeds differing by a constant factor give the same field.
    """

    kind: str = "affine"
    order_k: int = 1
    v0: float | None = None
    d1: float | None = None

    def __post_init__(self):
        if self.kind not in ("constant", "affine", "hermite_ck"):
            raise InputError(f"SeedSpec: unknown kind {self.kind!r}")
        if self.kind == "hermite_ck" and self.order_k not in (0, 1):
            raise InputError("SeedSpec: hermite_ck supports order_k in {0, 1}; "
                             "higher orders would need third derivatives of the map")


def _second_derivative(T: MonotoneMap, x, width: float):
    """T'' from the map when available, else a central difference of T'."""
    if T.second_derivative is not None:
        return np.asarray(T.second_derivative(x), dtype=float)
    h = max(1e-6 * width, 1e-12)
    x = np.asarray(x, dtype=float)
    return (np.asarray(T.derivative(x + h), dtype=float)
            - np.asarray(T.derivative(x - h), dtype=float)) / (2.0 * h)


def _seed_polynomial(T: MonotoneMap, x0: float, x1: float, seed: SeedSpec,
                     width: float) -> Polynomial:
    """The (unnormalized) seed profile as a polynomial in (x - x0)."""
    step = x1 - x0
    v0 = seed.v0 if seed.v0 is not None else step
    if v0 == 0.0 or not math.isfinite(v0):
        raise SeedSignError(f"seed value v0={v0} must be finite and nonzero")
    if math.copysign(1.0, v0) != math.copysign(1.0, step):
        raise SeedSignError(
            f"seed value v0={v0:.6g} opposes the motion direction on "
            f"[{x0:.6g}, {x1:.6g}]")
    tp0 = float(np.asarray(T.derivative(x0), dtype=float))
    if not (math.isfinite(tp0) and tp0 > 0):
        raise ConstructionError(f"map derivative {tp0} at seed anchor {x0:.6g}")
    v1 = tp0 * v0

    if seed.kind == "constant":
        if abs(tp0 - 1.0) > 1e-9:
            raise SeedCompatibilityError(
                f"constant seed needs T'(x0) = 1, got {tp0:.12g} at x0={x0:.6g}")
        return Polynomial([v0])

    if seed.kind == "affine" or (seed.kind == "hermite_ck" and seed.order_k == 0):
        # line through (x0, v0) and (x1, T'(x0) v0), in powers of (x - x0)
        return Polynomial([v0, (v1 - v0) / step])

    # hermite_ck with order_k == 1: cubic matching values and derivatives,
    # the far-end derivative taken from the derivative recursion
    d1 = seed.d1 if seed.d1 is not None else (v1 - v0) / step
    tpp0 = float(np.asarray(_second_derivative(T, x0, width), dtype=float))
    d1_img = d1 + v0 * tpp0 / tp0
    s = step
    a2 = (3.0 * (v1 - v0) / s - 2.0 * d1 - d1_img) / s
    a3 = (2.0 * (v0 - v1) / s + d1 + d1_img) / (s * s)
    return Polynomial([v0, d1, a2, a3])


def _validate_seed_sign(p: Polynomial, x0: float, x1: float):
    vals = p(np.linspace(0.0, x1 - x0, 129))
    ref = math.copysign(1.0, vals[0])
    if np.any(np.sign(vals) != ref) or np.any(vals == 0.0):
        raise SeedSignError(
            f"seed profile changes sign or vanishes on [{x0:.6g}, {x1:.6g}]; "
            "choose a milder slope d1 or a different kind")


def _seed_primitive(p: Polynomial, xs_motion: np.ndarray) -> np.ndarray:
    """Cumulative integral of 1/p from the anchor, along the motion order."""
    t = xs_motion - xs_motion[0]
    a, b = t[:-1], t[1:]
    mid = 0.5 * (a + b)[:, None]
    half = 0.5 * (b - a)[:, None]
    nodes = mid + half * _GL_NODES[None, :]
    gaps = np.sum(_GL_WEIGHTS[None, :] / p(nodes), axis=1) * half[:, 0]
    return np.concatenate(([0.0], np.cumsum(gaps)))


# ======================================================================
# truncation zones and assembled per-interval fields
# ======================================================================

@dataclass(frozen=True)
class TruncationZone:
    """Unbuilt gap between the last orbit anchor and a fixed interval end.

    On the zone the field continues by the linear pinch v = rate * (x - fp).
    flagged marks zones at an indeterminate fixed point (map slope equal to 1
    within tolerance), where orbit convergence is harmonic rather than
    geometric and the pinch continuation is unverified.
    """

    side: str              # "trail" | "lead"
    fp: float
    edge: float            # last built node toward the fixed end
    edge_F: float
    rate: float
    flagged: bool
    reason: str            # "min-step" | "max-steps"

    @property
    def lo(self) -> float:
        return min(self.fp, self.edge)

    @property
    def hi(self) -> float:
        return max(self.fp, self.edge)


@dataclass(frozen=True)
class UnbuiltInterval:
    """Moving interval left without a field."""

    lo: float
    hi: float
    direction: int
    reason: str


class IntervalField:
    """Velocity field and unit-time primitive on one moving interval."""

    def __init__(self, *, lo, hi, direction, x0, seed, seed_interval, time_scale,
                 pieces, zone_trail, zone_lead, warnings):
        self.lo = float(lo)
        self.hi = float(hi)
        self.direction = int(direction)
        self.x0 = float(x0)
        self.seed = seed
        self.seed_interval = (float(seed_interval[0]), float(seed_interval[1]))
        self.time_scale = float(time_scale)
        self.zone_trail = zone_trail
        self.zone_lead = zone_lead
        self.warnings = tuple(warnings)
        self.depth_forward = max((pc["depth"] for pc in pieces), default=0)
        self.depth_backward = -min((pc["depth"] for pc in pieces), default=0)
        self._pieces = pieces
        self._assemble()

    # ------------------------------------------------------------------
    def _assemble(self):
        asc = []
        for pc in self._pieces:
            x, v, dv, F = pc["x"], pc["v"], pc["dv"], pc["F"]
            if x.size < 2:
                continue
            if x[0] > x[-1]:
                x, v, dv, F = x[::-1], v[::-1], dv[::-1], F[::-1]
            asc.append({"depth": pc["depth"], "x": x, "v": v, "dv": dv, "F": F})
        if not asc:
            raise ConstructionError("interval produced no usable pieces")
        asc.sort(key=lambda pc: pc["x"][0])

        anchors = [asc[0]["x"][0]]
        v_segs, F_segs, finv_segs = [], [], []
        for pc in asc:
            x, v, dv, F = pc["x"], pc["v"], pc["dv"], pc["F"]
            anchors.append(x[-1])
            v_segs.append((x, v, dv))
            F_segs.append((x, F, 1.0 / v))
            if F[-1] > F[0]:
                finv_segs.append((F, x, v))
            else:
                finv_segs.append((F[::-1], x[::-1], v[::-1]))

        self.anchors = np.asarray(anchors, dtype=float)
        self.built_lo = float(asc[0]["x"][0])
        self.built_hi = float(asc[-1]["x"][-1])
        self.v_spline = _hermite_ppoly(v_segs)
        self.dv_spline = self.v_spline.derivative()
        self.F_spline = _hermite_ppoly(F_segs)
        finv_segs.sort(key=lambda seg: seg[0][0])
        self.Finv_spline = _hermite_ppoly(finv_segs)
        self.F_lo = float(self.Finv_spline.x[0])
        self.F_hi = float(self.Finv_spline.x[-1])

    # ------------------------------------------------------------------
    def _zone_mask(self, x, zone):
        return ((x >= zone.lo) & (x <= zone.hi)
                & ((x < self.built_lo) | (x > self.built_hi)))

    def evaluate(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        inside = (x >= self.built_lo) & (x <= self.built_hi)
        if np.any(inside):
            out[inside] = self.v_spline(x[inside])
        for zone in (self.zone_trail, self.zone_lead):
            if zone is not None:
                sel = self._zone_mask(x, zone)
                out[sel] = zone.rate * (x[sel] - zone.fp)
        return out

    def evaluate_derivative(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        inside = (x >= self.built_lo) & (x <= self.built_hi)
        if np.any(inside):
            out[inside] = self.dv_spline(x[inside])
        for zone in (self.zone_trail, self.zone_lead):
            if zone is not None:
                out[self._zone_mask(x, zone)] = zone.rate
        return out

    def F_extended(self, x):
        """Unit-time primitive, extended through zones by the pinch law."""
        x = np.asarray(x, dtype=float)
        out = np.full_like(x, np.nan)
        inside = (x >= self.built_lo) & (x <= self.built_hi)
        if np.any(inside):
            out[inside] = self.F_spline(x[inside])
        for zone in (self.zone_trail, self.zone_lead):
            if zone is None:
                continue
            sel = self._zone_mask(x, zone)
            if np.any(sel):
                ratio = (x[sel] - zone.fp) / (zone.edge - zone.fp)
                with np.errstate(divide="ignore"):
                    out[sel] = zone.edge_F + np.log(ratio) / zone.rate
        return out

    def Finv_extended(self, u):
        u = np.asarray(u, dtype=float)
        out = np.full_like(u, np.nan)
        inside = (u >= self.F_lo) & (u <= self.F_hi)
        if np.any(inside):
            out[inside] = self.Finv_spline(u[inside])
        for zone in (self.zone_trail, self.zone_lead):
            if zone is None:
                continue
            sel = u < self.F_lo if zone.edge_F == self.F_lo else u > self.F_hi
            if np.any(sel):
                out[sel] = zone.fp + (zone.edge - zone.fp) * np.exp(
                    zone.rate * (u[sel] - zone.edge_F))
        return out

    def rescaled(self, scale: float) -> "IntervalField":
        """Field with v multiplied by scale and the primitive rebuilt to match."""
        pieces = []
        for pc in self._pieces:
            k = float(pc["depth"])
            pieces.append({"depth": pc["depth"], "x": pc["x"].copy(),
                           "v": pc["v"] * scale, "dv": pc["dv"] * scale,
                           "F": (pc["F"] - k) / scale + k})
        return IntervalField(lo=self.lo, hi=self.hi, direction=self.direction,
                             x0=self.x0, seed=self.seed,
                             seed_interval=self.seed_interval,
                             time_scale=self.time_scale * scale, pieces=pieces,
                             zone_trail=_rescale_zone(self.zone_trail, scale),
                             zone_lead=_rescale_zone(self.zone_lead, scale),
                             warnings=self.warnings)

    def describe(self) -> dict:
        d = {
            "interval": [self.lo, self.hi],
            "direction": self.direction,
            "seed_anchor": self.x0,
            "seed_interval": list(self.seed_interval),
            "seed_kind": self.seed.kind,
            "time_scale": self.time_scale,
            "built_range": [self.built_lo, self.built_hi],
            "depth_forward": self.depth_forward,
            "depth_backward": self.depth_backward,
            "warnings": list(self.warnings),
        }
        for name, zone in (("zone_trail", self.zone_trail),
                           ("zone_lead", self.zone_lead)):
            if zone is not None:
                d[name] = {"fp": zone.fp, "edge": zone.edge, "rate": zone.rate,
                           "flagged": zone.flagged, "reason": zone.reason}
        return d


def _rescale_zone(zone, scale):
    if zone is None:
        return None
    k = round(zone.edge_F)
    return TruncationZone(side=zone.side, fp=zone.fp, edge=zone.edge,
                          edge_F=(zone.edge_F - k) / scale + k,
                          rate=zone.rate * scale, flagged=zone.flagged,
                          reason=zone.reason)


_JUNCTION_TOL = 1e-9


def _hermite_ppoly(segments) -> PPoly:
    """One cubic Hermite piecewise polynomial over many node segments.

    segments is a sequence of (x, y, d) triples with x ascending inside each
    segment and segments ascending overall; adjacent segments must share their
    junction abscissa but may carry different one-sided derivatives there.
    Equivalent to concatenating per-segment Hermite splines, without the
    per-segment construction overhead.
    """
    if not segments:
        raise ConstructionError("no pieces to assemble")
    xl, xr, yl, yr, dl, dr = [], [], [], [], [], []
    breaks = []
    prev_end = None
    for x, y, d in segments:
        if prev_end is not None:
            if abs(prev_end - x[0]) > _JUNCTION_TOL * max(1.0, abs(prev_end)):
                raise ConstructionError(
                    f"piece junction mismatch: {prev_end!r} vs {x[0]!r}")
            breaks.append(x[1:])
        else:
            breaks.append(x)
        prev_end = x[-1]
        xl.append(x[:-1]); xr.append(x[1:])
        yl.append(y[:-1]); yr.append(y[1:])
        dl.append(d[:-1]); dr.append(d[1:])
    bx = np.concatenate(breaks)
    if not np.all(np.diff(bx) > 0):
        raise ConstructionError("assembled breakpoints are not strictly increasing")
    xl, xr = np.concatenate(xl), np.concatenate(xr)
    yl, yr = np.concatenate(yl), np.concatenate(yr)
    dl, dr = np.concatenate(dl), np.concatenate(dr)
    h = xr - xl
    m = (yr - yl) / h
    c2 = (3.0 * m - 2.0 * dl - dr) / h
    c3 = (dl + dr - 2.0 * m) / (h * h)
    return PPoly(np.vstack((c3, c2, dl, yl)), bx)


# ======================================================================
# orbit marching
# ======================================================================

def _local_hermite(x, y, dy, xq):
    xs, ys, dys = (x, y, dy) if x[0] <= x[-1] else (x[::-1], y[::-1], dy[::-1])
    sp = CubicHermiteSpline(xs, ys, dys)
    return float(sp(xq)), float(sp.derivative()(xq))


def _march(T, seed_arrays, *, forward, clip, stop_at, stop_fixed, motion_sign,
           min_step, max_steps, thin_depth, thin_nodes, width):
    """Propagate node tables orbit step by orbit step in one direction.

    seed_arrays = (x, v, dv, F) in motion order.  forward=True applies the map,
    False applies its inverse.  clip = (lo, hi) bounds where the applied map is
    defined.  Returns (pieces, reason, edge) with edge = (x, v, F) at the far
    end of the march.
    """
    src_x, src_v, src_dv, src_F = seed_arrays
    offset = 1.0 if forward else -1.0
    clip_lo, clip_hi = clip
    pieces = []
    far_idx = -1 if forward else 0
    edge = (float(src_x[far_idx]), float(src_v[far_idx]), float(src_F[far_idx]))
    reason = "max-steps"
    reach_sign = motion_sign if forward else -motion_sign
    tol_reach = 1e-12 * width

    for depth in range(1, max_steps + 1):
        keep = (src_x >= clip_lo) & (src_x <= clip_hi)
        n_keep = int(np.count_nonzero(keep))
        if n_keep < 2:
            reason = "boundary"
            break
        if n_keep < src_x.size:
            # clip to the map's domain and append the exact boundary point
            bound = clip_hi if (src_x.max() > clip_hi) else clip_lo
            v_b, dv_b = _local_hermite(src_x, src_v, src_dv, bound)
            with np.errstate(divide="ignore"):
                F_b, _ = _local_hermite(src_x, src_F, 1.0 / src_v, bound)
            src_x, src_v, src_dv, src_F = (a[keep] for a in (src_x, src_v, src_dv, src_F))
            if forward and src_x[-1] != bound:
                src_x = np.append(src_x, bound)
                src_v = np.append(src_v, v_b)
                src_dv = np.append(src_dv, dv_b)
                src_F = np.append(src_F, F_b)
            elif (not forward) and src_x[0] != bound:
                src_x = np.insert(src_x, 0, bound)
                src_v = np.insert(src_v, 0, v_b)
                src_dv = np.insert(src_dv, 0, dv_b)
                src_F = np.insert(src_F, 0, F_b)

        if depth >= thin_depth and src_x.size > thin_nodes:
            idx = np.unique(np.round(
                np.linspace(0, src_x.size - 1, thin_nodes)).astype(int))
            src_x, src_v, src_dv, src_F = (a[idx] for a in (src_x, src_v, src_dv, src_F))

        if forward:
            new_x = np.asarray(T.forward(src_x), dtype=float)
            tp = np.asarray(T.derivative(src_x), dtype=float)
            tpp = np.asarray(_second_derivative(T, src_x, width), dtype=float)
            new_v = tp * src_v
            new_dv = src_dv + src_v * tpp / tp
        else:
            new_x = np.asarray(T.inverse(src_x), dtype=float)
            tp = np.asarray(T.derivative(new_x), dtype=float)
            tpp = np.asarray(_second_derivative(T, new_x, width), dtype=float)
            new_v = src_v / tp
            new_dv = src_dv - new_v * tpp / tp
        new_F = src_F + offset
        if not forward:
            # pin the junction bitwise: T^(-1)(T(x)) drifts by roundoff.
            # dv stays elementwise: with a C^0 seed junction v has a genuine
            # kink there, and each piece needs its own one-sided derivative.
            new_x[-1] = src_x[0]
            new_v[-1] = src_v[0]
            new_F[-1] = src_F[0]

        if not (np.all(np.isfinite(new_x)) and np.all(np.isfinite(new_v))
                and np.all(np.isfinite(new_dv))):
            raise ConstructionError(
                f"orbit march produced non-finite node data at depth {depth}")
        if np.any(new_v * math.copysign(1.0, src_v[0]) <= 0.0):
            raise ConstructionError(
                f"propagated field changed sign at depth {depth}; "
                "the map derivative is not positive there")

        pieces.append({"depth": int(offset) * depth, "x": new_x, "v": new_v,
                       "dv": new_dv, "F": new_F})

        far_prev = float(src_x[far_idx])
        far = float(new_x[far_idx])
        edge = (far, float(new_v[far_idx]), float(new_F[far_idx]))
        step = abs(far - far_prev)

        if (not stop_fixed) and stop_at is not None:
            if reach_sign * (far - stop_at) >= -tol_reach:
                reason = "complete"
                break
        if step <= min_step:
            reason = "min-step"
            break
        src_x, src_v, src_dv, src_F = new_x, new_v, new_dv, new_F

    return pieces, reason, edge


# ======================================================================
# per-interval build
# ======================================================================

def _build_interval(T: MonotoneMap, itv: MovingInterval, seed: SeedSpec,
                    cfg: BuildConfig, map_domain, map_range, width, max_steps,
                    indeterminate):
    if itv.width < cfg.min_interval_rel * width:
        return UnbuiltInterval(itv.lo, itv.hi, itv.direction, "sub-resolution")
    direction = itv.direction
    if direction > 0:
        trail, lead = itv.lo, itv.hi
        trail_fixed, lead_fixed = itv.lo_is_fixed, itv.hi_is_fixed
    else:
        trail, lead = itv.hi, itv.lo
        trail_fixed, lead_fixed = itv.hi_is_fixed, itv.lo_is_fixed

    src_lo = max(itv.lo, map_domain[0])
    src_hi = min(itv.hi, map_domain[1])
    if not src_hi > src_lo:
        return UnbuiltInterval(itv.lo, itv.hi, direction, "no-source-overlap")

    warnings: list[str] = []
    min_step = cfg.orbit_min_step_rel * width

    if trail_fixed:
        x0 = 0.5 * (src_lo + src_hi)
    else:
        x0 = src_lo if direction > 0 else src_hi
    x1 = float(np.asarray(T.forward(x0), dtype=float))
    if abs(x1 - x0) <= min_step:
        raise DegenerateOrbitError(
            f"seed anchor {x0:.6g} is numerically fixed (step {x1 - x0:.3g})")

    poly = _seed_polynomial(T, x0, x1, seed, width)
    _validate_seed_sign(poly, x0, x1)

    xs = np.linspace(x0, x1, cfg.nodes_per_piece)
    F_raw = _seed_primitive(poly, xs)
    tau = float(F_raw[-1])
    if not (math.isfinite(tau) and tau > 0):
        raise NormalizationError(f"seed travel time {tau} is not a positive number")
    v_nodes = tau * poly(xs - x0)
    dv_nodes = tau * poly.deriv()(xs - x0)
    F_nodes = F_raw / tau
    F_nodes[0] = 0.0
    F_nodes[-1] = 1.0
    seed_piece = {"depth": 0, "x": xs, "v": v_nodes, "dv": dv_nodes, "F": F_nodes}
    seed_arrays = (xs, v_nodes, dv_nodes, F_nodes)

    # ---- forward closure toward the leading end ------------------------------
    pieces_f, reason_f, edge_f = _march(
        T, seed_arrays, forward=True, clip=map_domain, stop_at=lead,
        stop_fixed=lead_fixed, motion_sign=direction, min_step=min_step,
        max_steps=max_steps, thin_depth=cfg.deep_piece_depth,
        thin_nodes=cfg.deep_piece_nodes, width=width)

    zone_lead = None
    if lead_fixed:
        e_x, e_v, e_F = edge_f
        flagged = _near(lead, indeterminate, width)
        zone_lead = TruncationZone(side="lead", fp=lead, edge=e_x, edge_F=e_F,
                                   rate=e_v / (e_x - lead), flagged=flagged,
                                   reason=reason_f)
        if flagged:
            warnings.append(
                f"leading fixed point {lead:.6g} has map slope 1; truncation at "
                f"{e_x:.6g} after harmonic orbit steps is unverified beyond the zone")
    else:
        if reason_f == "max-steps":
            warnings.append("forward march hit the step cap before the free end")
        elif abs(edge_f[0] - lead) > 1e-6 * width:
            warnings.append(
                f"forward march stopped at {edge_f[0]:.6g}, short of the free end "
                f"{lead:.6g}")

    # ---- backward closure toward the trailing end ----------------------------
    pieces_b: list = []
    zone_trail = None
    if trail_fixed:
        pieces_b, reason_b, edge_b = _march(
            T, seed_arrays, forward=False, clip=map_range, stop_at=None,
            stop_fixed=True, motion_sign=direction, min_step=min_step,
            max_steps=max_steps, thin_depth=cfg.deep_piece_depth,
            thin_nodes=cfg.deep_piece_nodes, width=width)
        e_x, e_v, e_F = edge_b
        flagged = _near(trail, indeterminate, width)
        zone_trail = TruncationZone(side="trail", fp=trail, edge=e_x, edge_F=e_F,
                                    rate=e_v / (e_x - trail), flagged=flagged,
                                    reason=reason_b)
        if flagged:
            warnings.append(
                f"trailing fixed point {trail:.6g} has map slope 1; truncation at "
                f"{e_x:.6g} after harmonic orbit steps is unverified beyond the zone")

    return IntervalField(lo=itv.lo, hi=itv.hi, direction=direction, x0=x0,
                         seed=seed, seed_interval=(x0, x1), time_scale=tau,
                         pieces=pieces_b + [seed_piece] + pieces_f,
                         zone_trail=zone_trail, zone_lead=zone_lead,
                         warnings=warnings)


def _near(x, points, width):
    return any(abs(x - p) <= 1e-9 * width for p in points)


# ======================================================================
# global field
# ======================================================================

class VelocityField1D:
    """Velocity field on the working domain: zero on the fixed set, built
    per-interval fields on the moving complement."""

    def __init__(self, transport_map: MonotoneMap, partition: FixedPointPartition,
                 intervals, config: BuildConfig, warnings=()):
        self.map = transport_map
        self.partition = partition
        self.intervals = tuple(intervals)
        self.config = config
        self.warnings = tuple(warnings)
        self.domain = partition.domain

    @property
    def built_intervals(self) -> tuple[IntervalField, ...]:
        return tuple(f for f in self.intervals if isinstance(f, IntervalField))

    @property
    def unbuilt_intervals(self) -> tuple[UnbuiltInterval, ...]:
        return tuple(f for f in self.intervals if isinstance(f, UnbuiltInterval))

    def _dispatch(self, x, per_interval, fill=0.0):
        """Evaluate per_interval(field, subarray) on the points each field owns."""
        x = np.asarray(x, dtype=float)
        scalar = x.ndim == 0
        flat = np.atleast_1d(x).ravel()
        out = np.full(flat.shape, fill, dtype=float)
        order = np.argsort(flat, kind="stable")
        sx = flat[order]
        for f in self.intervals:
            if isinstance(f, UnbuiltInterval):
                continue
            i0 = int(np.searchsorted(sx, f.lo, side="left"))
            i1 = int(np.searchsorted(sx, f.hi, side="right"))
            if i1 > i0:
                idx = order[i0:i1]
                out[idx] = per_interval(f, flat[idx])
        if scalar:
            return float(out[0])
        return out.reshape(np.shape(x))

    def evaluate(self, x):
        """Field value; zero on the fixed set and outside the domain."""
        return self._dispatch(x, lambda f, xs: f.evaluate(xs), fill=0.0)

    __call__ = evaluate

    def derivative(self, x):
        return self._dispatch(x, lambda f, xs: f.evaluate_derivative(xs), fill=0.0)

    def truncation_zones(self) -> tuple[TruncationZone, ...]:
        zones = []
        for f in self.built_intervals:
            for z in (f.zone_trail, f.zone_lead):
                if z is not None:
                    zones.append(z)
        return tuple(zones)

    def all_warnings(self) -> tuple[str, ...]:
        out = list(self.warnings)
        for f in self.built_intervals:
            out.extend(f.warnings)
        for f in self.unbuilt_intervals:
            out.append(f"interval ({f.lo:.6g}, {f.hi:.6g}) left unbuilt: {f.reason}")
        return tuple(out)

    def describe(self) -> dict:
        return {
            "domain": list(self.domain),
            "fixed_intervals": [list(t) for t in self.partition.fixed_intervals],
            "intervals": [f.describe() if isinstance(f, IntervalField)
                          else {"interval": [f.lo, f.hi], "unbuilt": f.reason}
                          for f in self.intervals],
            "warnings": list(self.all_warnings()),
        }


# ======================================================================
# entry points
# ======================================================================

def build_velocity(m0: Measure1D | None = None, m1: Measure1D | None = None, *,
                   transport_map: MonotoneMap | None = None,
                   partition: FixedPointPartition | None = None,
                   seed: SeedSpec | Sequence[SeedSpec] | None = None,
                   config: BuildConfig = DEFAULT_CONFIG,
                   max_steps: int | None = None,
                   domain: tuple[float, float] | None = None) -> VelocityField1D:
    """Build the autonomous field realizing the monotone map between m0 and m1.

    Either a measure pair or an explicit transport_map must be given.  partition
    overrides fixed point detection (useful when the fixed set is known in
    closed form); seed may be one SeedSpec for all moving intervals or a
    sequence aligned with them.
    """
    T = transport_map
    if T is None:
        if m0 is None or m1 is None:
            raise InputError("build_velocity: need a measure pair or a transport_map")
        T = compute_monotone_map(m0, m1)
    m0 = T.source if m0 is None else m0
    m1 = T.target if m1 is None else m1

    if m0 is not None:
        map_domain = m0.window(config.eps_tail)
    elif domain is not None:
        map_domain = (float(domain[0]), float(domain[1]))
    else:
        raise InputError("build_velocity: need a source measure or an explicit domain")
    if m1 is not None:
        map_range = m1.window(config.eps_tail)
    else:
        map_range = tuple(sorted((float(np.asarray(T.forward(map_domain[0]))),
                                  float(np.asarray(T.forward(map_domain[1]))))))

    if partition is None:
        hull = (min(map_domain[0], map_range[0]), max(map_domain[1], map_range[1]))
        partition = find_fixed_points(T, domain=hull, config=config,
                                      search=map_domain)

    moving = partition.moving_intervals
    seeds = _normalize_seeds(seed, len(moving))
    width = partition.domain[1] - partition.domain[0]
    steps = int(max_steps if max_steps is not None else config.orbit_max_steps)

    fields = []
    for itv, sd in zip(moving, seeds):
        fields.append(_build_interval(T, itv, sd, config, map_domain, map_range,
                                      width, steps, partition.indeterminate))
    return VelocityField1D(T, partition, fields, config)


def _normalize_seeds(seed, n):
    if seed is None:
        return [SeedSpec()] * n
    if isinstance(seed, SeedSpec):
        return [seed] * n
    seeds = list(seed)
    if len(seeds) != n:
        raise InputError(f"got {len(seeds)} seeds for {n} moving intervals")
    return seeds


def build_no_fixed_point(m0=None, m1=None, **kw) -> VelocityField1D:
    """Build for a map without fixed points (disjoint or overlapping supports)."""
    f = build_velocity(m0, m1, **kw)
    if f.partition.fixed_intervals:
        raise InputError(
            f"map has fixed points {f.partition.fixed_intervals}; "
            "use build_general or the matching case builder")
    return f


def build_one_fixed_point(m0=None, m1=None, **kw) -> VelocityField1D:
    """Build when the fixed set is a single point (up to resolution)."""
    f = build_velocity(m0, m1, **kw)
    fi = f.partition.fixed_intervals
    if len(fi) != 1 or fi[0][1] - fi[0][0] > 1e-3 * (f.domain[1] - f.domain[0]):
        raise InputError(f"fixed set {fi} is not a single point; use build_general")
    return f


def build_two_fixed_points(m0=None, m1=None, **kw) -> VelocityField1D:
    """Build when the fixed set is exactly the two ends of one moving interval."""
    f = build_velocity(m0, m1, **kw)
    fi = f.partition.fixed_intervals
    pinned = [i for i in f.partition.moving_intervals
              if i.lo_is_fixed and i.hi_is_fixed]
    if len(fi) != 2 or not pinned:
        raise InputError(
            f"fixed set {fi} is not two points bounding a moving interval; "
            "use build_general")
    return f


build_general = build_velocity


# ======================================================================
# verification helpers and the approximate regime
# ======================================================================

def time_normalize(field: VelocityField1D, *, tol: float | None = None
                   ) -> tuple[VelocityField1D, list[dict]]:
    """Measure each seed's travel time and rescale any drifted interval to 1.

    Builder output is already normalized; this re-measures with independent
    adaptive quadrature and returns (field, rows) where rows record the
    measured times.  Intervals drifting beyond tol are rescaled.
    """
    tol = field.config.tol_time if tol is None else tol
    rows = []
    out_intervals = []
    changed = False
    for f in field.intervals:
        if isinstance(f, UnbuiltInterval):
            out_intervals.append(f)
            continue
        a, b = f.seed_interval
        val, _ = quad(lambda t: 1.0 / f.v_spline(t), a, b, epsabs=1e-13, limit=200)
        rows.append({"interval": [f.lo, f.hi], "seed_time": float(val)})
        if abs(val - 1.0) > tol:
            f = f.rescaled(float(val))
            changed = True
        out_intervals.append(f)
    if changed:
        field = VelocityField1D(field.map, field.partition, out_intervals,
                                field.config, field.warnings)
    return field, rows


def julia_residual(field: VelocityField1D, *, n_per_interval: int = 256) -> dict:
    """Relative residual of v(T(x)) - T'(x) v(x) on built regions.

    Sample points (and their images) in truncation zones or outside the built
    tables are excluded; the report counts them.
    """
    T = field.map
    worst = 0.0
    total = 0
    excluded = 0
    dom = None
    if T.source is not None:
        dom = T.source.window(field.config.eps_tail)
    for f in field.built_intervals:
        lo = f.built_lo if dom is None else max(f.built_lo, dom[0])
        hi = f.built_hi if dom is None else min(f.built_hi, dom[1])
        if not hi > lo:
            continue
        xs = lo + (hi - lo) * (np.arange(n_per_interval) + 0.5) / n_per_interval
        ys = np.asarray(T.forward(xs), dtype=float)
        ok = (ys >= f.built_lo) & (ys <= f.built_hi) & (xs >= f.built_lo) & (xs <= f.built_hi)
        excluded += int(np.count_nonzero(~ok))
        if not np.any(ok):
            continue
        xs, ys = xs[ok], ys[ok]
        lhs = f.evaluate(ys)
        rhs = np.asarray(T.derivative(xs), dtype=float) * f.evaluate(xs)
        scale = np.maximum(np.maximum(np.abs(lhs), np.abs(rhs)), 1e-300)
        rel = np.abs(lhs - rhs) / scale
        worst = max(worst, float(np.max(rel)))
        total += xs.size
    return {"max_rel": worst, "n_samples": total, "n_excluded": excluded}


@dataclass(frozen=True)
class ApproximateResult:
    """Outcome of the shift search for an approximately realizable target."""

    shift: float
    eps: float
    field: VelocityField1D
    transport_map: MonotoneMap
    partition: FixedPointPartition
    target: Measure1D
    w1_target_gap: float
    candidates_tried: int


def approximate_lipschitz(m0: Measure1D, m1: Measure1D, eps: float, *,
                          seed: SeedSpec | None = None,
                          config: BuildConfig = DEFAULT_CONFIG,
                          slope_margin: float = 1e-5,
                          budget: int = 64,
                          max_steps: int | None = None) -> ApproximateResult:
    """Replace m1 by a translate within eps in W1 whose map has no slope-1
    fixed points, then build the field for the shifted problem.

    Deterministic dyadic shift scan: 0, +-eps/2, +-eps/4, +-3 eps/4, ...  A
    candidate is admissible when every detected fixed boundary of the shifted
    map has |T' - 1| > slope_margin.  Raises SearchFailureError when the budget
    is exhausted.
    """
    if not eps > 0:
        raise InputError("approximate_lipschitz: eps must be positive")
    T = compute_monotone_map(m0, m1)
    tried = 0
    for frac in _dyadic_fractions(budget):
        lam = eps * frac
        tried += 1
        T_lam = _shifted_map(T, m0, m1, lam)
        try:
            partition = find_fixed_points(T_lam, config=config)
        except Exception:
            continue
        ok = not partition.indeterminate
        for e in partition.fixed_points:
            de = float(np.asarray(T_lam.derivative(e), dtype=float))
            if not np.isfinite(de) or abs(de - 1.0) <= slope_margin:
                ok = False
                break
        if not ok:
            continue
        fld = build_velocity(transport_map=T_lam, partition=partition, seed=seed,
                             config=config, max_steps=max_steps)
        return ApproximateResult(shift=lam, eps=eps, field=fld,
                                 transport_map=T_lam, partition=partition,
                                 target=T_lam.target, w1_target_gap=abs(lam),
                                 candidates_tried=tried)
    raise SearchFailureError(
        f"no admissible shift within eps={eps:g} after {tried} candidates; "
        "the map's slope-1 fixed points persist under translation")


def _dyadic_fractions(budget: int):
    yield 0.0
    count = 1
    level = 1
    while count < budget:
        denom = 2 ** level
        for k in range(1, denom, 2):
            for s in (1.0, -1.0):
                if count >= budget:
                    return
                yield s * k / denom
                count += 1
        level += 1


def _shifted_map(T: MonotoneMap, m0, m1, lam: float) -> MonotoneMap:
    if lam == 0.0:
        return T
    second = T.second_derivative

    def forward(x):
        return np.asarray(T.forward(x), dtype=float) - lam

    def inverse(y):
        return T.inverse(np.asarray(y, dtype=float) + lam)

    return MonotoneMap(forward, T.derivative, inverse, second,
                       m0, translate(m1, -lam), label=f"shifted({lam:g})")
