"""Named example problems exercising every construction case.

Each entry packages a measure pair, optionally an analytic transport map and
an explicit fixed-point partition, plus whatever closed forms exist for
cross-checking.  The names:

* ``affine``: uniform source, affine image target.  Everything is closed
  form; one interior fixed point when the slope differs from 1.
* ``gaussian``: two normal laws; the map is affine, the field linear around
  the fixed point (or constant for equal spreads).
* ``bad-fixed-point``: uniform source onto a linearly decaying density with
  map slope exactly 1 at the fixed point 0.  Orbits converge harmonically,
  so the build truncates at a step cap and flags the zone.
* ``accumulating-c1`` / ``accumulating-cinf``: maps x + x^3 sin(pi/x)/5 and
  x + exp(-1/x) sin(pi/x)/5 with fixed points 1/n accumulating at 0.  The
  resolved tiers get per-interval fields; the sub-grid tail is treated as
  fixed and marked indeterminate at 0.

Closed forms carried by an example are independent of the build pipeline and
serve as oracles; the builders themselves run the production route.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .config import DEFAULT_CONFIG, BuildConfig
from .errors import InputError
from .measures import (AffineImage, Gaussian, Measure1D, PiecewiseDensity,
                       Uniform, pushforward_by_map)
from .monotone import (FixedPointPartition, MonotoneMap, MovingInterval,
                       map_from_callables)
from .velocity import SeedSpec, VelocityField1D, build_velocity

__all__ = ["ExampleProblem", "example_names", "get_example"]


@dataclass(frozen=True)
class ExampleProblem:
    """A measure pair with optional analytic map, partition, and oracles.

    closed maps oracle names to callables (vectorized in x; "flow" takes
    (t, x)).  Builders receiving no transport_map fall back to the quantile
    composition, keeping the closed forms an independent route.
    """

    name: str
    m0: Measure1D
    m1: Measure1D
    description: str
    transport_map: MonotoneMap | None = None
    partition: FixedPointPartition | None = None
    default_max_steps: int | None = None
    closed: dict = dc_field(default_factory=dict)

    def build(self, *, seed: SeedSpec | None = None,
              config: BuildConfig = DEFAULT_CONFIG,
              max_steps: int | None = None) -> VelocityField1D:
        steps = max_steps if max_steps is not None else self.default_max_steps
        return build_velocity(self.m0, self.m1, transport_map=self.transport_map,
                              partition=self.partition, seed=seed, config=config,
                              max_steps=steps)


# ======================================================================
# affine family
# ======================================================================

def _affine_example(alpha: float = 3.0, beta: float = -3.0) -> ExampleProblem:
    """Uniform [1, 2] pushed onto its affine image under x -> alpha x + beta."""
    alpha = float(alpha)
    beta = float(beta)
    if not (math.isfinite(alpha) and alpha > 0):
        raise InputError(f"affine example: slope must be positive, got {alpha}")
    if not math.isfinite(beta):
        raise InputError("affine example: offset must be finite")
    m0 = Uniform(1.0, 2.0)
    m1 = AffineImage(m0, 1.0 / alpha, beta)

    closed = {"map": lambda x: alpha * np.asarray(x, dtype=float) + beta}
    if alpha == 1.0:
        if beta == 0.0:
            raise InputError("affine example: identity map has no field to build")
        closed["velocity"] = lambda x: np.full_like(np.asarray(x, dtype=float), beta)
        closed["flow"] = lambda t, x: np.asarray(x, dtype=float) + beta * t
        closed["fixed_point"] = None
    else:
        xbar = beta / (1.0 - alpha)
        rate = math.log(alpha)
        closed["velocity"] = lambda x: (np.asarray(x, dtype=float) - xbar) * rate
        closed["flow"] = lambda t, x: xbar + alpha ** t * (np.asarray(x, dtype=float) - xbar)
        closed["fixed_point"] = xbar

    return ExampleProblem(
        name="affine", m0=m0, m1=m1,
        description=(f"uniform [1, 2] onto its affine image with slope {alpha:g} "
                     f"and offset {beta:g}; fully closed form"),
        closed=closed)


# ======================================================================
# gaussian pair
# ======================================================================

def _gaussian_example(mean0: float = 0.0, std0: float = 1.0,
                      mean1: float = 1.0, std1: float = 2.0) -> ExampleProblem:
    """Normal onto normal; the monotone map is affine with slope std1/std0."""
    m0 = Gaussian(float(mean0), float(std0))
    m1 = Gaussian(float(mean1), float(std1))
    slope = m1.std / m0.std

    closed = {"map": lambda x: slope * (np.asarray(x, dtype=float) - m0.mean) + m1.mean}
    if slope == 1.0:
        shift = m1.mean - m0.mean
        if shift == 0.0:
            raise InputError("gaussian example: identical laws leave nothing to build")
        closed["velocity"] = lambda x: np.full_like(np.asarray(x, dtype=float), shift)
        closed["flow"] = lambda t, x: np.asarray(x, dtype=float) + shift * t
        closed["fixed_point"] = None
    else:
        fp = (m0.std * m1.mean - m1.std * m0.mean) / (m0.std - m1.std)
        rate = math.log(slope)
        closed["velocity"] = lambda x: (np.asarray(x, dtype=float) - fp) * rate
        closed["flow"] = lambda t, x: fp + slope ** t * (np.asarray(x, dtype=float) - fp)
        closed["fixed_point"] = fp

    return ExampleProblem(
        name="gaussian", m0=m0, m1=m1,
        description=(f"normal ({m0.mean:g}, {m0.std:g}) onto normal "
                     f"({m1.mean:g}, {m1.std:g}); affine map, linear field"),
        closed=closed)


# ======================================================================
# slope-one fixed point
# ======================================================================

def _bad_fixed_point_example() -> ExampleProblem:
    """Uniform [0, 2] onto the linear density (1/2 - y/9) on [0, 3].

    The map solves y - y^2/9 = x on the increasing branch, so the fixed point
    0 has slope exactly 1 and equal densities on both sides: the orbit
    approaches it harmonically and no continuation past the truncation zone
    is certified.  The partition is supplied in closed form with 0 marked
    indeterminate.
    """
    m0 = Uniform(0.0, 2.0)
    m1 = PiecewiseDensity(np.array([0.0, 3.0]), np.array([0.5, 1.0 / 6.0]))

    def forward(x):
        x = np.asarray(x, dtype=float)
        return (9.0 - np.sqrt(81.0 - 36.0 * x)) / 2.0

    def derivative(x):
        x = np.asarray(x, dtype=float)
        return 9.0 / np.sqrt(81.0 - 36.0 * x)

    def second_derivative(x):
        x = np.asarray(x, dtype=float)
        return 162.0 / np.sqrt(81.0 - 36.0 * x) ** 3

    def inverse(y):
        y = np.asarray(y, dtype=float)
        return y - y * y / 9.0

    tmap = map_from_callables(forward, inverse=inverse, derivative=derivative,
                              second_derivative=second_derivative,
                              source=m0, target=m1, label="bad-fixed-point")
    partition = FixedPointPartition(
        domain=(0.0, 3.0),
        fixed_intervals=((0.0, 0.0),),
        moving_intervals=(MovingInterval(0.0, 3.0, 1, True, False),),
        indeterminate=(0.0,))

    return ExampleProblem(
        name="bad-fixed-point", m0=m0, m1=m1,
        description=("uniform [0, 2] onto the density (1/2 - y/9) on [0, 3]; "
                     "map slope 1 at the fixed point 0, truncation flagged"),
        transport_map=tmap, partition=partition, default_max_steps=2500,
        closed={"map": forward, "map_inverse": inverse, "fixed_point": 0.0})


# ======================================================================
# accumulating fixed points
# ======================================================================

def _bisect_inverse(forward, y, lo, hi, iters: int = 64):
    """Vectorized bisection for a strictly increasing map on [lo, hi]."""
    y = np.asarray(y, dtype=float)
    a = np.full(y.shape, lo, dtype=float)
    b = np.full(y.shape, hi, dtype=float)
    for _ in range(iters):
        mid = 0.5 * (a + b)
        below = np.asarray(forward(mid), dtype=float) < y
        a = np.where(below, mid, a)
        b = np.where(below, b, mid)
    return 0.5 * (a + b)


def _newton_inverse(forward, derivative, y, lo, hi, iters: int = 6):
    """Vectorized Newton inverse with a bisection fallback per entry.

    Seeds at y itself (the maps inverted here are small perturbations of the
    identity), clips iterates into [lo, hi], and hands any entry that has not
    converged to 1e-14 relative residual over to plain bisection.
    """
    y = np.asarray(y, dtype=float)
    x = np.clip(y, lo, hi)
    for _ in range(iters):
        r = np.asarray(forward(x), dtype=float) - y
        d = np.asarray(derivative(x), dtype=float)
        step = r / np.where(np.abs(d) > 1e-30, d, 1.0)
        x = np.clip(x - step, lo, hi)
    resid = np.abs(np.asarray(forward(x), dtype=float) - y)
    bad = resid > 1e-14 * np.maximum(np.abs(y), 1.0)
    if np.any(bad):
        x = np.where(bad, _bisect_inverse(forward, y, lo, hi), x)
    return x


def _accumulating_example(variant: str = "c1", n_tiers: int = 12) -> ExampleProblem:
    """Uniform [0, 1] under a map with fixed points at every 1/n.

    variant "c1" uses the displacement x^3 sin(pi/x)/5 (continuously
    differentiable at 0), variant "cinf" uses exp(-1/x) sin(pi/x)/5 (flat at
    0).  Tiers (1/(n+1), 1/n) up to n_tiers are built with alternating
    directions and good fixed ends; below 1/n_tiers the displacement is
    under machine-resolvable and the tail is treated as part of the fixed
    set, with the accumulation point 0 marked indeterminate.
    """
    n_tiers = int(n_tiers)
    if n_tiers < 3:
        raise InputError("accumulating example: need at least 3 tiers")
    if variant not in ("c1", "cinf"):
        raise InputError(f"accumulating example: unknown variant {variant!r}")

    if variant == "c1":
        def envelope(x):
            return x ** 3 / 5.0

        def envelope_d(x):
            return 3.0 * x * x / 5.0

        def envelope_dd(x):
            return 6.0 * x / 5.0
    else:
        def envelope(x):
            with np.errstate(divide="ignore", over="ignore"):
                return np.where(x > 0.0, np.exp(-1.0 / np.where(x > 0.0, x, 1.0)), 0.0) / 5.0

        def envelope_d(x):
            safe = np.where(x > 0.0, x, 1.0)
            return envelope(x) / safe ** 2

        def envelope_dd(x):
            safe = np.where(x > 0.0, x, 1.0)
            return envelope(x) * (1.0 - 2.0 * safe) / safe ** 4

    def phase(x):
        safe = np.where(x > 0.0, x, 1.0)
        return np.where(x > 0.0, np.pi / safe, 0.0)

    def forward(x):
        x = np.asarray(x, dtype=float)
        return x + envelope(x) * np.sin(phase(x))

    def derivative(x):
        x = np.asarray(x, dtype=float)
        safe = np.where(x > 0.0, x, 1.0)
        out = 1.0 + envelope_d(x) * np.sin(phase(x)) \
            - envelope(x) * np.cos(phase(x)) * np.pi / safe ** 2
        return np.where(x > 0.0, out, 1.0)

    def second_derivative(x):
        x = np.asarray(x, dtype=float)
        safe = np.where(x > 0.0, x, 1.0)
        s, c = np.sin(phase(x)), np.cos(phase(x))
        out = envelope_dd(x) * s \
            - 2.0 * envelope_d(x) * c * np.pi / safe ** 2 \
            + envelope(x) * (2.0 * c * np.pi / safe ** 3 - s * np.pi ** 2 / safe ** 4)
        return np.where(x > 0.0, out, 0.0)

    def inverse(y):
        return _newton_inverse(forward, derivative, y, 0.0, 1.0)

    m0 = Uniform(0.0, 1.0)
    m1 = pushforward_by_map(m0, forward, derivative=derivative, n=65537)
    tmap = map_from_callables(forward, inverse=inverse, derivative=derivative,
                              second_derivative=second_derivative,
                              source=m0, target=m1,
                              label=f"accumulating-{variant}")

    cuts = [1.0 / n for n in range(n_tiers, 0, -1)]
    fixed = [(0.0, cuts[0])] + [(c, c) for c in cuts[1:]]
    moving = []
    for n in range(n_tiers - 1, 0, -1):
        direction = 1 if n % 2 == 0 else -1
        moving.append(MovingInterval(1.0 / (n + 1), 1.0 / n, direction, True, True))
    partition = FixedPointPartition(domain=(0.0, 1.0),
                                    fixed_intervals=tuple(fixed),
                                    moving_intervals=tuple(moving),
                                    indeterminate=(0.0,))

    return ExampleProblem(
        name=f"accumulating-{variant}", m0=m0, m1=m1,
        description=(f"uniform [0, 1] under x + {'x^3' if variant == 'c1' else 'exp(-1/x)'}"
                     f" sin(pi/x)/5; fixed points 1/n accumulating at 0, "
                     f"{n_tiers - 1} tiers built"),
        transport_map=tmap, partition=partition, default_max_steps=6000,
        closed={"map": forward, "fixed_points": tuple(cuts)})


# ======================================================================
# lookup
# ======================================================================

_BUILDERS = {
    "affine": _affine_example,
    "gaussian": _gaussian_example,
    "bad-fixed-point": _bad_fixed_point_example,
    "accumulating-c1": lambda **kw: _accumulating_example("c1", **kw),
    "accumulating-cinf": lambda **kw: _accumulating_example("cinf", **kw),
}


def example_names() -> tuple:
    """Registry names, in documentation order."""
    return tuple(_BUILDERS)


def get_example(name: str, **params) -> ExampleProblem:
    """Instantiate a named example, forwarding family parameters.

    affine: alpha, beta.  gaussian: mean0, std0, mean1, std1.
    accumulating-*: n_tiers.  bad-fixed-point takes no parameters.
    """
    try:
        maker = _BUILDERS[name]
    except KeyError:
        known = ", ".join(_BUILDERS)
        raise InputError(f"unknown example {name!r}; known: {known}") from None
    return maker(**params)
