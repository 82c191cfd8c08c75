"""Velocity construction: seeds, propagation, normalization, approximation.

The multiplicative propagation identity v(T(x)) = T'(x) v(x) is re-derived in
each test directly from the field and map callables, never read back from the
library's own residual report, so the two routes stay independent.
"""

import math
import warnings

import numpy as np
import pytest

from otflow.errors import (InputError, SearchFailureError,
                           SeedCompatibilityError, TransportError)
from otflow.measures import Gaussian, Uniform, translate, wasserstein1
from otflow.monotone import compute_monotone_map
from otflow.velocity import (SeedSpec, approximate_lipschitz, build_general,
                             build_no_fixed_point, build_one_fixed_point,
                             build_two_fixed_points, build_velocity,
                             julia_residual, time_normalize)

TOL_RESIDUAL = 1e-8
TOL_FLOW = 1e-6
TOL_CLOSED = 1e-10

LN3 = math.log(3.0)


def _manual_residual(field, xs):
    """Recompute the propagation defect from scratch at the given points."""
    T = field.map
    tx = np.asarray(T.forward(xs), dtype=float)
    lhs = field(tx)
    rhs = np.asarray(T.derivative(xs), dtype=float) * field(xs)
    good = np.isfinite(lhs) & np.isfinite(rhs)
    scale = np.maximum(np.maximum(np.abs(lhs), np.abs(rhs)), 1e-300)
    return float(np.max(np.abs(lhs - rhs)[good] / scale[good]))


class TestSeedSpec:
    """Seed validation happens at construction."""

    def test_unknown_kind(self):
        with pytest.raises(InputError):
            SeedSpec(kind="spline")

    def test_hermite_order_bounds(self):
        with pytest.raises(InputError):
            SeedSpec(kind="hermite_ck", order_k=2)
        assert SeedSpec(kind="hermite_ck", order_k=0).order_k == 0


@pytest.fixture(scope="module")
def field():
    return build_velocity(Uniform(1.0, 2.0), Uniform(0.0, 3.0))


class TestAffinePair:
    """Uniform [1, 2] to uniform [0, 3]: everything in closed form."""

    def test_velocity_closed_form(self, field):
        xs = np.linspace(0.05, 2.95, 1163)
        fixed = field.partition.fixed_intervals
        for a, b in fixed:
            xs = xs[(xs < a - 1e-9) | (xs > b + 1e-9)]
        v = field(xs)
        expect = (xs - 1.5) * LN3
        rel = np.abs(v - expect) / np.abs(expect)
        assert np.max(rel) <= 1e-8

    def test_velocity_derivative(self, field):
        xs = np.linspace(0.1, 2.9, 301)
        for a, b in field.partition.fixed_intervals:
            xs = xs[(xs < a - 1e-6) | (xs > b + 1e-6)]
        dv = field.derivative(xs)
        assert np.max(np.abs(dv - LN3)) <= 1e-7

    def test_residual_dual_route(self, field):
        # the functional equation is meaningful on the source support only;
        # outside it the quantile-route map saturates
        xs = np.concatenate([np.linspace(1.02, 1.48, 129),
                             np.linspace(1.52, 1.98, 129)])
        assert _manual_residual(field, xs) <= TOL_RESIDUAL
        assert julia_residual(field)["max_rel"] <= TOL_RESIDUAL

    def test_field_zero_on_fixed_set(self, field):
        for a, b in field.partition.fixed_intervals:
            mid = 0.5 * (a + b)
            assert field(np.array([mid]))[0] == 0.0


class TestSeedKinds:
    """Different admissible seeds give the same time-1 flow."""

    def test_affine_and_hermite_agree_at_time_one(self):
        from otflow.flow import flow
        m0, m1 = Uniform(1.0, 2.0), Uniform(0.0, 3.0)
        f_a = build_velocity(m0, m1, seed=SeedSpec(kind="affine"))
        f_h = build_velocity(m0, m1, seed=SeedSpec(kind="hermite_ck", order_k=1))
        xs = np.linspace(1.01, 1.99, 197)
        ya, yh = flow(f_a, 1.0, xs), flow(f_h, 1.0, xs)
        good = np.isfinite(ya) & np.isfinite(yh)
        assert np.max(np.abs(ya - yh)[good]) <= 1e-6

    def test_constant_seed_needs_unit_slope(self):
        with pytest.raises((SeedCompatibilityError, TransportError)):
            build_velocity(Uniform(1.0, 2.0), Uniform(0.0, 3.0),
                           seed=SeedSpec(kind="constant"))

    def test_constant_seed_on_pure_translation(self):
        m0 = Uniform(0.0, 1.0)
        field = build_velocity(m0, translate(m0, 2.0),
                               seed=SeedSpec(kind="constant"))
        xs = np.linspace(0.1, 2.5, 41)
        v = field(xs)
        good = np.isfinite(v) & (v != 0.0)
        assert good.any()
        assert np.max(np.abs(v[good] - 2.0)) <= 1e-9, \
            "translation by 2 in unit time moves at speed 2"


class TestCaseBuilders:
    """Specialized entry points accept exactly their advertised shapes."""

    def test_no_fixed_point_disjoint(self):
        from otflow.flow import flow
        m0, m1 = Uniform(0.0, 1.0), Uniform(2.0, 3.0)
        field = build_no_fixed_point(m0, m1)
        xs = np.linspace(0.05, 0.95, 101)
        T = field.map
        y = flow(field, 1.0, xs)
        good = np.isfinite(y)
        assert good.sum() > 90
        assert np.max(np.abs(y[good] - np.asarray(T.forward(xs))[good])) <= TOL_FLOW

    def test_no_fixed_point_rejects_fixed(self):
        with pytest.raises(InputError):
            build_no_fixed_point(Uniform(1.0, 2.0), Uniform(0.0, 3.0))

    def test_one_fixed_point_accepts_affine(self):
        field = build_one_fixed_point(Uniform(1.0, 2.0), Uniform(0.0, 3.0))
        assert len(field.partition.fixed_intervals) == 1

    def test_two_fixed_points_quadratic(self):
        from otflow.flow import flow
        from otflow.monotone import map_from_callables
        T = map_from_callables(
            lambda x: np.asarray(x, dtype=float) ** 2,
            derivative=lambda x: 2.0 * np.asarray(x, dtype=float),
            second_derivative=lambda x: np.full_like(
                np.asarray(x, dtype=float), 2.0),
            inverse=lambda y: np.sqrt(np.asarray(y, dtype=float)),
            domain=(0.0, 1.0))
        field = build_two_fixed_points(transport_map=T, domain=(0.0, 1.0))
        xs = np.linspace(0.15, 0.9, 151)
        y = flow(field, 1.0, xs)
        good = np.isfinite(y)
        assert good.sum() > 140
        assert np.max(np.abs(y[good] - xs[good] ** 2)) <= TOL_FLOW

    def test_general_is_default_entry(self):
        assert build_general is build_velocity


class TestTimeNormalize:
    """Travel time across each moving interval's orbit step is one."""

    def test_already_normalized(self):
        field = build_velocity(Uniform(1.0, 2.0), Uniform(0.0, 3.0))
        _, rows = time_normalize(field)
        assert rows, "every built interval reports a measured time"
        for row in rows:
            assert abs(row["seed_time"] - 1.0) <= 1e-6, row


class TestApproximateLipschitz:
    """Shift search for a Lipschitz field within a transport budget."""

    def test_shift_within_budget(self):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            m0 = Uniform(0.0, 2.0)
            m1 = Uniform(0.0, 2.0)
            res = approximate_lipschitz(m0, m1, 1e-2)
        assert 0.0 < abs(res.shift) <= 1e-2
        assert res.w1_target_gap <= 1e-2
        assert wasserstein1(m1, res.target) <= 1e-2 + 1e-12

    def test_detected_slopes_away_from_one(self):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            res = approximate_lipschitz(Uniform(0.0, 2.0), Uniform(0.0, 2.0),
                                        1e-2)
        T = res.transport_map
        for p in res.partition.fixed_points:
            tp = float(np.asarray(T.derivative(p)))
            assert abs(tp - 1.0) > 1e-6 or not res.partition.fixed_points

    def test_budget_exhaustion_raises(self):
        with pytest.raises(SearchFailureError):
            approximate_lipschitz(Uniform(0.0, 2.0), Uniform(0.0, 2.0), 1e-2,
                                  budget=0)

    def test_gaussian_equal_pair(self):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            res = approximate_lipschitz(Gaussian(0.0, 1.0), Gaussian(0.0, 1.0),
                                        5e-3)
        xs = np.linspace(-2.0, 2.0, 401)
        v = res.field(xs)
        good = np.isfinite(v)
        dv = np.diff(v[good]) / np.diff(xs[good])
        assert np.max(np.abs(dv)) < 50.0, "the shifted field must stay Lipschitz"


class TestTruncationZones:
    """Fields with an indeterminate end record and expose their gap."""

    def test_zone_recorded(self, bad_fixed_point_built):
        _, field = bad_fixed_point_built
        zones = field.truncation_zones()
        assert zones, "harmonic-rate end should leave a truncation zone"
        z = min(zones, key=lambda z: z.fp)
        assert z.fp == 0.0 and z.flagged
        assert 0.0 < z.edge < 0.01

    def test_flagged_zone_warning_text(self, bad_fixed_point_built):
        _, field = bad_fixed_point_built
        text = " ".join(field.all_warnings())
        assert "slope 1" in text and "truncation" in text
