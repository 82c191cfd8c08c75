"""Monotone map computation and fixed point detection.

The quantile-composition route has exact closed forms for uniform and normal
pairs; those serve as oracles here.  Fixed point structure is checked on maps
whose fixed sets are known by construction.
"""

import numpy as np
import pytest

from otflow.config import DEFAULT_CONFIG
from otflow.errors import InputError, InvalidMapError
from otflow.measures import AffineImage, Gaussian, Uniform
from otflow.monotone import (compute_monotone_map, find_fixed_points,
                             map_from_callables)

TOL_MAP = 1e-10
TOL_DERIV = 1e-7
TOL_FP = 1e-8


class TestComputeMonotoneMap:
    """Quantile-of-CDF composition against closed forms."""

    def test_uniform_pair_affine(self):
        T = compute_monotone_map(Uniform(1.0, 2.0), Uniform(0.0, 3.0))
        xs = np.linspace(1.0, 2.0, 1001)
        assert np.max(np.abs(T.forward(xs) - (3.0 * xs - 3.0))) <= TOL_MAP
        assert np.max(np.abs(T.derivative(xs) - 3.0)) <= 1e-8

    def test_gaussian_pair_affine(self):
        T = compute_monotone_map(Gaussian(0.0, 1.0), Gaussian(1.0, 2.0))
        xs = np.linspace(-3.0, 3.0, 601)
        assert np.max(np.abs(T.forward(xs) - (2.0 * xs + 1.0))) <= 1e-9
        assert np.max(np.abs(T.derivative(xs) - 2.0)) <= TOL_DERIV

    def test_inverse_roundtrip(self):
        T = compute_monotone_map(Uniform(0.0, 2.0), Gaussian(0.0, 1.0))
        xs = np.linspace(0.05, 1.95, 77)
        assert np.max(np.abs(T.inverse(T.forward(xs)) - xs)) <= 1e-9

    def test_source_target_attached(self):
        m0, m1 = Uniform(0.0, 1.0), Uniform(2.0, 4.0)
        T = compute_monotone_map(m0, m1)
        assert T.source is m0 and T.target is m1

    def test_affine_image_target(self):
        m0 = Uniform(1.0, 2.0)
        T = compute_monotone_map(m0, AffineImage(m0, 1.0 / 3.0, -3.0))
        xs = np.linspace(1.0, 2.0, 101)
        assert np.max(np.abs(T.forward(xs) - (3.0 * xs - 3.0))) <= TOL_MAP

    def test_monotone_on_random_pairs(self):
        T = compute_monotone_map(Gaussian(0.0, 1.0),
                                 AffineImage(Uniform(0.0, 1.0), 0.5, 1.0))
        rng = np.random.default_rng(20260823)
        a = rng.uniform(-3.0, 3.0, 4000)
        b = a + rng.uniform(1e-9, 1.0, 4000)
        assert np.all(np.asarray(T.forward(b)) >= np.asarray(T.forward(a)))


class TestMapFromCallables:
    """Wrapping closed-form callables with numeric fallbacks."""

    def test_numeric_derivative(self):
        T = map_from_callables(lambda x: np.asarray(x) ** 3 + np.asarray(x),
                               source=Uniform(0.5, 2.0), domain=(0.5, 2.0))
        xs = np.linspace(0.6, 1.9, 27)
        assert np.max(np.abs(T.derivative(xs) - (3.0 * xs ** 2 + 1.0))) <= 1e-6

    def test_numeric_inverse(self):
        T = map_from_callables(lambda x: np.asarray(x) ** 3 + np.asarray(x),
                               source=Uniform(0.5, 2.0), domain=(0.5, 2.0))
        ys = np.asarray(T.forward(np.linspace(0.6, 1.9, 13)))
        xs = np.asarray(T.inverse(ys))
        assert np.max(np.abs(xs ** 3 + xs - ys)) <= 1e-10

    def test_decreasing_callable_rejected_at_build(self):
        from otflow.errors import TransportError
        from otflow.velocity import build_velocity
        T = map_from_callables(lambda x: -np.asarray(x),
                               derivative=lambda x: np.full_like(
                                   np.asarray(x, dtype=float), -1.0),
                               domain=(0.0, 1.0))
        with pytest.raises(TransportError):
            build_velocity(transport_map=T, domain=(0.0, 1.0))


class TestFindFixedPoints:
    """Partition structure on maps with known fixed sets."""

    def test_single_interior_fixed_point(self):
        T = compute_monotone_map(Uniform(1.0, 2.0), Uniform(0.0, 3.0))
        part = find_fixed_points(T, domain=(0.0, 3.0), search=(1.0, 2.0))
        fps = part.fixed_points
        assert len(fps) >= 1
        assert min(abs(p - 1.5) for p in fps) <= TOL_FP

    def test_identity_is_all_fixed(self):
        m = Uniform(0.0, 1.0)
        T = compute_monotone_map(m, Uniform(0.0, 1.0))
        part = find_fixed_points(T, domain=(0.0, 1.0))
        assert not part.moving_intervals
        total = sum(b - a for a, b in part.fixed_intervals)
        assert abs(total - 1.0) <= 1e-6

    def test_two_endpoint_fixed_points(self):
        T = map_from_callables(
            lambda x: np.asarray(x) + 0.1 * np.asarray(x) * (1.0 - np.asarray(x)),
            derivative=lambda x: 1.0 + 0.1 - 0.2 * np.asarray(x),
            source=Uniform(0.0, 1.0), domain=(0.0, 1.0))
        part = find_fixed_points(T, domain=(0.0, 1.0))
        fps = sorted(part.fixed_points)
        assert abs(fps[0] - 0.0) <= TOL_FP and abs(fps[-1] - 1.0) <= TOL_FP
        assert len(part.moving_intervals) == 1
        itv = part.moving_intervals[0]
        assert itv.direction == 1 and itv.lo_is_fixed and itv.hi_is_fixed

    def test_cubic_touch_detected_as_plateau(self):
        T = map_from_callables(
            lambda x: np.asarray(x) + (np.asarray(x) - 0.5) ** 3,
            derivative=lambda x: 1.0 + 3.0 * (np.asarray(x) - 0.5) ** 2,
            source=Uniform(0.0, 1.0), domain=(0.0, 1.0))
        part = find_fixed_points(T, domain=(0.0, 1.0))
        assert len(part.fixed_intervals) == 1
        a, b = part.fixed_intervals[0]
        assert a < 0.5 < b, "sub-resolution touch widens to a plateau"
        assert b - a < 5e-3
        dirs = sorted((i.lo, i.direction) for i in part.moving_intervals)
        assert [d for _, d in dirs] == [-1, 1], "cubic pushes away on both sides"

    def test_tangential_touch_flagged_indeterminate(self):
        # touch point 1/3 is never a dyadic scan node, so the tangency is
        # located by local minimization and carries slope exactly 1
        c = 1.0 / 3.0
        T = map_from_callables(
            lambda x: np.asarray(x) + (np.asarray(x) - c) ** 2,
            derivative=lambda x: 1.0 + 2.0 * (np.asarray(x) - c),
            domain=(0.0, 1.0))
        part = find_fixed_points(T, domain=(0.0, 1.0))
        assert part.indeterminate, "a tangency with unit slope should be flagged"
        assert min(abs(p - c) for p in part.indeterminate) <= 1e-5

    def test_moving_and_fixed_cover_domain(self):
        T = compute_monotone_map(Uniform(0.0, 2.0), Uniform(0.5, 2.5))
        part = find_fixed_points(T, domain=(0.0, 2.5))
        pieces = ([tuple(t) for t in part.fixed_intervals]
                  + [(i.lo, i.hi) for i in part.moving_intervals])
        pieces.sort()
        assert abs(pieces[0][0] - 0.0) <= 1e-9
        assert abs(pieces[-1][1] - 2.5) <= 1e-9
        for (a, b), (c, d) in zip(pieces, pieces[1:]):
            assert b <= c + 1e-9, "pieces overlap"
            assert c - b <= 1e-6, f"gap between {b} and {c}"

    def test_partition_respects_config_tolerance(self):
        T = compute_monotone_map(Uniform(1.0, 2.0), Uniform(0.0, 3.0))
        cfg = DEFAULT_CONFIG.with_(fixed_point_grid=2 ** 10)
        part = find_fixed_points(T, domain=(0.0, 3.0), config=cfg,
                                 search=(1.0, 2.0))
        assert min(abs(p - 1.5) for p in part.fixed_points) <= 1e-6
