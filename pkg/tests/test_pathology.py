"""Counterexample construction and its two probes.

Independent oracles: the consecutive-gap drop for the quadratic sequence in
exact rational arithmetic, integral brackets for the gap sum, and the identity
tying the anchor derivative to the drop.  Scan landmarks (crossing index,
partial integrals) were computed once with this module's probes and are frozen
here so regressions surface as value changes, not just flag flips.
"""

from fractions import Fraction

import numpy as np
import pytest

from otflow.errors import InputError
from otflow.pathology import build_counterexample, probe_non_integrability

FROZEN_CROSSING_INDEX = 11264747
FROZEN_CROSSING_VALUE = 1000.0000213837988
FROZEN_L1_PARTIAL = {
    10: 0.00610181,
    100: 0.01051702,
    1000: 0.01470384,
    10000: 0.01924442,
}


class TestQuadraticMap:
    """Structural facts about the quadratic-gap map."""

    def test_drop_identity_exact(self, quadratic_probe):
        cmap, _ = quadratic_probe
        seq = cmap.sequence
        for i in (0, 1, 7, 100, 4000):
            # gamma cancels in 1 - b_(i+1)/b_i, so the drop is the rational
            # ((i+11)^2 - (i+10)^2) / (i+11)^2 with no roundoff at all
            want = 1 - Fraction((i + 10) ** 2, (i + 11) ** 2)
            got = float(seq.drop(i))
            assert abs(got - float(want)) <= 1e-16 * float(want)

    def test_gap_sum_bracket(self, quadratic_probe):
        cmap, _ = quadratic_probe
        n = 1_000_000
        partial = float(np.sum(cmap.sequence.gap(np.arange(n))))
        # integral comparison brackets the missing tail of 1/(i+10)^2
        tail_lo = cmap.gamma / (n + 10)
        tail_hi = cmap.gamma / (n + 9)
        assert partial + tail_lo <= 0.5 + 1e-12
        assert partial + tail_hi >= 0.5 - 1e-12

    def test_anchors_decrease_to_positive_floor(self, quadratic_probe):
        cmap, _ = quadratic_probe
        assert cmap.anchors[0] == 0.5
        assert np.all(np.diff(cmap.anchors) < 0)
        assert cmap.table_floor > 0

    def test_anchor_mapping_bitwise(self, quadratic_probe):
        cmap, _ = quadratic_probe
        img = cmap.forward(cmap.anchors[:-1])
        assert np.array_equal(img, cmap.anchors[1:])

    def test_derivative_range(self, quadratic_probe):
        cmap, _ = quadratic_probe
        xs = np.linspace(cmap.table_floor, 1.0, 40001)
        tp = cmap.derivative(xs)
        assert tp.min() >= 0.5 and tp.max() <= 1.5

    def test_derivative_vs_finite_difference(self, quadratic_probe):
        cmap, _ = quadratic_probe
        rng = np.random.default_rng(7)
        xs = rng.uniform(0.05, 0.45, 200)
        h = 1e-7
        fd = (cmap.forward(xs + h) - cmap.forward(xs - h)) / (2 * h)
        assert np.max(np.abs(fd - cmap.derivative(xs))) <= 1e-5

    def test_map_strictly_below_identity(self, quadratic_probe):
        cmap, _ = quadratic_probe
        xs = np.linspace(1e-6, 1.0, 5000)
        assert np.all(cmap.forward(xs) < xs)
        assert np.all(cmap.displacement(xs) > 0)

    def test_anchor_derivative_equals_quarter_drop(self, quadratic_probe):
        cmap, _ = quadratic_probe
        for i in (0, 3, 50, 900):
            want = 1.0 + float(cmap.sequence.drop(i)) / 4.0
            assert abs(cmap.anchor_derivative(i) - want) <= 1e-14


class TestGrowthProbe:
    """Derivative products along the orbit of 1/2 diverge past any threshold."""

    def test_flags(self, quadratic_probe):
        _, res = quadratic_probe
        assert res.product_monotone
        assert res.bound_holds

    def test_first_row_is_empty_product(self, quadratic_probe):
        _, res = quadratic_probe
        first = res.rows[0]
        assert first["i"] == 0
        assert first["product"] == 1.0
        assert first["lower_bound"] == 0.0

    def test_rows_strictly_increase(self, quadratic_probe):
        _, res = quadratic_probe
        prods = [r["product"] for r in res.rows]
        assert all(b > a for a, b in zip(prods, prods[1:]))
        for r in res.rows:
            assert r["product"] >= r["lower_bound"]

    def test_row_product_recomputed(self, quadratic_probe):
        cmap, res = quadratic_probe
        # recompute P_i for a mid-scan row directly from the drop formula
        row = next(r for r in res.rows if 1000 <= r["i"] <= 100000)
        i = row["i"]
        js = np.arange(i, dtype=float)
        lp = float(np.sum(np.log1p(cmap.sequence.drop(js) / 4.0)))
        assert abs(row["product"] - np.exp(lp)) <= 1e-9 * row["product"]

    def test_crossing_frozen(self, quadratic_probe):
        _, res = quadratic_probe
        assert res.crossing_index == FROZEN_CROSSING_INDEX
        assert abs(res.crossing_value - FROZEN_CROSSING_VALUE) <= 1e-6
        assert res.crossing_value > 1000.0
        assert res.i_scanned >= res.crossing_index


class TestDivergenceProbe:
    """Partial integrals of |v| near the fixed end refuse to converge."""

    def test_levels_and_flags(self, log_squared_probe):
        _, res = log_squared_probe
        assert res.levels == (10, 100, 1000, 10000)
        assert res.anchor_speed_monotone
        assert res.seed_floor > 0
        assert res.n_quad_points > 0

    def test_l1_partial_frozen(self, log_squared_probe):
        _, res = log_squared_probe
        for row in res.rows:
            want = FROZEN_L1_PARTIAL[row["m"]]
            assert abs(row["l1_partial"] - want) <= 1e-5 * want, row

    def test_strict_increase_without_plateau(self, log_squared_probe):
        _, res = log_squared_probe
        vals = [r["l1_partial"] for r in res.rows]
        assert all(b > a for a, b in zip(vals, vals[1:]))
        incs = [r["increment"] for r in res.rows[1:]]
        assert all(i > 0 for i in incs)
        # each extra decade of depth keeps contributing the same order of mass
        assert incs[-1] > 0.25 * incs[0]

    def test_clock_defect_zero(self, log_squared_probe):
        _, res = log_squared_probe
        for row in res.rows:
            assert row["clock_defect"] == 0.0, row

    def test_anchor_speeds_grow(self, log_squared_probe):
        # the derivative product amplifies the seed along the orbit, so the
        # speed at depth m increases even as the anchors shrink to 0
        _, res = log_squared_probe
        speeds = [r["anchor_speed"] for r in res.rows]
        assert all(b > a for a, b in zip(speeds, speeds[1:]))
        assert all(s > 0 for s in speeds)

    def test_field_integral_tracks_exact_at_shallow_depth(self, log_squared_probe):
        _, res = log_squared_probe
        row = res.rows[0]
        rel = abs(row["l1_field"] - row["l1_partial"]) / row["l1_partial"]
        assert rel <= 0.2, row

    def test_lower_bound_below_partial(self, log_squared_probe):
        _, res = log_squared_probe
        for row in res.rows:
            assert 0 < row["lower_bound"] <= row["l1_partial"], row


class TestValidation:
    """Bad construction and probe inputs are refused loudly."""

    def test_unknown_variant(self):
        with pytest.raises(InputError):
            build_counterexample("cubic")

    def test_nonpositive_level(self, log_squared_probe):
        cmap, _ = log_squared_probe
        with pytest.raises(InputError):
            probe_non_integrability(cmap, levels=(0,))

    def test_level_beyond_table(self, log_squared_probe):
        cmap, _ = log_squared_probe
        with pytest.raises(InputError):
            probe_non_integrability(cmap, levels=(cmap.n_anchors,))
