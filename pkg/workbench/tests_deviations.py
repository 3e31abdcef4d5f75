"""
Tests for the disorder statistics of the tension: empirical rate, annealed
tension, edge sensitivity and exact tilted expectations.
"""

import math

import numpy as np
from django.test import SimpleTestCase
from hypothesis import given, settings, strategies as st
from hypothesis.extra.django import TestCase as HypothesisTestCase

from workbench.exceptions import (
    InfiniteSupport,
    InvalidParameter,
    ProvenanceMismatch,
    TooFewSamples,
    TooLarge,
)
from workbench.services.deviations import (
    LAMBDA_GRID,
    Provenance,
    alpha_slope,
    annealed_tension,
    convex_minorant,
    edge_sensitivity_exact,
    empirical_rate,
    legendre_residual,
    limit_ordering,
    local_curvature,
    tilted_stats_exact,
)
from workbench.services.disorder import CouplingField, CouplingLaw, sample_couplings
from workbench.services.geometry import Direction, discretize_box

PROVENANCE = Provenance(L=4.0, H=4.0, beta=1.0, q=2.0, d=2, n=(0.0, 1.0))


def strip(H=1.1):
    return discretize_box((0.0, 0.5), 3.0, H, Direction.axis(1, 2))


def cross():
    """3x3 sites with one interior site; 12 edges."""
    return discretize_box((0.0, 0.0), 3.0, 1.1, Direction.axis(1, 2))


# ============================================================================
# Empirical rate and annealed tension
# ============================================================================

class EmpiricalRateTests(SimpleTestCase):

    def test_rate_values(self):
        samples = np.arange(1, 101) / 100.0
        rate = empirical_rate(samples, PROVENANCE, tau_grid=[0.005, 0.5, 1.0, 2.0])
        self.assertTrue(math.isnan(rate.rate[0]))
        self.assertAlmostEqual(rate.rate[1], -math.log(0.5) / 4.0, places=12)
        self.assertEqual(rate.rate[2], 0.0)
        self.assertEqual(rate.rate[3], 0.0)
        self.assertEqual(rate.samples, 100)

    def test_needs_one_hundred_samples(self):
        with self.assertRaises(TooFewSamples):
            empirical_rate(np.ones(99), PROVENANCE)
        with self.assertRaises(TooFewSamples):
            annealed_tension(np.ones(99), PROVENANCE)

    def test_rate_is_nonincreasing(self):
        samples = np.random.default_rng(1).gamma(2.0, 0.3, size=400)
        rate = empirical_rate(samples, PROVENANCE)
        defined = rate.rate[rate.defined]
        self.assertTrue(np.all(np.diff(defined) <= 1e-15))

    def test_curvature_report(self):
        samples = np.random.default_rng(2).normal(1.0, 0.1, size=1000)
        report = local_curvature(empirical_rate(samples, PROVENANCE))
        self.assertAlmostEqual(report['center'], float(np.mean(samples)))
        self.assertGreaterEqual(report['points'], 3)


class AnnealedTensionTests(SimpleTestCase):

    def test_constant_samples_are_linear_in_lambda(self):
        annealed = annealed_tension(np.full(100, 0.7), PROVENANCE, [0.5, 1.0, 2.0])
        np.testing.assert_allclose(annealed.tau_lambda, [0.35, 0.7, 1.4], atol=1e-12)
        self.assertTrue(annealed.is_concave())
        self.assertEqual(alpha_slope(annealed), 2.0)

    def test_orderings_hold_for_random_samples(self):
        samples = np.random.default_rng(3).uniform(0.5, 1.5, size=300)
        annealed = annealed_tension(samples, PROVENANCE)
        self.assertTrue(annealed.is_concave())
        self.assertEqual(limit_ordering(annealed), {
            'jensen': True,
            'small_lambda_near_mean': True,
            'large_lambda_above_min': True,
            'nonincreasing': True,
        })
        self.assertEqual(len(annealed.lambdas), len(LAMBDA_GRID))
        self.assertTrue(np.all(annealed.tau_hat_low <= annealed.tau_hat_high))

    def test_minimizer_moves_down_as_lambda_grows(self):
        samples = np.random.default_rng(4).uniform(0.0, 1.0, size=200)
        annealed = annealed_tension(samples, PROVENANCE, [0.01, 10.0])
        self.assertLessEqual(annealed.tau_hat_high[1], annealed.tau_hat_low[0])

    def test_lambda_must_be_positive(self):
        with self.assertRaises(InvalidParameter):
            annealed_tension(np.ones(100), PROVENANCE, [0.0, 1.0])

    def test_provenance_checked(self):
        samples = np.random.default_rng(5).uniform(0.0, 1.0, size=100)
        other = Provenance(L=6.0, H=4.0, beta=1.0, q=2.0, d=2, n=(0.0, 1.0))
        rate = empirical_rate(samples, PROVENANCE)
        with self.assertRaises(ProvenanceMismatch):
            legendre_residual(rate, annealed_tension(samples, other))
        self.assertTrue(math.isfinite(legendre_residual(rate, annealed_tension(samples, PROVENANCE, rate=rate))))


class ConvexMinorantPropertyTests(HypothesisTestCase):

    @given(values=st.lists(st.floats(min_value=-10.0, max_value=10.0), min_size=2, max_size=40))
    @settings(max_examples=100, deadline=None)
    def test_minorant_is_below_and_convex(self, values):
        x = np.arange(len(values), dtype=float)
        y = np.array(values)
        hull = convex_minorant(x, y)
        self.assertTrue(np.all(hull <= y + 1e-9))
        self.assertTrue(np.all(np.diff(hull, 2) >= -1e-9))
        self.assertAlmostEqual(hull[0], y[0])
        self.assertAlmostEqual(hull[-1], y[-1])


# ============================================================================
# Exact small-region diagnostics
# ============================================================================

class EdgeSensitivityTests(SimpleTestCase):

    def test_product_measure_strip(self):
        region = strip()
        couplings = sample_couplings(CouplingLaw.uniform(0.2, 1.0), region.edges, 3)
        vertical = ((0, 0), (0, 1))
        horizontal = ((-1, 1), (0, 1))
        for row in edge_sensitivity_exact(region, couplings, 1.3, 2.0, vertical, [0.3, 0.9]):
            self.assertAlmostEqual(row.a, 1.0, places=9)
            self.assertAlmostEqual(row.a_finite_difference, 1.0, places=6)
        for row in edge_sensitivity_exact(region, couplings, 1.3, 2.0, horizontal, [0.5]):
            self.assertAlmostEqual(row.a, 0.0, places=9)

    def test_matches_finite_difference_with_interior_site(self):
        region = cross()
        self.assertEqual(region.n_edges, 12)
        couplings = sample_couplings(CouplingLaw.uniform(0.2, 1.0), region.edges, 8)
        for edge in (((0, -1), (0, 0)), ((-1, 0), (0, 0))):
            for row in edge_sensitivity_exact(region, couplings, 1.1, 2.0, edge, [0.25, 0.6, 1.0]):
                self.assertGreaterEqual(row.a, -1e-12)
                self.assertAlmostEqual(row.a, row.a_finite_difference, delta=1e-6)

    def test_limits(self):
        region = strip(1.6)
        couplings = CouplingField.constant(region.edges, 1.0)
        with self.assertRaises(TooLarge):
            edge_sensitivity_exact(region, couplings, 1.0, 2.0, region.edges[0], [0.5])
        small = strip()
        couplings = CouplingField.constant(small.edges, 1.0)
        with self.assertRaises(InvalidParameter):
            edge_sensitivity_exact(small, couplings, 0.0, 2.0, small.edges[0], [0.5])
        with self.assertRaises(InvalidParameter):
            edge_sensitivity_exact(small, couplings, 1.0, 2.0, small.edges[0], [0.0])


class TiltedStatsTests(SimpleTestCase):

    def setUp(self):
        self.region = discretize_box((0.5, 0.5), 2.0, 1.0, Direction.axis(1, 2))
        self.law = CouplingLaw.two_point('1/2', 1, '1/2')

    def test_entropy_identity(self):
        for lam in (0.2, 1.0, 3.0):
            stats = tilted_stats_exact(self.region, self.law, 1.0, 2.0, lam)
            self.assertLess(stats.identity_residual, 1e-5)
            self.assertGreaterEqual(stats.entropy, -1e-12)

    def test_tilt_favours_weak_couplings(self):
        stats = tilted_stats_exact(self.region, self.law, 1.5, 2.0, 1.0)
        self.assertAlmostEqual(stats.plain_expectations['mean_J'], 0.75, places=12)
        self.assertLess(stats.expectations['mean_J'], stats.plain_expectations['mean_J'])
        self.assertLessEqual(stats.tau_lambda, 1.0 * stats.plain_expectations['tau'] + 1e-12)

    def test_support_and_size_limits(self):
        with self.assertRaises(InfiniteSupport):
            tilted_stats_exact(self.region, CouplingLaw.uniform(0.0, 1.0), 1.0, 2.0, 1.0)
        with self.assertRaises(TooLarge):
            tilted_stats_exact(strip(1.6), self.law, 1.0, 2.0, 1.0)
        with self.assertRaises(InvalidParameter):
            tilted_stats_exact(self.region, self.law, 1.0, 2.0, 0.0)
