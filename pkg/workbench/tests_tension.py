"""
Tests for the surface tension: exact values on small boxes, thermodynamic
integration against the exact oracle, and the quenched replica average.
"""

import math

import numpy as np
from django.test import SimpleTestCase
from hypothesis import given, settings, strategies as st
from hypothesis.extra.django import TestCase as HypothesisTestCase

from workbench.exceptions import (
    DomainValidationError,
    GridNotFromZero,
    InsufficientSamples,
    InvalidParameter,
    TooLarge,
)
from workbench.services.disorder import CouplingField, CouplingLaw, derive_seed, sample_couplings
from workbench.services.geometry import Direction, discretize_box
from workbench.services.rc_core import BondConfig
from workbench.services.tension import (
    PURE_ISING_BETA_C,
    correlation_gap,
    default_beta_grid,
    explicit_tension_bound,
    is_disconnected,
    quenched_tension,
    tension_bounds,
    tension_exact,
    tension_replica,
    tension_ti,
    trapezoid,
)


def strip(H=1.1):
    """Three columns whose boundary halves are joined only by vertical edges."""
    return discretize_box((0.0, 0.5), 3.0, H, Direction.axis(1, 2))


def vertical_sum(couplings, region):
    return math.fsum(couplings[e] for e in region.edges if e[0][0] == e[1][0])


# ============================================================================
# Exact tension
# ============================================================================

class ExactTensionTests(SimpleTestCase):

    def test_constant_strip_tension_equals_beta(self):
        region = strip()
        couplings = CouplingField.constant(region.edges, 1.0)
        for beta in (0.25, 1.0, 3.0):
            self.assertAlmostEqual(tension_exact(region, couplings, beta, 2.0).value, beta, places=12)

    def test_strip_tension_is_vertical_capacity(self):
        region = strip()
        couplings = sample_couplings(CouplingLaw.uniform(0.0, 1.0), region.edges, 14)
        expected = 1.7 * vertical_sum(couplings, region) / 3.0
        for q in (1.0, 2.0, 4.0):
            self.assertAlmostEqual(tension_exact(region, couplings, 1.7, q).value, expected, places=10)

    def test_square_tension(self):
        region = discretize_box((0.5, 0.5), 2.0, 1.0, Direction.axis(1, 2))
        couplings = CouplingField.constant(region.edges, 0.5).with_value(((0, 0), (0, 1)), 0.9)
        expected = 2.0 * (0.9 + 0.5) / 2.0
        self.assertAlmostEqual(tension_exact(region, couplings, 2.0, 2.0).value, expected, places=12)

    def test_zero_beta_gives_zero_tension(self):
        region = strip(1.6)
        couplings = CouplingField.constant(region.edges, 1.0)
        self.assertEqual(tension_exact(region, couplings, 0.0, 2.0).value, 0.0)

    def test_cap(self):
        region = strip(1.6)
        with self.assertRaises(TooLarge):
            tension_exact(region, CouplingField.constant(region.edges, 1.0), 1.0, 2.0, cap=10)

    def test_is_disconnected(self):
        region = strip()
        verticals = [e for e in region.edges if e[0][0] == e[1][0]]
        horizontals = [e for e in region.edges if e not in verticals]
        self.assertTrue(is_disconnected(BondConfig.from_open(region.edges, horizontals), region))
        self.assertFalse(is_disconnected(BondConfig.from_open(region.edges, verticals[:1]), region))
        with self.assertRaises(DomainValidationError):
            is_disconnected(BondConfig.from_open(verticals, []), region)

    def test_bounds(self):
        region = strip()
        bounds = tension_bounds(region, CouplingLaw.two_point('1/2', 1, '1/2'), 1.2, 2.0)
        self.assertAlmostEqual(bounds['tau_min'], 0.6, places=12)
        self.assertAlmostEqual(bounds['tau_max'], 1.2, places=12)
        self.assertEqual(bounds['explicit_bound'], explicit_tension_bound(2, 1.2, 1.0))
        self.assertGreaterEqual(bounds['explicit_bound'], bounds['tau_max'])


class TensionMonotonicityTests(HypothesisTestCase):

    @given(
        beta=st.floats(min_value=0.0, max_value=3.0),
        bump=st.floats(min_value=0.0, max_value=0.5),
        seed=st.integers(min_value=0, max_value=10**6),
        index=st.integers(min_value=0, max_value=16),
    )
    @settings(max_examples=10, deadline=None)
    def test_nondecreasing_in_beta_and_couplings(self, beta, bump, seed, index):
        region = strip(1.6)
        couplings = sample_couplings(CouplingLaw.uniform(0.0, 1.0), region.edges, seed)
        tau = tension_exact(region, couplings, beta, 2.0).value
        self.assertGreaterEqual(tau, -1e-12)
        self.assertGreaterEqual(tension_exact(region, couplings, beta + bump, 2.0).value, tau - 1e-9)
        edge = region.edges[index]
        stronger = couplings.with_value(edge, min(1.0, couplings[edge] + bump))
        self.assertGreaterEqual(tension_exact(region, stronger, beta, 2.0).value, tau - 1e-9)


# ============================================================================
# Thermodynamic integration
# ============================================================================

class ThermoIntegrationTests(SimpleTestCase):

    def test_gap_of_clamped_strip_is_the_vertical_coupling_sum(self):
        region = strip()
        couplings = sample_couplings(CouplingLaw.uniform(0.2, 1.0), region.edges, 6)
        for beta in (0.0, 0.7):
            gap, stderr = correlation_gap(region, couplings, beta, source='exact')
            self.assertAlmostEqual(gap, vertical_sum(couplings, region) / region.area, places=12)
            self.assertEqual(stderr, 0.0)

    def test_default_grid(self):
        grid = default_beta_grid(1.2)
        self.assertEqual(grid[0], 0.0)
        self.assertAlmostEqual(grid[-1], 1.2, places=12)
        self.assertTrue(np.all(np.diff(grid) > 0))
        self.assertIn(round(PURE_ISING_BETA_C, 12), np.round(grid, 12))

    def test_trapezoid_is_exact_on_lines(self):
        grid = np.linspace(0.0, 2.0, 7)
        self.assertAlmostEqual(trapezoid(grid, 3.0 * grid + 1.0), 8.0, places=12)

    def test_exact_correlations_reproduce_exact_tension(self):
        region = strip(1.6)
        couplings = sample_couplings(CouplingLaw.uniform(0.2, 1.0), region.edges, 6)
        beta = 1.1
        exact = tension_exact(region, couplings, beta, 2.0).value
        ti = tension_ti(region, couplings, beta, 2, beta_grid=np.linspace(0.0, beta, 801),
                        correlation_source='exact')
        self.assertEqual(ti.method, 'thermo-integration')
        self.assertAlmostEqual(ti.value, exact, delta=1e-6)
        self.assertLess(ti.bias, 1e-6)

    def test_monte_carlo_on_fully_clamped_region(self):
        region = strip()
        couplings = sample_couplings(CouplingLaw.dilution('7/10'), region.edges, 2)
        ti = tension_ti(region, couplings, 1.5, 2, beta_grid=np.linspace(0.0, 1.5, 5),
                        sweeps=40, batches=20, burn_in=0, seed=4)
        self.assertAlmostEqual(ti.value, tension_exact(region, couplings, 1.5, 2.0).value, places=10)
        self.assertEqual(ti.stderr, 0.0)

    def test_grid_must_start_at_zero(self):
        region = strip()
        couplings = CouplingField.constant(region.edges, 1.0)
        with self.assertRaises(GridNotFromZero):
            tension_ti(region, couplings, 1.0, 2, beta_grid=[0.1, 0.5, 1.0], correlation_source='exact')
        with self.assertRaises(DomainValidationError):
            tension_ti(region, couplings, 1.0, 2, beta_grid=[0.0, 0.5, 0.9], correlation_source='exact')

    def test_ising_only(self):
        region = strip()
        with self.assertRaises(InvalidParameter):
            tension_ti(region, CouplingField.constant(region.edges, 1.0), 1.0, 3)

    def test_batch_floor(self):
        region = strip()
        with self.assertRaises(InsufficientSamples):
            tension_ti(region, CouplingField.constant(region.edges, 1.0), 1.0, 2,
                       beta_grid=[0.0, 1.0], sweeps=100, batches=10)


# ============================================================================
# Quenched average
# ============================================================================

class QuenchedTensionTests(SimpleTestCase):

    def test_replicas_follow_derived_seeds(self):
        law = CouplingLaw.dilution('7/10')
        result = quenched_tension(law, Direction.axis(1, 2), 3.0, 1.1, 0.8, 2.0, replicas=6, seed=10,
                                  center=(0.0, 0.5), check_size=False)
        self.assertEqual(result.seeds, [derive_seed(10, k) for k in range(6)])
        region = strip()
        for seed, tau in zip(result.seeds, result.samples):
            couplings = sample_couplings(law, region.edges, seed)
            self.assertAlmostEqual(tau, 0.8 * vertical_sum(couplings, region) / 3.0, places=10)
        self.assertAlmostEqual(result.mean, float(np.mean(result.samples)), places=12)

    def test_constant_law_has_no_spread(self):
        result = quenched_tension(CouplingLaw.constant(1), Direction.axis(1, 2), 3.0, 1.1, 0.5, 2.0,
                                  replicas=3, center=(0.0, 0.5), check_size=False)
        self.assertEqual(result.stderr, 0.0)
        self.assertAlmostEqual(result.mean, 0.5, places=12)

    def test_at_least_two_replicas(self):
        with self.assertRaises(InvalidParameter):
            quenched_tension(CouplingLaw.constant(1), Direction.axis(1, 2), 3.0, 1.1, 0.5, 2.0,
                             replicas=1, check_size=False)

    def test_custom_runner_receives_json_payloads(self):
        seen = []

        def runner(payloads):
            seen.extend(payloads)
            return [tension_replica(p) for p in payloads]

        quenched_tension(CouplingLaw.constant(1), Direction.axis(1, 2), 3.0, 1.1, 0.5, 2.0,
                         replicas=2, center=(0.0, 0.5), check_size=False, runner=runner)
        self.assertEqual(len(seen), 2)
        self.assertEqual(seen[0]['law'], {'kind': 'constant', 'value': '1'})
        self.assertEqual(seen[0]['region']['direction']['lattice_vector'], [0, 1])
