"""
Tests for the exact random-cluster and Ising oracles.
"""

import math
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase
from hypothesis import given, settings, strategies as st
from hypothesis.extra.django import TestCase as HypothesisTestCase

from workbench.exceptions import (
    DomainValidationError,
    InvalidParameter,
    NegativeBeta,
    TooLarge,
    ZeroProbabilityCondition,
)
from workbench.services.disorder import CouplingField, CouplingLaw, edge_prob, sample_couplings
from workbench.services.geometry import Direction, discretize_box
from workbench.services.rc_core import (
    BondConfig,
    BoundaryCondition,
    count_clusters,
    dump_measure_csv,
    exact_conditional,
    exact_event,
    exact_log_event,
    exact_measure,
    exact_spin_correlations,
    exact_spin_distribution,
    open_edge_selector,
)

EDGE = ((0, 0), (1, 0))


def square():
    """Four edges around the unit plaquette."""
    return discretize_box((0.5, 0.5), 2.0, 1.0, Direction.axis(1, 2))


def strip(H=1.1):
    return discretize_box((0.0, 0.5), 3.0, H, Direction.axis(1, 2))


class SingleEdgeTests(SimpleTestCase):

    def test_free_boundary(self):
        couplings = CouplingField.constant([EDGE], 1.0)
        for beta in (0.3, 1.0, 2.5):
            for q in (1.0, 2.0, 3.5):
                measure = exact_measure([EDGE], couplings, beta, q, BoundaryCondition.free())
                p = edge_prob(1.0, beta)
                self.assertAlmostEqual(measure.edge_marginals()[0], p / (p + q * (1 - p)), places=12)

    def test_wired_boundary(self):
        couplings = CouplingField.constant([EDGE], 0.5)
        measure = exact_measure([EDGE], couplings, 2.0, 3.0, BoundaryCondition.wired())
        self.assertAlmostEqual(measure.edge_marginals()[0], edge_prob(0.5, 2.0), places=12)

    def test_zero_coupling_edge_is_closed(self):
        couplings = CouplingField.constant([EDGE], 0.0)
        measure = exact_measure([EDGE], couplings, 1.0, 2.0, BoundaryCondition.free())
        self.assertEqual(measure.probability(BondConfig.from_mask(measure.edges, 1)), 0.0)


class ExactMeasureTests(SimpleTestCase):

    def setUp(self):
        self.region = square()
        self.couplings = sample_couplings(CouplingLaw.uniform(0.2, 1.0), self.region.edges, 4)

    def test_normalized(self):
        for bc in (BoundaryCondition.free(), BoundaryCondition.wired()):
            measure = exact_measure(self.region.edges, self.couplings, 1.3, 2.0, bc)
            self.assertLess(abs(math.fsum(measure.probabilities) - 1.0), 1e-12)
            self.assertEqual(len(measure.table), 16)

    def test_q_one_is_a_product_measure(self):
        measure = exact_measure(self.region.edges, self.couplings, 0.9, 1.0, BoundaryCondition.free())
        expected = [edge_prob(self.couplings[e], 0.9) for e in measure.edges]
        np.testing.assert_allclose(measure.edge_marginals(), expected, atol=1e-12)

    def test_cluster_count_on_plaquette(self):
        edges = self.region.edges
        self.assertEqual(count_clusters(BondConfig.from_mask(edges, 0), BoundaryCondition.free()), 4)
        self.assertEqual(count_clusters(BondConfig.from_mask(edges, 0b1111), BoundaryCondition.free()), 1)
        self.assertEqual(count_clusters(BondConfig.from_mask(edges, 0), BoundaryCondition.wired()), 1)

    def test_explicit_boundary_merges_endpoints(self):
        edges = (EDGE,)
        bc = BoundaryCondition.explicit([((0, 0), (0, 1)), ((0, 1), (1, 1)), ((1, 1), (1, 0))])
        self.assertEqual(count_clusters(BondConfig.from_mask(edges, 0), bc), 1)

    def test_explicit_boundary_may_not_overlap(self):
        bc = BoundaryCondition.explicit([EDGE])
        with self.assertRaises(DomainValidationError):
            count_clusters(BondConfig.from_mask((EDGE,), 0), bc)

    def test_unknown_boundary_kind(self):
        with self.assertRaises(DomainValidationError):
            BoundaryCondition('periodic')

    def test_parameter_checks(self):
        with self.assertRaises(NegativeBeta):
            exact_measure(self.region.edges, self.couplings, -1.0, 2.0, BoundaryCondition.free())
        with self.assertRaises(InvalidParameter):
            exact_measure(self.region.edges, self.couplings, 1.0, 0.5, BoundaryCondition.free())
        with self.assertRaises(TooLarge):
            exact_measure(self.region.edges, self.couplings, 1.0, 2.0, BoundaryCondition.free(), cap=3)

    def test_wired_dominates_free(self):
        free = exact_measure(self.region.edges, self.couplings, 1.1, 2.0, BoundaryCondition.free())
        wired = exact_measure(self.region.edges, self.couplings, 1.1, 2.0, BoundaryCondition.wired())
        self.assertTrue(np.all(wired.edge_marginals() >= free.edge_marginals() - 1e-12))

    def test_log_event_matches_event(self):
        measure = exact_measure(self.region.edges, self.couplings, 1.3, 2.0, BoundaryCondition.wired())
        selector = open_edge_selector(measure, measure.edges[0])
        self.assertAlmostEqual(math.exp(exact_log_event(measure, selector)), exact_event(measure, selector), places=12)
        self.assertEqual(exact_log_event(measure, np.zeros(16, dtype=bool)), -math.inf)

    def test_dump(self):
        measure = exact_measure(self.region.edges, self.couplings, 1.3, 2.0, BoundaryCondition.free())
        with tempfile.TemporaryDirectory() as tmp:
            path = dump_measure_csv(measure, Path(tmp) / 'measure.csv', seed=4, version='1.0.0')
            lines = path.read_text(encoding='utf-8').splitlines()
        self.assertEqual(lines[0], 'seed,method,version,bitmask,weight,probability')
        self.assertEqual(len(lines), 17)
        self.assertTrue(lines[1].startswith('4,exact,1.0.0,0,'))


class ConditionalTests(SimpleTestCase):

    def test_conditional_matches_sliced_table(self):
        region = strip()
        couplings = sample_couplings(CouplingLaw.uniform(0.0, 1.0), region.edges, 8)
        measure = exact_measure(region.edges, couplings, 1.2, 2.0, BoundaryCondition.free())
        fixed = {region.edges[0]: 1, region.edges[3]: 0}
        conditional = exact_conditional(measure, fixed)
        self.assertEqual(conditional.n_edges, region.n_edges - 2)

        selector = np.ones(len(measure.probabilities), dtype=bool)
        for edge, state in fixed.items():
            selector &= open_edge_selector(measure, edge) == bool(state)
        total = exact_event(measure, selector)
        target = conditional.edges[0]
        joint = exact_event(measure, selector & open_edge_selector(measure, target))
        self.assertAlmostEqual(conditional.edge_marginals()[0], joint / total, places=10)

    def test_zero_probability_condition(self):
        edges = square().edges
        couplings = CouplingField.constant(edges, 1.0).with_value(edges[0], 0.0)
        measure = exact_measure(edges, couplings, 1.0, 2.0, BoundaryCondition.free())
        with self.assertRaises(ZeroProbabilityCondition):
            exact_conditional(measure, {edges[0]: 1})

    def test_unknown_fixed_edge(self):
        edges = square().edges
        measure = exact_measure(edges, CouplingField.constant(edges, 1.0), 1.0, 2.0, BoundaryCondition.free())
        with self.assertRaises(DomainValidationError):
            exact_conditional(measure, {((5, 5), (5, 6)): 1})


class FkgPropertyTests(HypothesisTestCase):

    @given(
        beta=st.floats(min_value=0.1, max_value=3.0),
        q=st.sampled_from([1.0, 2.0, 3.0]),
        seed=st.integers(min_value=0, max_value=10**6),
        wired=st.booleans(),
    )
    @settings(max_examples=25, deadline=None)
    def test_open_edges_are_positively_correlated(self, beta, q, seed, wired):
        region = strip()
        couplings = sample_couplings(CouplingLaw.uniform(0.0, 1.0), region.edges, seed)
        bc = BoundaryCondition.wired() if wired else BoundaryCondition.free()
        measure = exact_measure(region.edges, couplings, beta, q, bc)
        a = open_edge_selector(measure, region.edges[0])
        b = open_edge_selector(measure, region.edges[-1])
        joint = exact_event(measure, a & b)
        self.assertGreaterEqual(joint - exact_event(measure, a) * exact_event(measure, b), -1e-12)


class SpinOracleTests(SimpleTestCase):

    def test_plus_boundary_on_all_boundary_region(self):
        region = strip()
        couplings = CouplingField.constant(region.edges, 1.0)
        plus = exact_spin_correlations(region, couplings, 1.0, 'plus')
        np.testing.assert_array_equal(plus.correlations, np.ones(region.n_edges))
        mixed = exact_spin_correlations(region, couplings, 1.0, 'mixed')
        vertical = ((0, 0), (0, 1))
        self.assertEqual(mixed.of(vertical), -1.0)
        self.assertEqual(mixed.of(((-1, 1), (0, 1))), 1.0)

    def test_correlations_agree_with_distribution(self):
        region = strip(1.6)
        couplings = sample_couplings(CouplingLaw.uniform(0.3, 1.0), region.edges, 2)
        correlations = exact_spin_correlations(region, couplings, 0.8, 'mixed')
        sites, spins, probabilities = exact_spin_distribution(region, couplings, 0.8, 'mixed')
        self.assertEqual(set(sites), {(0, 0), (0, 1)})
        i, j = sites.index((0, 0)), sites.index((0, 1))
        expected = float(probabilities @ (spins[:, i] * spins[:, j]))
        self.assertAlmostEqual(correlations.of(((0, 0), (0, 1))), expected, places=12)

    def test_unknown_spin_boundary(self):
        region = strip()
        with self.assertRaises(DomainValidationError):
            exact_spin_correlations(region, CouplingField.constant(region.edges, 1.0), 1.0, 'minus')
