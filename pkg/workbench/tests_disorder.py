"""
Tests for coupling laws, counter-based coupling fields and edge probabilities.
"""

import math
import tempfile
from fractions import Fraction
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase
from hypothesis import given, settings, strategies as st
from hypothesis.extra.django import TestCase as HypothesisTestCase

from workbench.exceptions import InvalidCouplingLaw, NegativeBeta, ProvenanceMismatch
from workbench.services.disorder import (
    CouplingLaw,
    derive_seed,
    edge_prob,
    edge_probs,
    export_couplings_csv,
    import_couplings_csv,
    sample_couplings,
)
from workbench.services.geometry import Direction, discretize_box


def square_edges(n=6):
    return discretize_box((0.5, 0.5), float(n), n / 2.0, Direction.axis(1, 2)).edges


# ============================================================================
# Coupling laws
# ============================================================================

class CouplingLawTests(SimpleTestCase):

    def test_dilution_atoms(self):
        law = CouplingLaw.dilution(0.7)
        self.assertEqual(law.exact_support(), [(Fraction(1), Fraction(7, 10)), (Fraction(0), Fraction(3, 10))])
        self.assertEqual(law.j_min, 0.0)
        self.assertEqual(law.j_max, 1.0)
        self.assertAlmostEqual(law.mean, 0.7)

    def test_two_point_accepts_fraction_strings(self):
        law = CouplingLaw.parse({'kind': 'two-point', 'a': '1/2', 'b': 1, 'p': '4/5'})
        self.assertEqual(law.atoms, (Fraction(1, 2), Fraction(1)))
        self.assertEqual(law.weights, (Fraction(4, 5), Fraction(1, 5)))
        self.assertAlmostEqual(law.mean, 0.6)

    def test_zero_weight_atoms_leave_the_support(self):
        law = CouplingLaw.two_point(0.25, 1, 1)
        self.assertEqual(law.j_max, 0.25)
        self.assertEqual(law.support(), [(0.25, 1.0)])

    def test_parse_rejects_wrong_keys(self):
        with self.assertRaises(InvalidCouplingLaw):
            CouplingLaw.parse({'kind': 'dilution', 'q': 0.5})
        with self.assertRaises(InvalidCouplingLaw):
            CouplingLaw.parse({'kind': 'gaussian'})

    def test_values_outside_unit_interval_rejected(self):
        with self.assertRaises(InvalidCouplingLaw):
            CouplingLaw.constant(1.5)
        with self.assertRaises(InvalidCouplingLaw):
            CouplingLaw.dilution(-0.1)
        with self.assertRaises(InvalidCouplingLaw):
            CouplingLaw.uniform(0.5, 0.2)

    def test_spec_round_trip(self):
        for law in (CouplingLaw.constant(1), CouplingLaw.dilution('7/10'),
                    CouplingLaw.two_point('1/2', 1, '4/5'), CouplingLaw.uniform(0.1, 0.9)):
            self.assertEqual(CouplingLaw.parse(law.to_spec()), law)

    def test_quantile_hits_atoms(self):
        law = CouplingLaw.dilution('1/2')
        values = law.quantile(np.array([0.0, 0.49, 0.5, 0.99]))
        np.testing.assert_array_equal(values, [1.0, 1.0, 0.0, 0.0])


# ============================================================================
# Edge probabilities
# ============================================================================

class EdgeProbTests(SimpleTestCase):

    def test_known_values(self):
        self.assertEqual(edge_prob(0.0, 2.0), 0.0)
        self.assertEqual(edge_prob(1.0, 0.0), 0.0)
        self.assertAlmostEqual(edge_prob(1.0, 1.0), 1.0 - math.exp(-1.0), places=15)

    def test_negative_beta(self):
        with self.assertRaises(NegativeBeta):
            edge_prob(0.5, -0.1)
        with self.assertRaises(NegativeBeta):
            edge_probs(np.array([0.5]), -1.0)

    def test_coupling_outside_unit_interval(self):
        with self.assertRaises(InvalidCouplingLaw):
            edge_prob(1.2, 1.0)

    def test_vectorized_matches_scalar(self):
        values = np.linspace(0.0, 1.0, 11)
        expected = [edge_prob(v, 0.8) for v in values]
        np.testing.assert_allclose(edge_probs(values, 0.8), expected, rtol=0, atol=1e-15)


class EdgeProbPropertyTests(HypothesisTestCase):

    @given(
        j=st.floats(min_value=0.0, max_value=1.0),
        beta=st.floats(min_value=0.0, max_value=10.0),
        bump=st.floats(min_value=0.0, max_value=1.0),
    )
    @settings(max_examples=100, deadline=None)
    def test_monotone_in_coupling_and_beta(self, j, beta, bump):
        p = edge_prob(j, beta)
        self.assertGreaterEqual(p, 0.0)
        self.assertLess(p, 1.0 + 1e-15)
        self.assertGreaterEqual(edge_prob(min(1.0, j + bump), beta), p)
        self.assertGreaterEqual(edge_prob(j, beta + bump), p)


# ============================================================================
# Coupling fields
# ============================================================================

class SampleCouplingsTests(SimpleTestCase):

    def test_same_seed_same_field(self):
        law = CouplingLaw.uniform(0.0, 1.0)
        edges = square_edges()
        first = sample_couplings(law, edges, 11)
        second = sample_couplings(law, edges, 11)
        self.assertEqual(first.checksum(), second.checksum())
        self.assertNotEqual(first.checksum(), sample_couplings(law, edges, 12).checksum())

    def test_values_do_not_depend_on_edge_order_or_subset(self):
        law = CouplingLaw.two_point('1/2', 1, '1/2')
        edges = list(square_edges())
        full = sample_couplings(law, edges, 5)
        part = sample_couplings(law, list(reversed(edges[::3])), 5)
        for edge in part.edges:
            self.assertEqual(part[edge], full[edge])

    def test_values_lie_in_support(self):
        field = sample_couplings(CouplingLaw.dilution('7/10'), square_edges(), 3)
        self.assertTrue(set(field.values.values()) <= {0.0, 1.0})
        self.assertEqual(field.law, CouplingLaw.dilution('7/10'))
        self.assertEqual(field.seed, 3)

    def test_dilution_frequency(self):
        edges = square_edges(30)
        field = sample_couplings(CouplingLaw.dilution('7/10'), edges, 17)
        share = float(np.mean(field.array(field.edges)))
        self.assertAlmostEqual(share, 0.7, delta=0.05)

    def test_with_value_and_scaled_drop_the_law(self):
        field = sample_couplings(CouplingLaw.constant('1/2'), square_edges(), 0)
        edge = field.edges[0]
        self.assertIsNone(field.with_value(edge, 1.0).law)
        self.assertEqual(field.with_value(edge, 1.0)[edge], 1.0)
        self.assertEqual(field.scaled(2.0)[edge], 1.0)


class DeriveSeedTests(SimpleTestCase):

    def test_deterministic_and_distinct(self):
        self.assertEqual(derive_seed(7, 1, 2), derive_seed(7, 1, 2))
        seeds = {derive_seed(7, k) for k in range(100)}
        self.assertEqual(len(seeds), 100)
        self.assertTrue(all(0 <= s < 2**63 for s in seeds))


class CouplingCsvTests(SimpleTestCase):

    def test_export_then_import_with_law(self):
        law = CouplingLaw.dilution('7/10')
        field = sample_couplings(law, square_edges(), 21)
        with tempfile.TemporaryDirectory() as tmp:
            path = export_couplings_csv(field, Path(tmp) / 'J.csv', version='1.0.0')
            header = path.read_text(encoding='utf-8').splitlines()[0]
            self.assertEqual(header, 'seed,method,version,law,u,v,J')
            again = import_couplings_csv(path, law)
        self.assertEqual(again.checksum(), field.checksum())

    def test_import_detects_foreign_law(self):
        field = sample_couplings(CouplingLaw.uniform(0.0, 1.0), square_edges(), 21)
        with tempfile.TemporaryDirectory() as tmp:
            path = export_couplings_csv(field, Path(tmp) / 'J.csv', version='1.0.0')
            with self.assertRaises(ProvenanceMismatch):
                import_couplings_csv(path, CouplingLaw.dilution('7/10'))
