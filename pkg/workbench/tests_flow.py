"""
Tests for maximal flows: agreement of the three min-cut oracles, the
direction sweep and the low-temperature link to the exact tension.
"""

import math

from django.test import SimpleTestCase
from hypothesis import given, settings, strategies as st
from hypothesis.extra.django import TestCase as HypothesisTestCase

from workbench.exceptions import InvalidParameter, NotPlanar
from workbench.services.disorder import CouplingField, CouplingLaw, derive_seed, sample_couplings
from workbench.services.flow import (
    brute_force_min_cut,
    dual_path_min_cut,
    durrett_liggett_law,
    flow_direction_sweep,
    flow_replica,
    jmin_gap,
    low_temperature_gap,
    max_flow,
    tension_function_from_sweep,
)
from workbench.services.geometry import Direction, build_rect, discretize_box, lattice_center


def strip(H=1.1):
    return discretize_box((0.0, 0.5), 3.0, H, Direction.axis(1, 2))


class MinCutTests(SimpleTestCase):

    def test_constant_capacity_axis_box(self):
        region = build_rect(lattice_center(8, 2), 8.0, 8.0, Direction.axis(1, 2))
        result = max_flow(region, CouplingField.constant(region.edges, 1.0))
        self.assertAlmostEqual(result.value, 8.0, places=9)
        self.assertAlmostEqual(result.mu, 1.0, places=9)
        self.assertEqual(len(result.cut), 8)

    def test_strip_cut_is_the_vertical_edges(self):
        region = strip()
        couplings = sample_couplings(CouplingLaw.uniform(0.1, 1.0), region.edges, 2)
        result = max_flow(region, couplings)
        verticals = {e for e in region.edges if e[0][0] == e[1][0]}
        self.assertEqual(set(result.cut), verticals)
        self.assertAlmostEqual(result.value, math.fsum(couplings[e] for e in verticals), places=9)

    def test_dual_path_needs_two_dimensions(self):
        region = build_rect((0.0, 0.0, 0.0), 4.0, 4.0, Direction.axis(2, 3))
        with self.assertRaises(NotPlanar):
            dual_path_min_cut(region, CouplingField.constant(region.edges, 1.0))

    def test_negative_capacity(self):
        region = strip()
        with self.assertRaises(InvalidParameter):
            max_flow(region, CouplingField.constant(region.edges, -0.5))

    def test_diluted_edges_carry_no_flow(self):
        region = build_rect(lattice_center(6, 2), 6.0, 6.0, Direction.axis(1, 2))
        couplings = CouplingField.constant(region.edges, 0.0)
        self.assertEqual(max_flow(region, couplings).value, 0.0)
        self.assertEqual(dual_path_min_cut(region, couplings).value, 0.0)


class MinCutDualityPropertyTests(HypothesisTestCase):

    @given(
        seed=st.integers(min_value=0, max_value=10**6),
        law=st.sampled_from([
            CouplingLaw.uniform(0.0, 1.0),
            CouplingLaw.dilution('7/10'),
            CouplingLaw.two_point('1/2', 1, '4/5'),
        ]),
    )
    @settings(max_examples=15, deadline=None)
    def test_three_oracles_agree(self, seed, law):
        region = strip(1.6)
        couplings = sample_couplings(law, region.edges, seed)
        value = max_flow(region, couplings).value
        self.assertAlmostEqual(dual_path_min_cut(region, couplings).value, value, delta=1e-9)
        self.assertAlmostEqual(brute_force_min_cut(region, couplings).value, value, delta=1e-9)

    @given(
        seed=st.integers(min_value=0, max_value=10**6),
        theta=st.floats(min_value=0.0, max_value=2 * math.pi),
    )
    @settings(max_examples=15, deadline=None)
    def test_tilted_boxes_agree(self, seed, theta):
        region = build_rect((0.0, 0.0), 10.0, 5.0, Direction.from_angle(theta))
        couplings = sample_couplings(CouplingLaw.uniform(0.0, 1.0), region.edges, seed)
        self.assertAlmostEqual(dual_path_min_cut(region, couplings).value,
                               max_flow(region, couplings).value, delta=1e-9)


class DirectionSweepTests(SimpleTestCase):

    def test_constant_law_gives_unit_axis_flow(self):
        table = flow_direction_sweep(CouplingLaw.constant(1), 32, 1.0, [Direction.axis(1, 2)], replicas=8, seed=3)
        self.assertEqual(len(table), 1)
        for mu in table[0].samples:
            self.assertAlmostEqual(mu, 1.0, places=9)
        self.assertEqual(table[0].seeds, [derive_seed(3, 0, k) for k in range(8)])

        gaps = jmin_gap(table, CouplingLaw.constant(1))
        self.assertAlmostEqual(gaps[0]['gap'], 0.0, places=9)
        self.assertEqual(gaps[0]['floor'], 1.0)

    def test_replica_floor(self):
        with self.assertRaises(InvalidParameter):
            flow_direction_sweep(CouplingLaw.constant(1), 8, 1.0, [Direction.axis(1, 2)], replicas=4)

    def test_dilution_stays_below_full_capacity(self):
        law = durrett_liggett_law()
        self.assertEqual(law.j_min, 0.5)
        axis, diagonal = flow_direction_sweep(law, 12, 1.0, [Direction.axis(1, 2), Direction.diagonal(2)],
                                              replicas=8, seed=1)
        for mu in axis.samples:
            self.assertGreaterEqual(mu, 0.5 - 1e-9)
            self.assertLessEqual(mu, 1.0 + 1e-9)
        self.assertGreater(diagonal.mean, 0.0)
        self.assertEqual(len(diagonal.cut_sizes), 8)

    def test_replica_payload_is_self_contained(self):
        payload = {
            'region': {'center': [0.5, 0.5], 'L': 8.0, 'H': 8.0, 'direction': Direction.axis(1, 2).to_dict()},
            'law': CouplingLaw.constant(1).to_spec(),
            'seed': 5,
            'method': 'dual-path',
        }
        result = flow_replica(payload)
        self.assertEqual(result['seed'], 5)
        self.assertAlmostEqual(result['mu'], 1.0, places=9)
        self.assertEqual(result['cut_size'], 8)

    def test_sweep_as_tension_function(self):
        table = flow_direction_sweep(CouplingLaw.constant(1), 8, 1.0,
                                     [Direction.axis(0, 2), Direction.axis(1, 2)], replicas=8)
        tau = tension_function_from_sweep(table)
        self.assertEqual(len(tau), 4)
        self.assertAlmostEqual(tau.evaluate([0.0, -1.0]), 1.0, places=9)


class LowTemperatureTests(SimpleTestCase):

    def test_strip_tension_over_beta_is_the_min_cut(self):
        region = strip()
        couplings = sample_couplings(CouplingLaw.uniform(0.2, 1.0), region.edges, 12)
        for row in low_temperature_gap(region, couplings, [0.5, 2.0, 8.0]):
            self.assertAlmostEqual(row['gap'], 0.0, places=9)

    def test_gap_shrinks_on_tall_strip(self):
        region = strip(1.6)
        couplings = sample_couplings(CouplingLaw.uniform(0.2, 1.0), region.edges, 12)
        rows = low_temperature_gap(region, couplings, [1.0, 50.0])
        self.assertLess(rows[1]['gap'], rows[0]['gap'])

    def test_beta_ladder_must_be_positive(self):
        region = strip()
        couplings = CouplingField.constant(region.edges, 1.0)
        with self.assertRaises(InvalidParameter):
            low_temperature_gap(region, couplings, [0.0, 1.0])
