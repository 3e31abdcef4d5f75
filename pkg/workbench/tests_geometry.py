"""
Unit and property tests for lattice geometry: directions, oriented boxes,
the subadditive tiling and interface enumeration.
"""

import itertools
import math

import networkx as nx
import numpy as np
from django.test import SimpleTestCase
from hypothesis import given, settings, strategies as st

from workbench.exceptions import BadFrame, RatioViolation, SizeTooSmall, TooLarge
from workbench.services.geometry import (
    Direction,
    build_rect,
    discretize_box,
    interfaces_enumerate,
    lattice_center,
    region_from_json,
    region_to_json,
    tile_subadditive,
)


def strip(H=1.1):
    """Three columns wide, normal along the second axis."""
    return discretize_box((0.0, 0.5), 3.0, H, Direction.axis(1, 2))


class DirectionTests(SimpleTestCase):

    def test_from_vector_normalizes(self):
        direction = Direction.from_vector([3, 4])
        self.assertAlmostEqual(direction.n[0], 0.6)
        self.assertAlmostEqual(direction.n[1], 0.8)
        self.assertEqual(direction.lattice_vector, (3, 4))

    def test_frame_is_orthonormal_in_3d(self):
        direction = Direction.from_vector([1, 2, 2])
        basis = direction.basis
        np.testing.assert_allclose(basis @ basis.T, np.eye(3), atol=1e-12)

    def test_zero_vector_is_rejected(self):
        with self.assertRaises(BadFrame):
            Direction.from_vector([0, 0])

    def test_non_orthonormal_frame_is_rejected(self):
        with self.assertRaises(BadFrame):
            Direction(n=(1.0, 0.0), frame=((1.0, 0.0),))

    def test_dict_round_trip_keeps_lattice_vector(self):
        direction = Direction.diagonal(2)
        self.assertEqual(Direction.from_dict(direction.to_dict()), direction)

    @given(theta=st.floats(min_value=0.0, max_value=2 * math.pi, allow_nan=False))
    @settings(max_examples=50, deadline=None)
    def test_angle_directions_give_disjoint_boundary_halves(self, theta):
        region = discretize_box((0.0, 0.0), 6.0, 6.0, Direction.from_angle(theta))
        self.assertFalse(region.upper & region.lower)
        self.assertTrue(region.boundary <= set(region.vertices))
        for a, b in region.edges:
            self.assertEqual(sum(abs(x - y) for x, y in zip(a, b)), 1)


class RegionTests(SimpleTestCase):

    def test_strip_edge_counts(self):
        self.assertEqual(strip(1.1).n_edges, 7)
        self.assertEqual(strip(1.6).n_edges, 17)

    def test_strip_boundary_split(self):
        region = strip()
        self.assertEqual(region.upper, frozenset({(-1, 1), (0, 1), (1, 1)}))
        self.assertEqual(region.lower, frozenset({(-1, 0), (0, 0), (1, 0)}))

    def test_tall_strip_has_interior_sites(self):
        self.assertEqual(set(strip(1.6).interior), {(0, 0), (0, 1)})

    def test_build_rect_rejects_small_boxes(self):
        with self.assertRaises(SizeTooSmall):
            build_rect((0.0, 0.0), 2.0, 6.0, Direction.axis(1, 2))

    def test_build_rect_area(self):
        region = build_rect((0.0, 0.0, 0.0), 4.0, 4.0, Direction.axis(2, 3))
        self.assertEqual(region.area, 16.0)

    def test_lattice_center_gives_n_columns(self):
        self.assertEqual(lattice_center(4, 2), (0.5, 0.5))
        self.assertEqual(lattice_center(5, 3), (0.0, 0.0, 0.0))
        region = build_rect(lattice_center(8, 2), 8.0, 4.0, Direction.axis(1, 2))
        self.assertEqual(len({v[0] for v in region.vertices}), 8)

    def test_json_round_trip(self):
        region = strip()
        again = region_from_json(region_to_json(region), check_size=False)
        self.assertEqual(again.edges, region.edges)
        self.assertEqual(again.upper, region.upper)

    def test_contains_points_is_closed(self):
        region = strip()
        self.assertTrue(region.contains_points([(1.5, 0.5)])[0])
        self.assertFalse(region.contains_points([(1.6, 0.5)])[0])


class InterfaceTests(SimpleTestCase):

    def test_strip_has_one_interface_of_vertical_edges(self):
        interfaces = interfaces_enumerate(strip())
        self.assertEqual(len(interfaces), 1)
        self.assertEqual(interfaces[0], frozenset({
            ((-1, 0), (-1, 1)), ((0, 0), (0, 1)), ((1, 0), (1, 1)),
        }))

    def test_interfaces_are_minimal_in_tall_strip(self):
        interfaces = interfaces_enumerate(strip(1.6))
        self.assertTrue(interfaces)
        for first in interfaces:
            for second in interfaces:
                if first is not second:
                    self.assertFalse(first < second)
        self.assertEqual(min(len(cut) for cut in interfaces), 3)

    def test_enumeration_cap(self):
        with self.assertRaises(TooLarge):
            interfaces_enumerate(strip(), cap=5)


class TilingTests(SimpleTestCase):

    def test_ratio_violation(self):
        with self.assertRaises(RatioViolation):
            tile_subadditive(10.0, 3.0, 3.0, Direction.axis(1, 2))

    def test_small_tiles_rejected(self):
        with self.assertRaises(SizeTooSmall):
            tile_subadditive(40.0, 3.0, 2.0, Direction.axis(1, 2))

    def test_tiles_are_disjoint_and_cover_at_most_the_base(self):
        tiling = tile_subadditive(40.0, 3.0, 3.0, Direction.axis(1, 2))
        self.assertGreater(tiling.count, 0)
        self.assertLessEqual(tiling.covered_fraction, 1.0)
        seen = set()
        for tile in tiling.tiles:
            self.assertFalse(seen & set(tile.vertices))
            seen |= set(tile.vertices)


# ============================================================================
# Brute-force cross-checks
# ============================================================================

def separates(region, closed):
    """Whether closing ``closed`` leaves no open path from upper to lower."""
    graph = nx.Graph()
    graph.add_nodes_from(region.vertices)
    graph.add_edges_from(edge for edge in region.edges if edge not in closed)
    graph.add_edges_from(('top', v) for v in region.upper)
    graph.add_edges_from(('bottom', v) for v in region.lower)
    return not nx.has_path(graph, 'top', 'bottom')


def minimal_separating_sets(region):
    """Every minimal separating edge set, by increasing subset size."""
    found = []
    for size in range(region.n_edges + 1):
        for subset in itertools.combinations(region.edges, size):
            closed = frozenset(subset)
            if any(cut <= closed for cut in found):
                continue
            if separates(region, closed):
                found.append(closed)
    return found


def block():
    """Two columns by three rows."""
    return discretize_box((0.5, 0.0), 2.0, 1.5, Direction.axis(1, 2))


class DiagonalBoxTests(SimpleTestCase):

    def test_vertices_match_point_in_box_count(self):
        region = build_rect((0.0, 0.0), 6.0, 3.0, Direction.from_vector([1, 1]))
        # |(x, y).u| < 3 and |(x, y).n| < 3 with u, n = (1, -1)/sqrt2, (1, 1)/sqrt2
        expected = {
            (x, y)
            for x in range(-12, 13)
            for y in range(-12, 13)
            if (x - y) ** 2 < 18 and (x + y) ** 2 < 18
        }
        self.assertEqual(len(region.vertices), len(expected))
        self.assertEqual(set(region.vertices), expected)
        self.assertEqual(region.upper, frozenset(v for v in region.boundary if v[0] + v[1] >= 0))


class TilingIndexScanTests(SimpleTestCase):

    def test_count_matches_index_scan(self):
        L, H, l = 120.0, 4.0, 10.0
        tiling = tile_subadditive(L, H, l, Direction.axis(1, 2))
        spacing = l + math.sqrt(2)
        parent_half_height = H + math.sqrt(2) / 2
        expected = []
        for i in range(-100, 101):
            center_x = math.floor(spacing * i + 0.5)
            if abs(center_x) + l / 2 <= L / 2 and H <= parent_half_height:
                expected.append((i,))
        self.assertEqual(tiling.count, len(expected))
        self.assertEqual(list(tiling.indices), expected)
        self.assertEqual(tiling.count, 9)
        parent = set(tiling.parent.vertices)
        for tile in tiling.tiles:
            self.assertTrue(set(tile.vertices) <= parent)
        self.assertLessEqual(tiling.covered_fraction, 1.0)

    def test_base_too_short_for_tile_side(self):
        with self.assertRaises(RatioViolation):
            tile_subadditive(30.0, 4.0, 10.0, Direction.axis(1, 2))


class InterfaceOracleTests(SimpleTestCase):

    def test_block_interfaces_match_exhaustive_search(self):
        region = block()
        self.assertEqual(len(region.vertices), 6)
        interfaces = interfaces_enumerate(region)
        self.assertEqual(set(interfaces), set(minimal_separating_sets(region)))

    def test_each_reopened_edge_reconnects(self):
        for region in (block(), strip(), strip(1.6)):
            for cut in interfaces_enumerate(region):
                self.assertTrue(separates(region, cut))
                for edge in cut:
                    self.assertFalse(separates(region, cut - {edge}))

    def test_single_column_has_one_interface(self):
        # every site of a one-wide column is a boundary site; height 0 is upper
        region = discretize_box((0.0, 0.0), 0.9, 1.5, Direction.axis(1, 2))
        self.assertEqual(region.vertices, ((0, -1), (0, 0), (0, 1)))
        self.assertEqual(region.upper, frozenset({(0, 0), (0, 1)}))
        self.assertEqual(region.lower, frozenset({(0, -1)}))
        interfaces = interfaces_enumerate(region)
        self.assertEqual(interfaces, [frozenset({((0, -1), (0, 0))})])
        self.assertEqual(set(interfaces), set(minimal_separating_sets(region)))
