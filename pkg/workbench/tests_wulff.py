"""
Tests for the Wulff construction, surface energies and tension tables.
"""

import math
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase
from hypothesis import given, settings, strategies as st
from hypothesis.extra.django import TestCase as HypothesisTestCase
from shapely.geometry import Polygon

from workbench.exceptions import DegenerateTension, DomainValidationError, NonSimplePolytope
from workbench.services.wulff import (
    TensionFunction,
    cube_residual,
    diam_inf,
    direction_grid,
    export_svg,
    export_tension_csv,
    export_vertices_csv,
    is_convex_shape,
    load_tension_csv,
    reciprocity_check,
    surface_energy,
    wulff_construct,
)


class DirectionGridTests(SimpleTestCase):

    def test_two_dimensional_grid(self):
        grid = direction_grid(2, 8)
        self.assertEqual(grid.shape, (8, 2))
        np.testing.assert_allclose(np.linalg.norm(grid, axis=1), 1.0)

    def test_octahedron_grid(self):
        self.assertEqual(len(direction_grid(3)), 4 * 6 ** 2 + 2)
        self.assertEqual(len(direction_grid(3, 1)), 6)

    def test_unsupported_dimension(self):
        with self.assertRaises(DomainValidationError):
            direction_grid(4)


class TensionFunctionTests(SimpleTestCase):

    def test_antipodal_values_are_averaged(self):
        tau = TensionFunction(directions=np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0]]),
                              values=np.array([1.0, 3.0, 2.0]))
        self.assertEqual(len(tau), 4)
        self.assertAlmostEqual(tau.evaluate([1.0, 0.0]), 2.0)
        self.assertAlmostEqual(tau.evaluate([-1.0, 0.0]), 2.0)
        self.assertAlmostEqual(tau.evaluate([0.0, -1.0]), 2.0)

    def test_off_grid_value_is_the_support_function(self):
        tau = TensionFunction.l1(2, size=4)
        diagonal = np.array([1.0, 1.0]) / math.sqrt(2.0)
        self.assertAlmostEqual(tau.evaluate(diagonal), math.sqrt(2.0), places=9)

    def test_rejects_negative_values(self):
        with self.assertRaises(DomainValidationError):
            TensionFunction(directions=np.eye(2), values=np.array([1.0, -1.0]))

    def test_octant_completion(self):
        tau = TensionFunction.from_octant([[1.0, 0.0], [1.0, 1.0]], [1.0, 1.5])
        self.assertEqual(len(tau), 8)
        self.assertAlmostEqual(tau.evaluate([-1.0, 1.0]), 1.5)


class WulffConstructTests(SimpleTestCase):

    def test_l1_tension_gives_the_unit_square(self):
        shape = wulff_construct(TensionFunction.l1(2))
        self.assertAlmostEqual(shape.volume, 1.0, places=9)
        self.assertLess(cube_residual(shape), 1e-9)
        self.assertEqual(len(shape.vertices), 4)

    def test_l1_tension_gives_the_unit_cube(self):
        shape = wulff_construct(TensionFunction.l1(3, size=2))
        self.assertAlmostEqual(shape.volume, 1.0, places=9)
        self.assertLess(cube_residual(shape), 1e-9)
        self.assertEqual(len(shape.vertices), 8)

    def test_isotropic_crystal_is_nearly_round(self):
        shape = wulff_construct(TensionFunction.isotropic(2, size=256))
        radii = np.linalg.norm(shape.vertices, axis=1)
        self.assertLess(radii.max() / radii.min(), 1.001)
        self.assertAlmostEqual(radii.mean(), 1.0 / math.sqrt(math.pi), places=3)

    def test_reciprocity_and_convexity(self):
        tau = TensionFunction.from_function(lambda n: 1.0 + 0.3 * abs(n[0] * n[1]), 2, size=48)
        shape = wulff_construct(tau)
        self.assertGreaterEqual(reciprocity_check(tau, shape), -1e-9)
        self.assertTrue(is_convex_shape(shape))

    def test_vanishing_tension_is_degenerate(self):
        tau = TensionFunction(directions=np.eye(2), values=np.array([0.0, 1.0]))
        with self.assertRaises(DegenerateTension):
            wulff_construct(tau)

    def test_one_direction_is_unbounded(self):
        tau = TensionFunction(directions=np.array([[1.0, 0.0]]), values=np.array([1.0]))
        with self.assertRaises(DegenerateTension):
            wulff_construct(tau)


class WulffMinimizerPropertyTests(HypothesisTestCase):

    @given(
        a=st.floats(min_value=0.5, max_value=2.0),
        b=st.floats(min_value=0.5, max_value=2.0),
        angle=st.floats(min_value=0.0, max_value=math.pi),
    )
    @settings(max_examples=40, deadline=None)
    def test_unit_area_rectangles_never_beat_the_crystal(self, a, b, angle):
        tau = TensionFunction.from_function(lambda n: abs(n[0]) + 0.5 * abs(n[1]) + 0.2, 2, size=64)
        shape = wulff_construct(tau)
        crystal_energy = surface_energy(shape.vertices, tau)

        side = math.sqrt(a / b)
        rectangle = np.array([[-side, -1 / side], [side, -1 / side], [side, 1 / side], [-side, 1 / side]]) / 2
        rotation = np.array([[math.cos(angle), -math.sin(angle)], [math.sin(angle), math.cos(angle)]])
        self.assertGreaterEqual(surface_energy(rectangle @ rotation.T, tau), crystal_energy - 1e-9)


class SurfaceEnergyTests(SimpleTestCase):

    def test_unit_square_under_isotropic_tension(self):
        tau = TensionFunction.isotropic(2, size=4)
        square = [[0, 0], [1, 0], [1, 1], [0, 1]]
        self.assertAlmostEqual(surface_energy(square, tau), 4.0, places=12)
        self.assertAlmostEqual(surface_energy(Polygon(square), tau), 4.0, places=12)

    def test_orientation_does_not_matter(self):
        tau = TensionFunction.l1(2, size=8)
        square = [[0, 0], [1, 0], [1, 1], [0, 1]]
        self.assertAlmostEqual(surface_energy(square[::-1], tau), surface_energy(square, tau), places=12)

    def test_bow_tie_rejected(self):
        tau = TensionFunction.isotropic(2, size=8)
        with self.assertRaises(NonSimplePolytope):
            surface_energy([[0, 0], [1, 1], [1, 0], [0, 1]], tau)

    def test_cube_energy(self):
        tau = TensionFunction.l1(3, size=2)
        cube = [[x, y, z] for x in (0, 1) for y in (0, 1) for z in (0, 1)]
        self.assertAlmostEqual(surface_energy(cube, tau), 6.0, places=9)

    def test_non_convex_polyhedron_rejected(self):
        tau = TensionFunction.l1(3, size=2)
        cube = [[x, y, z] for x in (0, 1) for y in (0, 1) for z in (0, 1)]
        with self.assertRaises(NonSimplePolytope):
            surface_energy(cube + [[0.5, 0.5, 0.5]], tau)


class DiameterTests(SimpleTestCase):

    def test_unit_square_just_fits(self):
        shape = wulff_construct(TensionFunction.l1(2))
        self.assertAlmostEqual(diam_inf(shape).diameter, 1.0, places=9)

    def test_translate_box(self):
        shape = wulff_construct(TensionFunction.l1(2))
        report = diam_inf(shape, alpha=0.5)
        self.assertTrue(report.fits)
        np.testing.assert_allclose(report.translate_low, [0.25, 0.25], atol=1e-9)
        np.testing.assert_allclose(report.translate_high, [0.75, 0.75], atol=1e-9)
        self.assertFalse(diam_inf(shape, alpha=1.5).fits)


class ExportTests(SimpleTestCase):

    def test_tension_table_round_trip_and_exports(self):
        tau = TensionFunction.l1(2, size=16)
        shape = wulff_construct(tau)
        with tempfile.TemporaryDirectory() as tmp:
            table = export_tension_csv(tau, Path(tmp) / 'tau.csv', version='1.0.0', seed=7)
            self.assertEqual(table['rows'], len(tau))
            lines = table['path'].read_text(encoding='utf-8').splitlines()
            self.assertEqual(lines[0], 'seed,method,version,n,tau')
            for line in lines[1:]:
                self.assertTrue(line.startswith('7,tension-table,1.0.0,'))
            again = load_tension_csv(table['path'])
            np.testing.assert_allclose(again.values, tau.values)
            np.testing.assert_allclose(again.directions, tau.directions)

            vertices = export_vertices_csv(shape, Path(tmp) / 'wulff_vertices.csv', '1.0.0', seed=4)
            lines = vertices['path'].read_text(encoding='utf-8').splitlines()
            self.assertEqual(lines[0], 'seed,method,version,index,x,y')
            self.assertEqual(len(lines), 1 + len(shape.vertices))
            self.assertTrue(lines[1].startswith('4,wulff,1.0.0,0,'))
            self.assertEqual(len(vertices['sha256']), 64)

            svg = export_svg(shape, Path(tmp) / 'wulff.svg').read_text(encoding='utf-8')
            self.assertTrue(svg.startswith('<svg'))

    def test_empty_table(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'empty.csv'
            path.write_text('n,tau\n', encoding='utf-8')
            with self.assertRaises(DomainValidationError):
                load_tension_csv(path)
