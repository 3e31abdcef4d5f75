"""
Wulff crystals of a direction-sampled surface tension.

    W = lambda {x : x.n <= tau(n) for every n of the grid},   Vol(W) = 1

Half-space intersection of the grid constraints (inside a bounding cube),
surface energy of polygonal profiles, and the l-infinity diameter that
decides whether a scaled crystal fits in the unit cube.
"""

import csv
import itertools
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import ConvexHull, HalfspaceIntersection, QhullError
from shapely.geometry import Polygon
from shapely.geometry.polygon import orient

from ..exceptions import DegenerateTension, DomainValidationError, NonSimplePolytope
from .csv_export_service import csv_export_service

logger = logging.getLogger(__name__)

DEFAULT_GRID_2D = 64
DEFAULT_GRID_3D = 6  # octahedron subdivision; 4 f^2 + 2 directions
DIRECTION_DECIMALS = 9
CONSTRAINT_TOLERANCE = 1e-9
BOUNDING_FACTOR = 1e3


def _unit(vectors) -> np.ndarray:
    vectors = np.atleast_2d(np.asarray(vectors, dtype=float))
    norms = np.linalg.norm(vectors, axis=1)
    if np.any(norms == 0):
        raise DomainValidationError("Direction vectors must be nonzero")
    return vectors / norms[:, None]


def direction_grid(d: int, size: Optional[int] = None) -> np.ndarray:
    """
    Default direction grid: ``size`` equally spaced angles in 2D, the
    normalized points of an f-times subdivided octahedron in 3D.
    """
    if d == 2:
        size = DEFAULT_GRID_2D if size is None else size
        angles = 2.0 * np.pi * np.arange(size) / size
        return np.column_stack([np.cos(angles), np.sin(angles)])
    if d == 3:
        f = DEFAULT_GRID_3D if size is None else size
        points = set()
        for i in range(-f, f + 1):
            for j in range(-(f - abs(i)), f - abs(i) + 1):
                k = f - abs(i) - abs(j)
                points.add((i, j, k))
                points.add((i, j, -k))
        return _unit(sorted(points))
    raise DomainValidationError(f"Direction grids exist for d=2 and d=3, got d={d}")


@dataclass(frozen=True, eq=False)
class TensionFunction:
    """
    tau sampled on a direction grid, completed under n -> -n (values of
    antipodal pairs are averaged). Off the grid tau is the support
    function of the crystal it generates.
    """

    directions: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        directions = _unit(self.directions)
        values = np.asarray(self.values, dtype=float).reshape(-1)
        if len(values) != len(directions):
            raise DomainValidationError(f"{len(directions)} directions but {len(values)} values")
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise DomainValidationError("Surface tension values must be finite and nonnegative")

        sums: Dict[Tuple[float, ...], float] = {}
        counts: Dict[Tuple[float, ...], int] = {}
        for n, value in zip(np.vstack([directions, -directions]), np.concatenate([values, values])):
            key = tuple(np.round(n, DIRECTION_DECIMALS) + 0.0)
            sums[key] = sums.get(key, 0.0) + value
            counts[key] = counts.get(key, 0) + 1
        keys = sorted(sums)
        object.__setattr__(self, 'directions', _unit(keys))
        object.__setattr__(self, 'values', np.array([sums[k] / counts[k] for k in keys]))

    @property
    def d(self) -> int:
        return self.directions.shape[1]

    def __len__(self):
        return len(self.values)

    @classmethod
    def from_function(cls, function: Callable[[np.ndarray], float], d: int,
                      size: Optional[int] = None) -> 'TensionFunction':
        grid = direction_grid(d, size)
        return cls(directions=grid, values=np.array([function(n) for n in grid]))

    @classmethod
    def isotropic(cls, d: int, c: float = 1.0, size: Optional[int] = None) -> 'TensionFunction':
        return cls.from_function(lambda n: c, d, size)

    @classmethod
    def l1(cls, d: int, size: Optional[int] = None) -> 'TensionFunction':
        return cls.from_function(lambda n: float(np.sum(np.abs(n))), d, size)

    @classmethod
    def from_octant(cls, directions, values) -> 'TensionFunction':
        """Complete samples from one symmetry sector under all signed axis permutations."""
        directions = _unit(directions)
        d = directions.shape[1]
        full_n, full_v = [], []
        for perm in itertools.permutations(range(d)):
            for signs in itertools.product((1.0, -1.0), repeat=d):
                full_n.append(directions[:, perm] * np.asarray(signs))
                full_v.append(np.asarray(values, dtype=float))
        return cls(directions=np.vstack(full_n), values=np.concatenate(full_v))

    @cached_property
    def crystal_vertices(self) -> np.ndarray:
        return _intersect(self)

    def evaluate(self, n) -> float:
        """tau(n): the sampled value on grid directions, the crystal support function elsewhere."""
        n = _unit(n)[0]
        cosines = self.directions @ n
        best = int(np.argmax(cosines))
        if cosines[best] >= 1.0 - 1e-12:
            return float(self.values[best])
        return float(np.max(self.crystal_vertices @ n))


@dataclass(frozen=True, eq=False)
class WulffShape:
    vertices: np.ndarray
    raw_vertices: np.ndarray = field(repr=False)
    scale: float
    volume: float
    tau: TensionFunction = field(repr=False)

    @property
    def d(self) -> int:
        return self.vertices.shape[1]


def _intersect(tau: TensionFunction) -> np.ndarray:
    """Vertices of {x : x.n <= tau(n)}, before normalization."""
    d = tau.d
    if np.any(tau.values <= 0):
        raise DegenerateTension(f"tau vanishes on {int(np.sum(tau.values <= 0))} grid directions")
    positive = tau.directions[tau.values > 0]
    if np.linalg.matrix_rank(positive) < d:
        raise DegenerateTension(f"tau is positive on fewer than {d} independent directions")

    bound = BOUNDING_FACTOR * float(np.max(tau.values))
    box = np.vstack([np.eye(d), -np.eye(d)])
    halfspaces = np.vstack([
        np.column_stack([tau.directions, -tau.values]),
        np.column_stack([box, -np.full(2 * d, bound)]),
    ])
    try:
        intersection = HalfspaceIntersection(halfspaces, np.zeros(d))
    except QhullError as e:
        raise DegenerateTension(f"Half-space intersection failed: {e}") from e

    points = np.unique(np.round(intersection.intersections, 12), axis=0)
    if np.any(np.abs(points) >= bound * (1.0 - 1e-9)):
        raise DegenerateTension("Half-space intersection is unbounded over the direction grid")
    hull = ConvexHull(points)
    vertices = points[hull.vertices]
    if d == 2:
        # ConvexHull orders 2D vertices counterclockwise
        return vertices
    return vertices[np.lexsort(vertices.T[::-1])]


def wulff_construct(tau: TensionFunction) -> WulffShape:
    """
    The Wulff crystal of tau rescaled to unit volume.

    Raises:
        DegenerateTension: if the intersection is unbounded or flat.
    """
    raw = tau.crystal_vertices
    raw_volume = ConvexHull(raw).volume
    scale = raw_volume ** (-1.0 / tau.d)
    vertices = scale * raw
    volume = ConvexHull(vertices).volume
    logger.info(f"Wulff crystal in d={tau.d} from {len(tau)} directions: "
                f"{len(vertices)} vertices, scale {scale:.6f}")
    return WulffShape(vertices=vertices, raw_vertices=raw, scale=scale, volume=volume, tau=tau)


def reciprocity_check(tau: TensionFunction, shape: WulffShape) -> float:
    """
    max over grid directions of (tau(n) - sup_{x in W} x.n) / tau(n) on the
    unnormalized crystal; never below zero up to rounding.
    """
    support = np.max(tau.directions @ shape.raw_vertices.T, axis=1)
    return float(np.max((tau.values - support) / tau.values))


def cube_residual(shape: WulffShape) -> float:
    """l-infinity distance of the bounding box of the crystal from [-1/2, 1/2]^d."""
    return float(max(np.max(np.abs(shape.vertices.max(axis=0) - 0.5)),
                     np.max(np.abs(shape.vertices.min(axis=0) + 0.5))))


def is_convex_shape(shape: WulffShape) -> bool:
    """Every vertex satisfies every grid constraint."""
    support = shape.raw_vertices @ shape.tau.directions.T
    return bool(np.all(support <= shape.tau.values[None, :] + CONSTRAINT_TOLERANCE))


def _polygon_energy(vertices: np.ndarray, tau: TensionFunction) -> float:
    polygon = Polygon(vertices)
    if not polygon.is_valid or not polygon.exterior.is_simple or polygon.area <= 0:
        raise NonSimplePolytope(f"Profile with {len(vertices)} vertices is not a simple polygon")
    ring = np.asarray(orient(polygon, sign=1.0).exterior.coords)
    energy = []
    for (x0, y0), (x1, y1) in zip(ring[:-1], ring[1:]):
        length = math.hypot(x1 - x0, y1 - y0)
        if length == 0:
            continue
        normal = np.array([y1 - y0, x0 - x1]) / length
        energy.append(length * tau.evaluate(normal))
    return math.fsum(energy)


def _polytope_energy(vertices: np.ndarray, tau: TensionFunction) -> float:
    try:
        hull = ConvexHull(vertices)
    except QhullError as e:
        raise NonSimplePolytope(f"Profile has no three-dimensional hull: {e}") from e
    if len(hull.vertices) != len(np.unique(np.round(vertices, 12), axis=0)):
        raise NonSimplePolytope("Polyhedral profiles must be convex with every point a vertex")
    energy = []
    for simplex, equation in zip(hull.simplices, hull.equations):
        a, b, c = hull.points[simplex]
        area = 0.5 * float(np.linalg.norm(np.cross(b - a, c - a)))
        energy.append(area * tau.evaluate(equation[:3]))
    return math.fsum(energy)


def surface_energy(profile, tau: TensionFunction) -> float:
    """
    F(U) = sum over faces of |face| tau(outward normal).

    Args:
        profile: 2D vertex ring (or shapely Polygon) of a simple polygon, or
            the vertices of a convex polyhedron in 3D.
        tau: Surface tension on the matching dimension.

    Raises:
        NonSimplePolytope: if the profile is not simple (2D) or not convex (3D).
    """
    if isinstance(profile, Polygon):
        profile = np.asarray(profile.exterior.coords)[:-1]
    vertices = np.asarray(profile, dtype=float)
    if vertices.ndim != 2 or vertices.shape[1] != tau.d:
        raise DomainValidationError(f"Profile of shape {vertices.shape} does not match d={tau.d}")
    if tau.d == 2:
        return _polygon_energy(vertices, tau)
    return _polytope_energy(vertices, tau)


@dataclass(frozen=True)
class FitReport:
    diameter: float
    alpha: Optional[float]
    translate_low: Optional[Tuple[float, ...]]
    translate_high: Optional[Tuple[float, ...]]

    @property
    def fits(self) -> bool:
        if self.alpha is None:
            return self.diameter <= 1.0
        return all(lo <= hi for lo, hi in zip(self.translate_low, self.translate_high))


def diam_inf(shape, alpha: Optional[float] = None) -> FitReport:
    """
    l-infinity diameter of a convex shape and, for a scale alpha, the box of
    translates z with z + alpha W inside [0, 1]^d.
    """
    vertices = shape.vertices if isinstance(shape, WulffShape) else np.asarray(shape, dtype=float)
    low, high = vertices.min(axis=0), vertices.max(axis=0)
    diameter = float(np.max(high - low))
    if alpha is None:
        return FitReport(diameter=diameter, alpha=None, translate_low=None, translate_high=None)
    return FitReport(
        diameter=diameter,
        alpha=float(alpha),
        translate_low=tuple(float(c) for c in -alpha * low),
        translate_high=tuple(float(c) for c in 1.0 - alpha * high),
    )


def export_vertices_csv(shape: WulffShape, path, version: str, seed=None) -> Dict:
    axes = 'xyz'[:shape.d]
    rows = ({'seed': seed, 'index': k, **dict(zip(axes, vertex))} for k, vertex in enumerate(shape.vertices))
    info = csv_export_service.write_rows(path, rows, version, fields=['index', *axes], method='wulff')
    logger.info(f"Wrote {info['rows']} crystal vertices to {info['path']}")
    return info


def export_svg(shape: WulffShape, path, size: int = 400) -> Path:
    """Outline of a 2D crystal as a standalone SVG document."""
    if shape.d != 2:
        raise DomainValidationError("SVG export is only available for two-dimensional crystals")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    polygon = Polygon(shape.vertices)
    minx, miny, maxx, maxy = polygon.bounds
    pad = 0.05 * max(maxx - minx, maxy - miny)
    view = f"{minx - pad} {miny - pad} {maxx - minx + 2 * pad} {maxy - miny + 2 * pad}"
    body = polygon.svg(scale_factor=0.01, fill_color='#9ecae1')
    path.write_text(
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="{view}">'
        f'<g transform="scale(1,-1) translate(0,{-(miny + maxy)})">{body}</g></svg>\n',
        encoding='utf-8',
    )
    return path


def export_tension_csv(tau: TensionFunction, path, version: str, seed=None) -> Dict:
    """Tension table with columns n (space-separated components) and tau."""
    rows = ({'seed': seed, 'n': n, 'tau': value} for n, value in zip(tau.directions, tau.values))
    return csv_export_service.write_rows(path, rows, version, fields=['n', 'tau'], method='tension-table')


def load_tension_csv(path) -> TensionFunction:
    """Read a table with columns n (space-separated components) and tau."""
    directions, values = [], []
    with Path(path).open(newline='', encoding='utf-8') as fh:
        for row in csv.DictReader(fh):
            directions.append([float(c) for c in row['n'].split()])
            values.append(float(row['tau']))
    if not directions:
        raise DomainValidationError(f"No tension samples in {path}")
    return TensionFunction(directions=np.array(directions), values=np.array(values))
