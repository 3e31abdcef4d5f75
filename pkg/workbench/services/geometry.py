"""
Lattice geometry: directions, oriented boxes and their boundary split,
the subadditive tiling of a box by smaller boxes, and exhaustive interface
enumeration on small boxes.
"""

import itertools
import json
import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..exceptions import BadFrame, RatioViolation, SizeTooSmall, TooLarge
from .lattice_graph import (
    Edge,
    Point,
    canonical_edge,
    contract,
    mask_bits,
    mask_chunks,
    batch_labels,
    rows_connecting,
)

logger = logging.getLogger(__name__)

FRAME_TOLERANCE = 1e-12

# Band used for the strict-interior test and the boundary split.
BOUNDARY_TOLERANCE = 1e-9

ENUMERATION_CAP = 22


@dataclass(frozen=True)
class Direction:
    """
    Unit normal ``n`` together with an orthonormal frame (u_1..u_{d-1}) of n's
    orthogonal complement.
    """

    n: Tuple[float, ...]
    frame: Tuple[Tuple[float, ...], ...]
    lattice_vector: Optional[Tuple[int, ...]] = None

    def __post_init__(self):
        d = len(self.n)
        if d not in (2, 3):
            raise BadFrame(f"Only d in {{2, 3}} is supported, got d={d}")
        if len(self.frame) != d - 1 or any(len(u) != d for u in self.frame):
            raise BadFrame(f"Frame must hold {d - 1} vectors of length {d}")
        basis = np.array(list(self.frame) + [self.n], dtype=float)
        if not np.all(np.isfinite(basis)):
            raise BadFrame("Direction contains non-finite entries")
        if abs(np.linalg.norm(basis[-1]) - 1.0) > FRAME_TOLERANCE:
            raise BadFrame(f"|n| = {np.linalg.norm(basis[-1])!r} is not 1")
        gram = basis @ basis.T
        if np.max(np.abs(gram - np.eye(d))) > FRAME_TOLERANCE:
            raise BadFrame("Frame is not orthonormal")

    @property
    def d(self) -> int:
        return len(self.n)

    @property
    def basis(self) -> np.ndarray:
        """Rows u_1..u_{d-1}, n."""
        return np.array(list(self.frame) + [self.n], dtype=float)

    @property
    def normal(self) -> np.ndarray:
        return np.array(self.n, dtype=float)

    @classmethod
    def from_vector(cls, vector: Sequence[float], frame: Optional[Sequence[Sequence[float]]] = None) -> 'Direction':
        """
        Normalize ``vector`` and complete it to a frame.

        Integer vectors are remembered as ``lattice_vector`` so axis and
        diagonal directions regenerate bit-identically from their spec.
        """
        raw = np.asarray(vector, dtype=float)
        norm = float(np.linalg.norm(raw))
        if norm == 0.0 or not np.isfinite(norm):
            raise BadFrame(f"Cannot normalize direction {list(vector)!r}")
        n = raw / norm
        lattice_vector = None
        if all(float(c).is_integer() for c in vector):
            lattice_vector = tuple(int(c) for c in vector)
        if frame is None:
            frame = _complete_frame(n)
        return cls(
            n=tuple(float(c) for c in n),
            frame=tuple(tuple(float(c) for c in u) for u in frame),
            lattice_vector=lattice_vector,
        )

    @classmethod
    def axis(cls, k: int, d: int) -> 'Direction':
        vector = [0] * d
        vector[k] = 1
        return cls.from_vector(vector)

    @classmethod
    def diagonal(cls, d: int) -> 'Direction':
        return cls.from_vector([1] * d)

    @classmethod
    def from_angle(cls, theta: float) -> 'Direction':
        return cls.from_vector([math.cos(theta), math.sin(theta)])

    def with_frame(self, frame: Sequence[Sequence[float]]) -> 'Direction':
        return Direction(
            n=self.n,
            frame=tuple(tuple(float(c) for c in u) for u in frame),
            lattice_vector=self.lattice_vector,
        )

    def to_dict(self) -> Dict:
        data = {'n': list(self.n), 'frame': [list(u) for u in self.frame]}
        if self.lattice_vector is not None:
            data['lattice_vector'] = list(self.lattice_vector)
        return data

    @classmethod
    def from_dict(cls, data: Dict) -> 'Direction':
        if 'lattice_vector' in data:
            return cls.from_vector(data['lattice_vector'], frame=data.get('frame'))
        return cls(
            n=tuple(float(c) for c in data['n']),
            frame=tuple(tuple(float(c) for c in u) for u in data['frame']),
        )


def _complete_frame(n: np.ndarray) -> List[np.ndarray]:
    if len(n) == 2:
        return [np.array([n[1], -n[0]])]
    helper_axis = int(np.argmin(np.abs(n)))
    helper = np.zeros(3)
    helper[helper_axis] = 1.0
    u1 = helper - np.dot(helper, n) * n
    u1 /= np.linalg.norm(u1)
    u2 = np.cross(n, u1)
    return [u1, u2 / np.linalg.norm(u2)]


@dataclass(frozen=True)
class RectRegion:
    """Discretized oriented box R_{x,L,H}(S,n) with its upper/lower boundary split."""

    center: Tuple[float, ...]
    L: float
    H: float
    direction: Direction
    vertices: Tuple[Point, ...]
    edges: Tuple[Edge, ...]
    upper: frozenset
    lower: frozenset

    @property
    def d(self) -> int:
        return len(self.center)

    @property
    def area(self) -> float:
        """Normalization L^{d-1} of surface quantities."""
        return float(self.L) ** (self.d - 1)

    @property
    def boundary(self) -> frozenset:
        return self.upper | self.lower

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @cached_property
    def edge_index(self) -> Dict[Edge, int]:
        return {edge: j for j, edge in enumerate(self.edges)}

    @cached_property
    def interior(self) -> Tuple[Point, ...]:
        boundary = self.boundary
        return tuple(v for v in self.vertices if v not in boundary)

    def frame_coordinates(self, points) -> np.ndarray:
        rel = np.asarray(points, dtype=float) - np.asarray(self.center, dtype=float)
        return rel @ self.direction.basis.T

    def corners(self) -> np.ndarray:
        return box_corners(self.center, self.L, self.H, self.direction)

    def contains_points(self, points, tol: float = BOUNDARY_TOLERANCE) -> np.ndarray:
        """Closed-box membership of continuum points."""
        coords = self.frame_coordinates(np.atleast_2d(points))
        inside = np.all(np.abs(coords[:, :-1]) <= self.L / 2 + tol, axis=1)
        return inside & (np.abs(coords[:, -1]) <= self.H + tol)

    def to_spec(self) -> Dict:
        return {
            'center': list(self.center),
            'L': self.L,
            'H': self.H,
            'n': list(self.direction.n),
            'frame': [list(u) for u in self.direction.frame],
        }

    def __str__(self):
        return (f"R(center={self.center}, L={self.L}, H={self.H}, n={self.direction.n}; "
                f"{len(self.vertices)} vertices, {self.n_edges} edges)")


def box_corners(center, L, H, direction: Direction) -> np.ndarray:
    d = direction.d
    basis = direction.basis
    half = [L / 2.0] * (d - 1) + [H]
    corners = []
    for signs in itertools.product((-1.0, 1.0), repeat=d):
        offset = sum(s * h * basis[k] for k, (s, h) in enumerate(zip(signs, half)))
        corners.append(np.asarray(center, dtype=float) + offset)
    return np.array(corners)


def discretize_box(center: Sequence[float], L: float, H: float, direction: Direction) -> RectRegion:
    """
    Discretize the open box without the usable-size check.

    Vertices are the lattice points strictly inside the box (within the
    tolerance band); edges join vertex pairs at lattice distance one.
    """
    d = direction.d
    center = tuple(float(c) for c in center)
    if len(center) != d:
        raise BadFrame(f"Center has dimension {len(center)} but direction has {d}")
    radius = 0.5 * L * math.sqrt(d - 1) + H + 1.0
    axes = [np.arange(math.floor(c - radius), math.ceil(c + radius) + 1) for c in center]
    grid = np.stack(np.meshgrid(*axes, indexing='ij'), axis=-1).reshape(-1, d)
    coords = (grid - np.asarray(center)) @ direction.basis.T
    inside = np.all(np.abs(coords[:, :-1]) < L / 2.0 - BOUNDARY_TOLERANCE, axis=1)
    inside &= np.abs(coords[:, -1]) < H - BOUNDARY_TOLERANCE
    points = grid[inside]
    heights = coords[inside, -1]

    vertices = sorted(tuple(int(c) for c in p) for p in points)
    vertex_set = set(vertices)
    edges = []
    for vertex in vertices:
        for axis in range(d):
            other = list(vertex)
            other[axis] += 1
            other = tuple(other)
            if other in vertex_set:
                edges.append(canonical_edge(vertex, other))
    edges.sort()

    height_of = {tuple(int(c) for c in p): h for p, h in zip(points, heights)}
    upper, lower = set(), set()
    for vertex in vertices:
        on_boundary = False
        for axis in range(d):
            for step in (-1, 1):
                other = list(vertex)
                other[axis] += step
                if tuple(other) not in vertex_set:
                    on_boundary = True
        if not on_boundary:
            continue
        if height_of[vertex] >= -BOUNDARY_TOLERANCE:
            upper.add(vertex)
        else:
            lower.add(vertex)

    return RectRegion(
        center=center,
        L=float(L),
        H=float(H),
        direction=direction,
        vertices=tuple(vertices),
        edges=tuple(edges),
        upper=frozenset(upper),
        lower=frozenset(lower),
    )


def build_rect(center: Sequence[float], L: float, H: float, direction) -> RectRegion:
    """
    Build the discretized region R_{x,L,H}(S,n).

    Args:
        center: Continuum center x.
        L: Basis side.
        H: Half-height along n.
        direction: A Direction, or a raw vector completed to a frame.

    Raises:
        SizeTooSmall: if L or H is below 2*sqrt(d).
        BadFrame: if the direction is not a unit vector with an orthonormal frame.
    """
    if not isinstance(direction, Direction):
        direction = Direction.from_vector(direction)
    minimum = 2.0 * math.sqrt(direction.d)
    if L < minimum - FRAME_TOLERANCE or H < minimum - FRAME_TOLERANCE:
        raise SizeTooSmall(f"L={L}, H={H} must both be at least 2*sqrt({direction.d}) = {minimum:.6f}")
    region = discretize_box(center, L, H, direction)
    logger.debug(f"Built {region}")
    return region


def region_to_json(region: RectRegion) -> str:
    """Canonical structured text of a region spec."""
    return json.dumps(region.to_spec(), sort_keys=True)


def region_from_json(text: str, check_size: bool = True) -> RectRegion:
    spec = json.loads(text)
    direction = Direction(
        n=tuple(float(c) for c in spec['n']),
        frame=tuple(tuple(float(c) for c in u) for u in spec['frame']),
    )
    if check_size:
        return build_rect(spec['center'], spec['L'], spec['H'], direction)
    return discretize_box(spec['center'], spec['L'], spec['H'], direction)


def lattice_center(N: int, d: int) -> Tuple[float, ...]:
    """
    Center for which an axis-aligned box of side N holds exactly N lattice
    columns along each basis axis.
    """
    offset = 0.5 if N % 2 == 0 else 0.0
    return tuple([offset] * d)


@dataclass(frozen=True)
class Tiling:
    parent: RectRegion
    tiles: Tuple[RectRegion, ...]
    indices: Tuple[Tuple[int, ...], ...]
    l: float

    @property
    def count(self) -> int:
        return len(self.tiles)

    @property
    def covered_fraction(self) -> float:
        """(l/L)^{d-1} |C|, at most one."""
        return (self.l / self.parent.L) ** (self.parent.d - 1) * self.count


def snap_to_lattice(point: Sequence[float]) -> Point:
    """The lattice point z with point in z + [-1/2, 1/2)^d."""
    return tuple(int(math.floor(c + 0.5)) for c in point)


def tile_subadditive(L: float, H: float, l: float, direction: Direction,
                     subframe: Optional[Sequence[Sequence[float]]] = None) -> Tiling:
    """
    Tile R_{0,L,H+sqrt(d)/2}(S,n) by disjoint boxes R_{z_i,l,H}(S',n).

    Tile centers are the lattice points snapped from (l+sqrt(d)) sum_k i_k u'_k;
    the index set C keeps every i whose continuum tile lies inside the
    parent box.

    Raises:
        SizeTooSmall: if H or l is below 2*sqrt(d).
        RatioViolation: if L < 4*sqrt(d)*l.
    """
    d = direction.d
    root_d = math.sqrt(d)
    if H < 2 * root_d or l < 2 * root_d:
        raise SizeTooSmall(f"H={H} and l={l} must be at least 2*sqrt({d})")
    if L < 4 * root_d * l:
        raise RatioViolation(f"L={L} is below 4*sqrt({d})*l = {4 * root_d * l:.6f}")

    tile_direction = direction if subframe is None else direction.with_frame(subframe)
    origin = tuple([0.0] * d)
    parent = discretize_box(origin, L, H + root_d / 2.0, direction)

    spacing = l + root_d
    reach = int(math.ceil(L / (2.0 * spacing))) + 1
    sub_basis = np.array(tile_direction.frame, dtype=float)

    tiles, indices = [], []
    for index in itertools.product(range(-reach, reach + 1), repeat=d - 1):
        target = spacing * (np.asarray(index, dtype=float) @ sub_basis)
        center = tuple(float(c) for c in snap_to_lattice(target))
        corners = box_corners(center, l, H, tile_direction)
        if not np.all(parent.contains_points(corners)):
            continue
        tiles.append(discretize_box(center, l, H, tile_direction))
        indices.append(tuple(index))

    tiling = Tiling(parent=parent, tiles=tuple(tiles), indices=tuple(indices), l=float(l))
    logger.info(f"Tiled L={L}, H={H} by l={l}: |C|={tiling.count}, covered fraction {tiling.covered_fraction:.4f}")
    return tiling


def disconnection_table(region: RectRegion, cap: int = ENUMERATION_CAP) -> np.ndarray:
    """
    For every bond configuration (bitmask over region.edges, bit j = edge j
    open), whether no open path joins the upper to the lower boundary.
    """
    m = region.n_edges
    if m > cap:
        raise TooLarge(f"{m} edges exceed the enumeration cap of {cap}")
    graph = contract(region.edges)
    upper = graph.nodes_of(region.upper & set(graph.vertex_node))
    lower = graph.nodes_of(region.lower & set(graph.vertex_node))
    table = np.empty(1 << m, dtype=bool)
    for masks in mask_chunks(m):
        labels = batch_labels(graph.u, graph.v, graph.n_nodes, mask_bits(masks, m))
        table[masks] = ~rows_connecting(labels, upper, lower)
    return table


def interfaces_enumerate(region: RectRegion, cap: int = ENUMERATION_CAP) -> List[frozenset]:
    """
    All interfaces of the region: minimal edge sets whose closure
    disconnects the upper from the lower boundary.

    Raises:
        TooLarge: above the enumeration cap.
    """
    m = region.n_edges
    table = disconnection_table(region, cap)
    full = (1 << m) - 1
    candidates = np.flatnonzero(table)
    minimal = np.ones(len(candidates), dtype=bool)
    for j in range(m):
        closed_j = ((candidates >> j) & 1) == 0
        reopened = candidates | (1 << j)
        minimal &= ~(closed_j & table[reopened])

    interfaces = []
    for open_mask in candidates[minimal]:
        closed = int(full & ~int(open_mask))
        interfaces.append(frozenset(region.edges[j] for j in range(m) if (closed >> j) & 1))
    interfaces.sort(key=lambda cut: (len(cut), sorted(cut)))
    logger.info(f"Enumerated {len(interfaces)} interfaces over {m} edges")
    return interfaces
