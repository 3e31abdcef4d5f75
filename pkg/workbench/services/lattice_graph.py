"""
Lattice connectivity primitives.

Points of Z^d are integer tuples, edges are sorted point pairs. The exact
engines work on whole batches of bond configurations at once (rows of a
boolean matrix), so alongside the classic union-find this module offers a
vectorized label propagation over configuration batches.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Sequence, Tuple

import numpy as np

logger = logging.getLogger(__name__)

Point = Tuple[int, ...]
Edge = Tuple[Point, Point]


def as_point(coords) -> Point:
    return tuple(int(c) for c in coords)


def canonical_edge(a, b) -> Edge:
    """Return the edge {a, b} with its endpoints in lexicographic order."""
    pa, pb = as_point(a), as_point(b)
    return (pa, pb) if pa <= pb else (pb, pa)


def lattice_neighbours(point: Point) -> List[Point]:
    neighbours = []
    for axis in range(len(point)):
        for step in (-1, 1):
            other = list(point)
            other[axis] += step
            neighbours.append(tuple(other))
    return neighbours


def edge_vertices(edges: Iterable[Edge]) -> List[Point]:
    vertices = set()
    for a, b in edges:
        vertices.add(a)
        vertices.add(b)
    return sorted(vertices)


def boundary_vertices(edges: Sequence[Edge]) -> frozenset:
    """
    Vertices of the edge set that have a lattice edge outside of it.

    For the edge set of a discretized region this is exactly the inner
    boundary of the region.
    """
    edge_set = set(edges)
    boundary = set()
    for vertex in edge_vertices(edges):
        for other in lattice_neighbours(vertex):
            if canonical_edge(vertex, other) not in edge_set:
                boundary.add(vertex)
                break
    return frozenset(boundary)


class UnionFind:
    """Disjoint sets over 0..size-1 with path compression and union by size."""

    def __init__(self, size: int):
        self.parents = list(range(size))
        self.sizes = [1] * size
        self.num_components = size

    def find(self, elem: int) -> int:
        root = elem
        while root != self.parents[root]:
            root = self.parents[root]
        # compress
        while elem != root:
            self.parents[elem], elem = root, self.parents[elem]
        return root

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if self.sizes[ra] < self.sizes[rb]:
            ra, rb = rb, ra
        self.parents[rb] = ra
        self.sizes[ra] += self.sizes[rb]
        self.num_components -= 1
        return True

    def connected(self, a: int, b: int) -> bool:
        return self.find(a) == self.find(b)


class PointUnionFind:
    """Union-find keyed by lattice points instead of integer ids."""

    def __init__(self, points: Iterable[Point] = ()):
        self._index: Dict[Point, int] = {}
        self._uf = UnionFind(0)
        for point in points:
            self.add(point)

    def add(self, point: Point) -> int:
        if point not in self._index:
            self._index[point] = len(self._index)
            self._uf.parents.append(len(self._uf.parents))
            self._uf.sizes.append(1)
            self._uf.num_components += 1
        return self._index[point]

    def union(self, a: Point, b: Point) -> bool:
        return self._uf.union(self.add(a), self.add(b))

    def find(self, point: Point) -> int:
        return self._uf.find(self.add(point))

    def connected(self, a: Point, b: Point) -> bool:
        return self.find(a) == self.find(b)


def sets_connected(open_edges: Iterable[Edge], sources: Iterable[Point], targets: Iterable[Point]) -> bool:
    """True if some open path joins a source point to a target point."""
    uf = PointUnionFind()
    for a, b in open_edges:
        uf.union(a, b)
    source_roots = {uf.find(point) for point in sources}
    return any(uf.find(point) in source_roots for point in targets)


@dataclass(frozen=True)
class ContractedGraph:
    """
    Edge set whose always-merged vertices are collapsed into single nodes.

    Boundary wiring and open boundary edges never change within a
    measure, so they are contracted once; only the edges of E are left to
    vary.
    """

    n_nodes: int
    u: np.ndarray
    v: np.ndarray
    vertex_node: Dict[Point, int] = field(repr=False)
    counted: np.ndarray = field(repr=False)

    def nodes_of(self, points: Iterable[Point]) -> np.ndarray:
        return np.array(sorted({self.vertex_node[p] for p in points}), dtype=np.int64)


def contract(edges: Sequence[Edge], merged_pairs: Iterable[Edge] = (), wired: Iterable[Point] = ()) -> ContractedGraph:
    """
    Build the contracted graph of ``edges``.

    Args:
        edges: The varying edges, in canonical order.
        merged_pairs: Vertex pairs that are always joined (open boundary edges).
        wired: Vertices identified with each other through the exterior.

    Returns:
        ContractedGraph whose ``counted`` nodes are those holding a vertex of E.
    """
    merged_pairs = list(merged_pairs)
    wired = sorted(set(wired))
    own_vertices = edge_vertices(edges)
    all_vertices = sorted(set(own_vertices) | set(edge_vertices(merged_pairs)) | set(wired))
    index = {vertex: i for i, vertex in enumerate(all_vertices)}
    ghost = len(all_vertices)

    uf = UnionFind(ghost + 1)
    for a, b in merged_pairs:
        uf.union(index[a], index[b])
    for vertex in wired:
        uf.union(index[vertex], ghost)

    node_of_root: Dict[int, int] = {}
    vertex_node: Dict[Point, int] = {}
    for vertex in all_vertices:
        root = uf.find(index[vertex])
        vertex_node[vertex] = node_of_root.setdefault(root, len(node_of_root))

    u = np.array([vertex_node[a] for a, _ in edges], dtype=np.int64)
    v = np.array([vertex_node[b] for _, b in edges], dtype=np.int64)
    counted = np.array(sorted({vertex_node[p] for p in own_vertices}), dtype=np.int64)
    return ContractedGraph(
        n_nodes=len(node_of_root),
        u=u,
        v=v,
        vertex_node=vertex_node,
        counted=counted,
    )


def mask_bits(masks: np.ndarray, n_edges: int) -> np.ndarray:
    """Expand integer bitmasks into a (batch, n_edges) boolean matrix; bit j is edge j."""
    masks = np.asarray(masks, dtype=np.int64)
    return ((masks[:, None] >> np.arange(n_edges, dtype=np.int64)) & 1).astype(bool)


def batch_labels(u: np.ndarray, v: np.ndarray, n_nodes: int, open_bits: np.ndarray) -> np.ndarray:
    """
    Component labels for a batch of configurations.

    Min-label propagation across open edges until every open edge joins
    equal labels; each row then carries one label per component.
    """
    batch = open_bits.shape[0]
    labels = np.tile(np.arange(n_nodes, dtype=np.int32), (batch, 1))
    active = [j for j in range(len(u)) if u[j] != v[j]]
    changed = True
    while changed:
        changed = False
        for j in active:
            rows = open_bits[:, j]
            if not rows.any():
                continue
            a, b = u[j], v[j]
            la = labels[rows, a]
            lb = labels[rows, b]
            if np.array_equal(la, lb):
                continue
            low = np.minimum(la, lb)
            labels[rows, a] = low
            labels[rows, b] = low
            changed = True
    return labels


def count_distinct(labels: np.ndarray) -> np.ndarray:
    """Number of distinct values per row."""
    if labels.shape[1] == 0:
        return np.zeros(labels.shape[0], dtype=np.int64)
    ordered = np.sort(labels, axis=1)
    return 1 + np.count_nonzero(np.diff(ordered, axis=1), axis=1)


def rows_connecting(labels: np.ndarray, group_a: np.ndarray, group_b: np.ndarray) -> np.ndarray:
    """Per row, whether some node of ``group_a`` shares a label with a node of ``group_b``."""
    if len(group_a) == 0 or len(group_b) == 0:
        return np.zeros(labels.shape[0], dtype=bool)
    la = labels[:, group_a]
    lb = labels[:, group_b]
    return (la[:, :, None] == lb[:, None, :]).any(axis=(1, 2))


def mask_chunks(n_edges: int, chunk_bits: int = 16):
    """Yield consecutive bitmask ranges covering all 2**n_edges configurations."""
    total = 1 << n_edges
    step = 1 << min(chunk_bits, n_edges)
    for start in range(0, total, step):
        yield np.arange(start, min(start + step, total), dtype=np.int64)
