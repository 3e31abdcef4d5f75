"""
Maximal flows through random capacities.

mu^J_R is the minimal total capacity of an interface of R normalized by
L^{d-1}. It is computed by preflow-push from a super-source on the lower
boundary to a super-sink on the upper one, and in two dimensions also as a
shortest path in the planar dual.
"""

import logging
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, Optional, Sequence

import networkx as nx
import numpy as np
from networkx.algorithms.flow import preflow_push

from ..exceptions import InvalidParameter, NotPlanar, OracleInconsistency
from .disorder import CouplingField, CouplingLaw, derive_seed, sample_couplings
from .geometry import Direction, RectRegion, build_rect, discretize_box, interfaces_enumerate, lattice_center
from .lattice_graph import Edge, sets_connected
from .tension import Runner, local_runner, tension_exact
from .wulff import TensionFunction

logger = logging.getLogger(__name__)

DUALITY_TOLERANCE = 1e-9
MIN_REPLICAS = 8

SOURCE = '__source__'
SINK = '__sink__'


@dataclass(frozen=True)
class FlowResult:
    region: RectRegion = field(repr=False)
    value: float
    mu: float
    cut: FrozenSet[Edge]
    method: str
    seed: Optional[int] = None


def _capacities(region: RectRegion, couplings: CouplingField) -> Dict[Edge, float]:
    capacities = {edge: float(couplings[edge]) for edge in region.edges}
    negative = [e for e, c in capacities.items() if c < 0]
    if negative:
        raise InvalidParameter(f"Negative capacity on {len(negative)} edges, e.g. {negative[0]}")
    return capacities


def _check_cut(region: RectRegion, capacities: Dict[Edge, float], cut: FrozenSet[Edge], value: float):
    capacity = math.fsum(capacities[e] for e in cut)
    if abs(capacity - value) > DUALITY_TOLERANCE:
        raise OracleInconsistency(f"Flow value {value} differs from cut capacity {capacity}")
    remaining = [e for e in region.edges if e not in cut]
    if sets_connected(remaining, region.lower, region.upper):
        raise OracleInconsistency(f"Returned cut of {len(cut)} edges does not disconnect the boundaries")


def _result(region, capacities, cut, value, method, couplings) -> FlowResult:
    cut = frozenset(cut)
    _check_cut(region, capacities, cut, value)
    return FlowResult(region=region, value=value + 0.0, mu=value / region.area + 0.0, cut=cut,
                      method=method, seed=couplings.seed)


def max_flow(region: RectRegion, couplings: CouplingField) -> FlowResult:
    """
    Maximal flow from the lower to the upper boundary with capacities J_e.

    The returned cut is the residual-reachability cut nearest the source.

    Raises:
        InvalidParameter: on a negative capacity.
        OracleInconsistency: if the flow value and the cut capacity disagree.
    """
    capacities = _capacities(region, couplings)
    infinite = 1.0 + math.fsum(capacities.values())

    graph = nx.DiGraph()
    graph.add_nodes_from([SOURCE, SINK])
    for (a, b), capacity in capacities.items():
        graph.add_edge(a, b, capacity=capacity)
        graph.add_edge(b, a, capacity=capacity)
    for vertex in region.lower:
        graph.add_edge(SOURCE, vertex, capacity=infinite)
    for vertex in region.upper:
        graph.add_edge(vertex, SINK, capacity=infinite)

    residual = preflow_push(graph, SOURCE, SINK, capacity='capacity', value_only=False)
    value = float(residual.graph['flow_value'])

    reachable = {SOURCE}
    queue = deque([SOURCE])
    while queue:
        node = queue.popleft()
        for other, attr in residual[node].items():
            if other not in reachable and attr['capacity'] - attr['flow'] > 0:
                reachable.add(other)
                queue.append(other)

    cut = [e for e in region.edges if (e[0] in reachable) != (e[1] in reachable)]
    result = _result(region, capacities, cut, value, 'maxflow', couplings)
    logger.debug(f"Max flow on {region}: {value:.6f} through {len(cut)} cut edges")
    return result


def dual_path_min_cut(region: RectRegion, couplings: CouplingField) -> FlowResult:
    """
    Minimal cut as a shortest path in the planar dual.

    The region plus super-source, super-sink and a source-sink edge is
    embedded; the minimal cut is the lightest dual path between the two
    faces on either side of the source-sink edge.

    Raises:
        NotPlanar: if the region is not two-dimensional, or the augmented graph has no planar embedding.
    """
    if region.d != 2:
        raise NotPlanar(f"Dual-path min cut needs d=2, region has d={region.d}")
    capacities = _capacities(region, couplings)
    if not region.upper or not region.lower:
        return _result(region, capacities, (), 0.0, 'dual-path', couplings)

    graph = nx.Graph()
    graph.add_edges_from(region.edges)
    graph.add_edges_from((SOURCE, v) for v in region.lower)
    graph.add_edges_from((v, SINK) for v in region.upper)
    graph.add_edge(SOURCE, SINK)
    planar, embedding = nx.check_planarity(graph)
    if not planar:
        raise NotPlanar(f"Augmented graph of {region} has no planar embedding")

    face_of = {}
    faces = 0
    for u, v in embedding.edges():
        if (u, v) in face_of:
            continue
        half_edges = set()
        embedding.traverse_face(u, v, mark_half_edges=half_edges)
        for half_edge in half_edges:
            face_of[half_edge] = faces
        faces += 1

    dual = nx.Graph()
    dual.add_nodes_from(range(faces))
    for edge, capacity in capacities.items():
        a, b = face_of[edge], face_of[(edge[1], edge[0])]
        if a == b:
            continue
        if dual.has_edge(a, b) and dual[a][b]['weight'] <= capacity:
            continue
        dual.add_edge(a, b, weight=capacity, primal=edge)

    start, end = face_of[(SOURCE, SINK)], face_of[(SINK, SOURCE)]
    path = nx.dijkstra_path(dual, start, end, weight='weight')
    cut = [dual[a][b]['primal'] for a, b in zip(path, path[1:])]
    value = math.fsum(capacities[e] for e in cut)
    return _result(region, capacities, cut, value, 'dual-path', couplings)


def brute_force_min_cut(region: RectRegion, couplings: CouplingField) -> FlowResult:
    """Minimal interface capacity by exhaustive interface enumeration (small regions only)."""
    capacities = _capacities(region, couplings)
    interfaces = interfaces_enumerate(region)
    if not interfaces:
        return _result(region, capacities, (), 0.0, 'brute-force', couplings)
    best = min(interfaces, key=lambda i: (math.fsum(capacities[e] for e in i), sorted(i)))
    return _result(region, capacities, best, math.fsum(capacities[e] for e in best), 'brute-force', couplings)


FLOW_METHODS = {
    'maxflow': max_flow,
    'dual-path': dual_path_min_cut,
    'brute-force': brute_force_min_cut,
}


@dataclass(frozen=True)
class DirectionFlow:
    direction: Direction
    mean: float
    stderr: float
    samples: List[float]
    seeds: List[int]
    cut_sizes: List[int]

    @property
    def n(self) -> np.ndarray:
        return self.direction.normal


def flow_replica(payload: Dict) -> Dict:
    """One disorder replica of a flow computation from a JSON payload."""
    spec = payload['region']
    direction = Direction.from_dict(spec['direction'])
    build = build_rect if payload.get('check_size', True) else discretize_box
    region = build(spec['center'], spec['L'], spec['H'], direction)
    couplings = sample_couplings(CouplingLaw.parse(payload['law']), region.edges, payload['seed'])
    result = FLOW_METHODS[payload.get('method', 'maxflow')](region, couplings)
    return {'seed': payload['seed'], 'flow': result.value, 'mu': result.mu, 'cut_size': len(result.cut)}


def flow_direction_sweep(law: CouplingLaw, N: int, delta: float, directions: Sequence[Direction],
                         replicas: int, seed: int = 0, method: str = 'maxflow',
                         runner: Optional[Runner] = None) -> List[DirectionFlow]:
    """
    Estimate mu(n) for each direction from boxes R_{0,N,delta N}(S,n).

    Replica k of direction i uses the couplings seed derive_seed(seed, i, k).

    Raises:
        InvalidParameter: with fewer than 8 replicas.
    """
    if replicas < MIN_REPLICAS:
        raise InvalidParameter(f"replicas={replicas} must be at least {MIN_REPLICAS}")
    payloads = []
    for i, direction in enumerate(directions):
        region_spec = {'center': list(lattice_center(N, direction.d)), 'L': float(N), 'H': float(delta * N),
                       'direction': direction.to_dict()}
        for k in range(replicas):
            payloads.append({'region': region_spec, 'law': law.to_spec(), 'seed': derive_seed(seed, i, k),
                             'method': method})
    results = (runner or local_runner(flow_replica))(payloads)

    table = []
    for i, direction in enumerate(directions):
        chunk = results[i * replicas:(i + 1) * replicas]
        samples = [float(r['mu']) for r in chunk]
        row = DirectionFlow(
            direction=direction,
            mean=float(np.mean(samples)),
            stderr=float(np.std(samples, ddof=1) / math.sqrt(replicas)),
            samples=samples,
            seeds=[int(r['seed']) for r in chunk],
            cut_sizes=[int(r['cut_size']) for r in chunk],
        )
        logger.info(f"mu(n={direction.n}) over {replicas} replicas at N={N}: {row.mean:.5f} +- {row.stderr:.5f}")
        table.append(row)
    return table


def durrett_liggett_law(p: float = 0.8) -> CouplingLaw:
    """Capacity 1/2 with probability p, else 1."""
    return CouplingLaw.two_point(0.5, 1, p)


def jmin_gap(rows: Sequence[DirectionFlow], law: CouplingLaw) -> List[Dict]:
    """
    Empirical gap mu_hat(n) - J^min ||n||_1 per direction; only its sign is
    asserted, no quantitative value is claimed for it.
    """
    gaps = []
    for row in rows:
        floor = law.j_min * float(np.sum(np.abs(row.n)))
        gap = row.mean - floor
        if row.stderr > 0:
            z = gap / row.stderr
        else:
            z = math.inf if gap > 0 else 0.0
        gaps.append({
            'n': tuple(row.direction.n),
            'mu': row.mean,
            'floor': floor,
            'gap': gap,
            'z': z,
        })
    return gaps


def tension_function_from_sweep(rows: Sequence[DirectionFlow]):
    """The sampled mu(n) as a tension function for the Wulff construction."""
    directions = np.array([row.n for row in rows], dtype=float)
    return TensionFunction(directions=directions, values=np.array([row.mean for row in rows], dtype=float))


def low_temperature_gap(region: RectRegion, couplings: CouplingField, betas: Sequence[float],
                        q: float = 2) -> List[Dict]:
    """
    |tau^J_R(beta) / beta - mu^J_R| along a beta ladder; the exact tension
    per unit beta approaches the minimal cut as beta grows.
    """
    if any(beta <= 0 for beta in betas):
        raise InvalidParameter(f"The beta ladder must be positive, got {list(betas)}")
    mu = max_flow(region, couplings).mu
    rows = []
    for beta in betas:
        tau = tension_exact(region, couplings, beta, q).value
        rows.append({'beta': float(beta), 'tau': tau, 'tau_over_beta': tau / beta, 'mu': mu,
                     'gap': abs(tau / beta - mu)})
        logger.debug(f"beta={beta}: tau/beta={tau / beta:.6f}, mu={mu:.6f}")
    return rows
