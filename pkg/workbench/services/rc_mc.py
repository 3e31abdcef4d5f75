"""
Monte Carlo sampling of the random-cluster model and of the coupled Ising
spins.

Bond dynamics: single-bond heat-bath (any real q >= 1) and Swendsen-Wang
(integer q). Spin dynamics: Edwards-Sokal alternation with boundary spins
clamped (plus or mixed). Every sweep draws from
``np.random.default_rng([seed, sweep])`` so a chain is reproducible from its
seed and sweep counter alone.
"""

import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Dict, Optional, Sequence, Tuple

import numba
import numpy as np

from ..exceptions import (
    DomainValidationError,
    FrustratedBoundary,
    InsufficientSamples,
    InvalidParameter,
    ProvenanceMismatch,
    TooLarge,
)
from .disorder import CouplingField, edge_probs
from .geometry import RectRegion
from .lattice_graph import Edge, Point, UnionFind, canonical_edge
from .rc_core import EXACT_EDGE_CAP, BondConfig, BoundaryCondition, clamped_spins

logger = logging.getLogger(__name__)

MIN_BATCHES = 20
BURN_IN_FACTOR = 10
PILOT_SWEEPS = 200


@dataclass(frozen=True, eq=False)
class BondGraph:
    """Contracted edge set with CSR adjacency, ready for the sweep kernels."""

    edges: Tuple[Edge, ...]
    u: np.ndarray
    v: np.ndarray
    n_nodes: int
    ptr: np.ndarray
    adj: np.ndarray

    @classmethod
    def build(cls, edges: Sequence[Edge], bc: BoundaryCondition) -> 'BondGraph':
        edges = tuple(sorted(canonical_edge(a, b) for a, b in edges))
        graph = bc.contracted(edges)
        degree = np.zeros(graph.n_nodes + 1, dtype=np.int64)
        for a, b in zip(graph.u, graph.v):
            degree[a + 1] += 1
            degree[b + 1] += 1
        ptr = np.cumsum(degree)
        fill = ptr[:-1].copy()
        adj = np.empty(2 * len(edges), dtype=np.int64)
        for j, (a, b) in enumerate(zip(graph.u, graph.v)):
            adj[fill[a]] = j
            fill[a] += 1
            adj[fill[b]] = j
            fill[b] += 1
        return cls(edges=edges, u=graph.u, v=graph.v, n_nodes=graph.n_nodes, ptr=ptr, adj=adj)


@dataclass(frozen=True, eq=False)
class ChainState:
    graph: BondGraph = field(repr=False)
    couplings: CouplingField = field(repr=False)
    beta: float
    q: float
    bc: BoundaryCondition
    seed: int
    bonds: np.ndarray = field(repr=False)
    sweep: int = 0
    probs: np.ndarray = field(default=None, repr=False)

    @classmethod
    def start(cls, edges: Sequence[Edge], couplings: CouplingField, beta: float, q: float,
              bc: BoundaryCondition, seed: int, initial: str = 'closed') -> 'ChainState':
        if q < 1:
            raise InvalidParameter(f"q={q} must be at least 1")
        graph = BondGraph.build(edges, bc)
        fill = 1 if initial == 'open' else 0
        return cls(
            graph=graph,
            couplings=couplings,
            beta=float(beta),
            q=float(q),
            bc=bc,
            seed=int(seed),
            bonds=np.full(len(graph.edges), fill, dtype=np.uint8),
            probs=edge_probs(couplings.array(graph.edges), beta),
        )

    @property
    def edges(self) -> Tuple[Edge, ...]:
        return self.graph.edges

    @property
    def mask(self) -> int:
        return int(sum(int(bit) << j for j, bit in enumerate(self.bonds)))

    def bond_config(self) -> BondConfig:
        return BondConfig(edges=self.edges, state=tuple(int(b) for b in self.bonds))

    def rng(self) -> np.random.Generator:
        return np.random.default_rng([self.seed, self.sweep])


@numba.jit(nopython=True)
def _connected_off(a, b, skip, bonds, u, v, ptr, adj, seen, stack, stamp):
    top = 0
    stack[0] = a
    seen[a] = stamp
    while top >= 0:
        x = stack[top]
        top -= 1
        for k in range(ptr[x], ptr[x + 1]):
            f = adj[k]
            if f == skip or bonds[f] == 0:
                continue
            y = u[f] if v[f] == x else v[f]
            if y == b:
                return True
            if seen[y] != stamp:
                seen[y] = stamp
                top += 1
                stack[top] = y
    return False


@numba.jit(nopython=True)
def _heatbath_pass(bonds, u, v, ptr, adj, probs, q, draws, n_nodes):
    seen = np.zeros(n_nodes, dtype=np.int64)
    stack = np.empty(n_nodes + 1, dtype=np.int64)
    for e in range(len(u)):
        p = probs[e]
        if p == 0.0:
            bonds[e] = 0
            continue
        if u[e] == v[e]:
            connected = True
        else:
            connected = _connected_off(u[e], v[e], e, bonds, u, v, ptr, adj, seen, stack, e + 1)
        if connected:
            threshold = p
        else:
            threshold = p / (p + q * (1.0 - p))
        bonds[e] = 1 if draws[e] < threshold else 0


def heatbath_sweep(state: ChainState) -> ChainState:
    """
    One pass over the edges in canonical order, each resampled from its
    conditional law given the rest: open with probability p_e if its
    endpoints are connected off e, else p_e / (p_e + q (1 - p_e)).
    """
    draws = state.rng().random(len(state.edges))
    bonds = state.bonds.copy()
    g = state.graph
    _heatbath_pass(bonds, g.u, g.v, g.ptr, g.adj, state.probs, state.q, draws, g.n_nodes)
    return replace(state, bonds=bonds, sweep=state.sweep + 1)


def swendsen_wang_sweep(state: ChainState) -> ChainState:
    """
    Edwards-Sokal alternation for integer q: colour clusters uniformly,
    then open each monochromatic edge with probability p_e.
    """
    if state.q != int(state.q):
        raise InvalidParameter(f"Swendsen-Wang needs integer q, got q={state.q}")
    rng = state.rng()
    g = state.graph
    uf = UnionFind(g.n_nodes)
    for j in np.flatnonzero(state.bonds):
        uf.union(int(g.u[j]), int(g.v[j]))
    colours = rng.integers(0, int(state.q), size=g.n_nodes)
    draws = rng.random(len(state.edges))
    root_colour = np.array([colours[uf.find(x)] for x in range(g.n_nodes)], dtype=np.int64)
    same = root_colour[g.u] == root_colour[g.v]
    bonds = (same & (draws < state.probs)).astype(np.uint8)
    return replace(state, bonds=bonds, sweep=state.sweep + 1)


DYNAMICS: Dict[str, Callable[[ChainState], ChainState]] = {
    'heatbath': heatbath_sweep,
    'swendsen-wang': swendsen_wang_sweep,
}


def run_sweeps(state: ChainState, sweeps: int, dynamics: str = 'heatbath') -> ChainState:
    step = DYNAMICS[dynamics]
    for _ in range(sweeps):
        state = step(state)
    return state


def empirical_distribution(state: ChainState, sweeps: int, burn_in: int = 0,
                           dynamics: str = 'heatbath') -> Tuple[ChainState, np.ndarray]:
    """
    Visit frequencies of every bond configuration over ``sweeps`` sweeps.

    Returns:
        (final state, frequencies indexed by bitmask)
    """
    m = len(state.edges)
    if m > EXACT_EDGE_CAP:
        raise TooLarge(f"{m} edges exceed the exact cap of {EXACT_EDGE_CAP}")
    state = run_sweeps(state, burn_in, dynamics)
    counts = np.zeros(1 << m, dtype=np.int64)
    weights = (1 << np.arange(m, dtype=np.int64))
    step = DYNAMICS[dynamics]
    for _ in range(sweeps):
        state = step(state)
        counts[int(state.bonds.astype(np.int64) @ weights)] += 1
    return state, counts / max(sweeps, 1)


def total_variation(frequencies: np.ndarray, probabilities: np.ndarray) -> float:
    return 0.5 * float(np.abs(np.asarray(frequencies) - np.asarray(probabilities)).sum())


@dataclass(frozen=True, eq=False)
class SpinConfig:
    """
    Spins over a site set. ``sites`` is None for box configurations, where
    ``spins`` is the d-dimensional array over {0..N-1}^d.
    """

    spins: np.ndarray
    bc: str
    sites: Optional[Tuple[Point, ...]] = None

    @property
    def magnetization(self) -> float:
        return float(np.mean(self.spins))


def es_spin_sample(bonds: BondConfig, region: RectRegion, spin_bc: str, rng: np.random.Generator) -> SpinConfig:
    """
    Spin configuration given bonds: clusters touching the boundary take the
    mandated spin, other clusters an independent uniform sign.

    Raises:
        FrustratedBoundary: if a cluster touches boundary sites with opposite mandated spins.
    """
    sites = region.vertices
    index = {v: k for k, v in enumerate(sites)}
    uf = UnionFind(len(sites))
    for edge in bonds.open_edges:
        uf.union(index[edge[0]], index[edge[1]])
    signs = 2 * rng.integers(0, 2, size=len(sites)) - 1

    mandated: Dict[int, int] = {}
    for vertex, spin in clamped_spins(region, spin_bc).items():
        root = uf.find(index[vertex])
        if mandated.setdefault(root, spin) != spin:
            raise FrustratedBoundary(f"A cluster joins boundary sites with opposite spins near {vertex}")

    spins = np.empty(len(sites), dtype=np.int8)
    for k in range(len(sites)):
        root = uf.find(k)
        spins[k] = mandated.get(root, signs[root])
    return SpinConfig(spins=spins, bc=spin_bc, sites=sites)


class IsingChain:
    """
    Ising chain on a region with clamped boundary spins, driven by
    Edwards-Sokal (Swendsen-Wang) sweeps.
    """

    def __init__(self, region: RectRegion, couplings: CouplingField, beta: float, spin_bc: str, seed: int):
        if spin_bc not in ('plus', 'mixed'):
            raise DomainValidationError(f"Unknown spin boundary condition {spin_bc!r}")
        self.region = region
        self.couplings = couplings
        self.beta = float(beta)
        self.spin_bc = spin_bc
        self.seed = int(seed)
        self.sweep = 0

        index = {v: k for k, v in enumerate(region.vertices)}
        self._ia = np.array([index[a] for a, _ in region.edges], dtype=np.int64)
        self._ib = np.array([index[b] for _, b in region.edges], dtype=np.int64)
        self._J = couplings.array(region.edges)
        self._p = edge_probs(self._J, beta)

        heights = region.frame_coordinates(region.vertices)[:, -1] if region.vertices else np.zeros(0)
        if spin_bc == 'plus':
            start = np.ones(len(region.vertices), dtype=np.int8)
        else:
            start = np.where(heights >= 0, 1, -1).astype(np.int8)
        for vertex, spin in clamped_spins(region, spin_bc).items():
            start[index[vertex]] = spin
        self.spins = start

    def step(self) -> SpinConfig:
        rng = np.random.default_rng([self.seed, self.sweep])
        draws = rng.random(len(self._J))
        agree = self.spins[self._ia] == self.spins[self._ib]
        open_mask = agree & (draws < self._p)
        bonds = BondConfig(edges=self.region.edges, state=tuple(int(b) for b in open_mask))
        sample = es_spin_sample(bonds, self.region, self.spin_bc, rng)
        self.spins = sample.spins
        self.sweep += 1
        return sample

    def pair(self, edge: Edge) -> int:
        j = self.region.edge_index[edge]
        return int(self.spins[self._ia[j]] * self.spins[self._ib[j]])

    def energy(self, weights: Optional[np.ndarray] = None) -> float:
        """sum_e w_e s_x s_y with w = J/2 by default."""
        weights = 0.5 * self._J if weights is None else weights
        return float(np.dot(weights, self.spins[self._ia] * self.spins[self._ib]))

    def series(self, observable: Callable[['IsingChain'], float], sweeps: int) -> np.ndarray:
        values = np.empty(sweeps, dtype=float)
        for t in range(sweeps):
            self.step()
            values[t] = observable(self)
        return values


@dataclass(frozen=True)
class Estimate:
    mean: float
    stderr: float
    batches: int
    samples: int
    burn_in: int = 0


def batched_means(series: np.ndarray, batches: int = MIN_BATCHES) -> Tuple[float, float]:
    """Mean and standard error from ``batches`` equal consecutive batches."""
    series = np.asarray(series, dtype=float)
    size = len(series) // batches
    if batches < MIN_BATCHES or size < 1:
        raise InsufficientSamples(f"Need at least {MIN_BATCHES} non-empty batches, got {batches} over {len(series)} samples")
    means = series[:size * batches].reshape(batches, size).mean(axis=1)
    return float(means.mean()), float(means.std(ddof=1) / math.sqrt(batches))


def autocorrelation_time(series: np.ndarray, batches: int = MIN_BATCHES) -> float:
    """Integrated autocorrelation time estimated from batch-mean variance."""
    series = np.asarray(series, dtype=float)
    size = len(series) // batches
    variance = float(series.var())
    if size < 2 or variance == 0.0:
        return 1.0
    means = series[:size * batches].reshape(batches, size).mean(axis=1)
    return max(1.0, 0.5 * size * float(means.var(ddof=1)) / variance)


def estimate_burn_in(chain: IsingChain, pilot_sweeps: int = PILOT_SWEEPS) -> int:
    """
    Burn-in of BURN_IN_FACTOR autocorrelation times of the energy, measured
    on a pilot run. The pilot sweeps count towards the burn-in.
    """
    pilot = chain.series(lambda c: c.energy(), pilot_sweeps)
    tau = autocorrelation_time(pilot)
    burn_in = int(math.ceil(BURN_IN_FACTOR * tau))
    for _ in range(max(0, burn_in - pilot_sweeps)):
        chain.step()
    logger.debug(f"Pilot autocorrelation time {tau:.2f}, burn-in {burn_in} sweeps")
    return max(burn_in, pilot_sweeps)


def _estimate(chain: IsingChain, observable, sweeps: int, batches: int, burn_in: Optional[int]) -> Estimate:
    if batches < MIN_BATCHES or sweeps < batches:
        raise InsufficientSamples(f"{sweeps} sweeps in {batches} batches; need at least {MIN_BATCHES} batches")
    if burn_in is None:
        burn_in = estimate_burn_in(chain)
    else:
        for _ in range(burn_in):
            chain.step()
    series = chain.series(observable, sweeps)
    mean, stderr = batched_means(series, batches)
    return Estimate(mean=mean, stderr=stderr, batches=batches, samples=sweeps, burn_in=burn_in)


def correlation_estimate(chain: IsingChain, edge: Edge, sweeps: int, batches: int = MIN_BATCHES,
                         burn_in: Optional[int] = None) -> Estimate:
    """
    Batched-means estimate of <s_x s_y> for edge {x, y}.

    Raises:
        InsufficientSamples: with fewer than 20 batches.
    """
    edge = canonical_edge(*edge)
    if edge not in chain.region.edge_index:
        raise DomainValidationError(f"Edge {edge} is not in the region")
    return _estimate(chain, lambda c: c.pair(edge), sweeps, batches, burn_in)


def energy_estimate(chain: IsingChain, sweeps: int, batches: int = MIN_BATCHES,
                    burn_in: Optional[int] = None, weights: Optional[np.ndarray] = None) -> Estimate:
    """Batched-means estimate of sum_e w_e <s_x s_y> (w = J/2 by default)."""
    return _estimate(chain, lambda c: c.energy(weights), sweeps, batches, burn_in)


def _bc_to_dict(bc: BoundaryCondition) -> Dict:
    return {
        'kind': bc.kind,
        'open_edges': [[list(a), list(b)] for a, b in sorted(bc.open_edges)],
        'wired_vertices': None if bc.wired_vertices is None else [list(v) for v in sorted(bc.wired_vertices)],
    }


def _bc_from_dict(data: Dict) -> BoundaryCondition:
    wired = data.get('wired_vertices')
    return BoundaryCondition(
        kind=data['kind'],
        open_edges=frozenset(canonical_edge(a, b) for a, b in data['open_edges']),
        wired_vertices=None if wired is None else frozenset(tuple(v) for v in wired),
    )


def save_checkpoint(state: ChainState, path) -> Path:
    """Persist (couplings reference, bond bitmask, sweep counter, seed)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        'edges': [[list(a), list(b)] for a, b in state.edges],
        'bond_mask': format(state.mask, 'x'),
        'sweep': state.sweep,
        'seed': state.seed,
        'beta': state.beta,
        'q': state.q,
        'bc': _bc_to_dict(state.bc),
        'couplings': {
            'law': state.couplings.law.to_spec() if state.couplings.law is not None else None,
            'seed': state.couplings.seed,
            'checksum': state.couplings.restrict(state.edges).checksum(),
        },
    }
    path.write_text(json.dumps(payload, sort_keys=True), encoding='utf-8')
    logger.info(f"Checkpoint at sweep {state.sweep} written to {path}")
    return path


def load_checkpoint(path, couplings: CouplingField) -> ChainState:
    """
    Resume a chain from a checkpoint.

    Raises:
        ProvenanceMismatch: if ``couplings`` is not the field the chain ran on.
    """
    payload = json.loads(Path(path).read_text(encoding='utf-8'))
    edges = [canonical_edge(a, b) for a, b in payload['edges']]
    restricted = couplings.restrict(edges)
    if restricted.checksum() != payload['couplings']['checksum']:
        raise ProvenanceMismatch(f"Couplings do not match checkpoint {path}")
    state = ChainState.start(edges, restricted, payload['beta'], payload['q'], _bc_from_dict(payload['bc']),
                             payload['seed'])
    mask = int(payload['bond_mask'], 16)
    bonds = np.array([(mask >> j) & 1 for j in range(len(state.edges))], dtype=np.uint8)
    return replace(state, bonds=bonds, sweep=int(payload['sweep']))
