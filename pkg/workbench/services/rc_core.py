"""
Exact random-cluster measures on small edge sets.

Configurations are indexed by bitmask over the canonical edge order (bit j
is edge j, 1 = open). Weights are kept in log space:

    log w(omega) = sum_e [omega_e log p_e + (1 - omega_e) log(1 - p_e)] + C(omega) log q

where C counts the clusters of omega v pi meeting the vertices of E. These
tables are the oracle the sampling code is checked against.
"""

import csv
import itertools
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, FrozenSet, Iterable, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import special

from ..exceptions import (
    DomainValidationError,
    InvalidParameter,
    NegativeBeta,
    OracleInconsistency,
    TooLarge,
    ZeroProbabilityCondition,
)
from .disorder import CouplingField, edge_probs
from .geometry import RectRegion
from .lattice_graph import (
    ContractedGraph,
    Edge,
    Point,
    batch_labels,
    boundary_vertices,
    canonical_edge,
    contract,
    count_distinct,
    mask_bits,
    mask_chunks,
)

logger = logging.getLogger(__name__)

EXACT_EDGE_CAP = 22
SPIN_SITE_CAP = 22
NORMALIZATION_TOLERANCE = 1e-12
CONDITIONAL_TOLERANCE = 1e-9


@dataclass(frozen=True)
class BondConfig:
    edges: Tuple[Edge, ...]
    state: Tuple[int, ...]

    def __post_init__(self):
        if len(self.edges) != len(self.state):
            raise DomainValidationError("Bond state must cover the edge set exactly")

    @classmethod
    def from_mask(cls, edges: Sequence[Edge], mask: int) -> 'BondConfig':
        return cls(edges=tuple(edges), state=tuple((int(mask) >> j) & 1 for j in range(len(edges))))

    @classmethod
    def from_open(cls, edges: Sequence[Edge], open_edges: Iterable[Edge]) -> 'BondConfig':
        open_edges = set(open_edges)
        return cls(edges=tuple(edges), state=tuple(int(e in open_edges) for e in edges))

    @property
    def mask(self) -> int:
        return sum(bit << j for j, bit in enumerate(self.state))

    @property
    def open_edges(self) -> FrozenSet[Edge]:
        return frozenset(e for e, bit in zip(self.edges, self.state) if bit)

    def __getitem__(self, edge: Edge) -> int:
        return self.state[self.edges.index(edge)]


@dataclass(frozen=True)
class BoundaryCondition:
    """
    Boundary condition pi on the complement of E.

    ``wired`` identifies the given vertices through the exterior; when
    ``wired_vertices`` is None they are the vertices of E with a lattice edge
    outside E. ``open_edges`` are open edges of pi outside E (explicit bc, or
    bonds fixed by conditioning).
    """

    kind: str = 'free'
    open_edges: FrozenSet[Edge] = frozenset()
    wired_vertices: Optional[FrozenSet[Point]] = None

    def __post_init__(self):
        if self.kind not in ('free', 'wired', 'explicit'):
            raise DomainValidationError(f"Unknown boundary condition {self.kind!r}")

    @classmethod
    def free(cls) -> 'BoundaryCondition':
        return cls('free')

    @classmethod
    def wired(cls) -> 'BoundaryCondition':
        return cls('wired')

    @classmethod
    def explicit(cls, open_edges: Iterable[Edge]) -> 'BoundaryCondition':
        return cls('explicit', frozenset(canonical_edge(a, b) for a, b in open_edges))

    def wiring_for(self, edges: Sequence[Edge]) -> FrozenSet[Point]:
        if self.kind != 'wired':
            return frozenset()
        if self.wired_vertices is not None:
            return self.wired_vertices
        return boundary_vertices(edges)

    def extended(self, edges: Sequence[Edge], fixed_open: Iterable[Edge]) -> 'BoundaryCondition':
        """Boundary condition pi v omega' seen by E minus the fixed edges."""
        open_edges = self.open_edges | frozenset(fixed_open)
        if self.kind == 'wired':
            return BoundaryCondition('wired', open_edges, self.wiring_for(edges))
        return BoundaryCondition('explicit', open_edges)

    def contracted(self, edges: Sequence[Edge]) -> ContractedGraph:
        overlap = self.open_edges & set(edges)
        if overlap:
            raise DomainValidationError(f"Boundary edges {sorted(overlap)[:3]} overlap the interior edge set")
        return contract(edges, merged_pairs=self.open_edges, wired=self.wiring_for(edges))


def count_clusters(omega: BondConfig, bc: BoundaryCondition) -> int:
    """
    Number of clusters of omega v pi that meet the vertices touched by E.
    """
    graph = bc.contracted(omega.edges)
    bits = mask_bits(np.array([omega.mask]), len(omega.edges))
    labels = batch_labels(graph.u, graph.v, graph.n_nodes, bits)
    return int(count_distinct(labels[:, graph.counted])[0])


def cluster_counts(graph: ContractedGraph, masks: np.ndarray, n_edges: int) -> np.ndarray:
    labels = batch_labels(graph.u, graph.v, graph.n_nodes, mask_bits(masks, n_edges))
    return count_distinct(labels[:, graph.counted])


@dataclass(frozen=True)
class ExactRCMeasure:
    edges: Tuple[Edge, ...]
    couplings: CouplingField = field(repr=False)
    beta: float
    q: float
    bc: BoundaryCondition
    log_weights: np.ndarray = field(repr=False, compare=False)
    log_partition: float
    probabilities: np.ndarray = field(repr=False, compare=False)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def table(self) -> Dict[BondConfig, float]:
        return {BondConfig.from_mask(self.edges, mask): float(p) for mask, p in enumerate(self.probabilities)}

    def probability(self, omega: BondConfig) -> float:
        if omega.edges != self.edges:
            raise DomainValidationError("Configuration is over a different edge set")
        return float(self.probabilities[omega.mask])

    def edge_marginals(self) -> np.ndarray:
        """P(omega_e = 1) per edge."""
        masks = np.arange(len(self.probabilities), dtype=np.int64)
        bits = mask_bits(masks, self.n_edges)
        return self.probabilities @ bits


def _validate_parameters(beta: float, q: float):
    if beta < 0:
        raise NegativeBeta(f"beta={beta} must be non-negative")
    if q < 1:
        raise InvalidParameter(f"q={q} must be at least 1")


def exact_measure(edges: Sequence[Edge], couplings: CouplingField, beta: float, q: float,
                  bc: BoundaryCondition, cap: int = EXACT_EDGE_CAP) -> ExactRCMeasure:
    """
    Full probability table of the random-cluster measure on ``edges``.

    Edges with p_e = 0 are closed with probability one.

    Raises:
        TooLarge: if the edge set exceeds ``cap``.
    """
    edges = tuple(sorted(canonical_edge(a, b) for a, b in edges))
    m = len(edges)
    if m > cap:
        raise TooLarge(f"{m} edges exceed the exact cap of {cap}")
    _validate_parameters(beta, q)

    p = edge_probs(couplings.array(edges), beta)
    with np.errstate(divide='ignore'):
        log_open = np.log(p)
    log_closed = -beta * couplings.array(edges)
    log_q = math.log(q)
    graph = bc.contracted(edges)

    log_weights = np.empty(1 << m, dtype=float)
    for masks in mask_chunks(m):
        bits = mask_bits(masks, m)
        bond_part = np.where(bits, log_open, log_closed).sum(axis=1)
        if log_q != 0.0:
            bond_part = bond_part + log_q * cluster_counts(graph, masks, m)
        log_weights[masks] = bond_part

    log_partition = float(special.logsumexp(log_weights))
    probabilities = np.exp(log_weights - log_partition)
    total = math.fsum(probabilities)
    if abs(total - 1.0) > NORMALIZATION_TOLERANCE:
        raise OracleInconsistency(f"Exact table sums to {total!r}")

    logger.debug(f"Exact measure over {m} edges (beta={beta}, q={q}, bc={bc.kind}) log Z={log_partition:.6f}")
    return ExactRCMeasure(
        edges=edges,
        couplings=couplings,
        beta=float(beta),
        q=float(q),
        bc=bc,
        log_weights=log_weights,
        log_partition=log_partition,
        probabilities=probabilities,
    )


Event = Union[Callable[[BondConfig], bool], np.ndarray]


def event_selector(measure: ExactRCMeasure, event: Event) -> np.ndarray:
    """Boolean mask over the table for a predicate or a precomputed selector."""
    if isinstance(event, np.ndarray):
        if event.shape != measure.probabilities.shape:
            raise DomainValidationError("Event selector does not match the measure's table")
        return event.astype(bool)
    return np.fromiter(
        (bool(event(BondConfig.from_mask(measure.edges, mask))) for mask in range(len(measure.probabilities))),
        dtype=bool,
        count=len(measure.probabilities),
    )


def exact_event(measure: ExactRCMeasure, event: Event) -> float:
    """Probability of an event under an exact measure."""
    selector = event_selector(measure, event)
    return math.fsum(measure.probabilities[selector])


def exact_log_event(measure: ExactRCMeasure, event: Event) -> float:
    """Log-probability of an event; stays finite where the probability underflows."""
    selector = event_selector(measure, event)
    if not selector.any():
        return -math.inf
    return float(special.logsumexp(measure.log_weights[selector]) - measure.log_partition)


def open_edge_selector(measure: ExactRCMeasure, edge: Edge) -> np.ndarray:
    j = measure.edges.index(edge)
    masks = np.arange(len(measure.probabilities), dtype=np.int64)
    return ((masks >> j) & 1).astype(bool)


def exact_conditional(measure: ExactRCMeasure, fixed: Mapping[Edge, int]) -> ExactRCMeasure:
    """
    Condition on the states of some edges.

    The result is the fresh measure on the remaining edges with boundary
    condition pi v omega'; it is checked row by row against the sliced parent
    table.

    Raises:
        ZeroProbabilityCondition: if the fixed assignment has probability zero.
        OracleInconsistency: if the two computations disagree.
    """
    fixed = {canonical_edge(*e): int(s) for e, s in fixed.items()}
    unknown = set(fixed) - set(measure.edges)
    if unknown:
        raise DomainValidationError(f"Fixed edges {sorted(unknown)[:3]} are not in the measure")

    positions = {e: j for j, e in enumerate(measure.edges)}
    fixed_mask = sum(1 << positions[e] for e in fixed)
    fixed_value = sum(s << positions[e] for e, s in fixed.items())
    masks = np.arange(len(measure.probabilities), dtype=np.int64)
    matching = (masks & fixed_mask) == fixed_value
    if not np.isfinite(measure.log_weights[matching]).any():
        raise ZeroProbabilityCondition(f"Conditioning on {fixed} has probability zero")

    remaining = tuple(e for e in measure.edges if e not in fixed)
    bc = measure.bc.extended(measure.edges, (e for e, s in fixed.items() if s == 1))
    conditional = exact_measure(remaining, measure.couplings, measure.beta, measure.q, bc)

    child = np.arange(1 << len(remaining), dtype=np.int64)
    parent_index = np.full(len(child), fixed_value, dtype=np.int64)
    for k, edge in enumerate(remaining):
        parent_index |= ((child >> k) & 1) << positions[edge]
    sliced = measure.log_weights[parent_index]
    sliced_probabilities = np.exp(sliced - special.logsumexp(sliced))
    discrepancy = float(np.max(np.abs(sliced_probabilities - conditional.probabilities)))
    if discrepancy > CONDITIONAL_TOLERANCE:
        raise OracleInconsistency(f"Conditional table differs from the sliced parent by {discrepancy:.3e}")

    logger.debug(f"Conditioned on {len(fixed)} edges, max row discrepancy {discrepancy:.2e}")
    return conditional


def dump_measure_csv(measure: ExactRCMeasure, path, seed, version: str) -> Path:
    """Write (bitmask, weight, probability) rows for audit."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open('w', newline='', encoding='utf-8') as handle:
        writer = csv.writer(handle, lineterminator='\n')
        writer.writerow(['seed', 'method', 'version', 'bitmask', 'weight', 'probability'])
        for mask, (log_w, prob) in enumerate(zip(measure.log_weights, measure.probabilities)):
            writer.writerow([seed, 'exact', version, mask, repr(float(np.exp(log_w))), repr(float(prob))])
    logger.info(f"Dumped {len(measure.probabilities)} exact rows to {path}")
    return path


@dataclass(frozen=True)
class SpinCorrelations:
    """Exact Ising pair correlations over the edges of a region."""

    edges: Tuple[Edge, ...]
    correlations: np.ndarray
    log_partition: float
    spin_bc: str

    def of(self, edge: Edge) -> float:
        return float(self.correlations[self.edges.index(edge)])

    def energy(self, couplings: CouplingField) -> float:
        """(1/2) sum_e J_e <s_x s_y>."""
        return 0.5 * float(np.dot(couplings.array(self.edges), self.correlations))


def clamped_spins(region: RectRegion, spin_bc: str) -> Dict[Point, int]:
    """Spins mandated on the inner boundary: plus, or mixed (+ on upper, - on lower)."""
    if spin_bc == 'plus':
        return {v: 1 for v in region.boundary}
    if spin_bc == 'mixed':
        spins = {v: 1 for v in region.upper}
        spins.update({v: -1 for v in region.lower})
        return spins
    raise DomainValidationError(f"Unknown spin boundary condition {spin_bc!r}")


def exact_spin_correlations(region: RectRegion, couplings: CouplingField, beta: float, spin_bc: str,
                            cap: int = SPIN_SITE_CAP) -> SpinCorrelations:
    """
    Enumerate the Ising model exp((beta/2) sum_e J_e s_x s_y) over E(R),
    boundary spins clamped by ``spin_bc``.

    Raises:
        TooLarge: if more than ``cap`` sites are free.
    """
    if beta < 0:
        raise NegativeBeta(f"beta={beta} must be non-negative")
    clamped = clamped_spins(region, spin_bc)
    free = [v for v in region.vertices if v not in clamped]
    if len(free) > cap:
        raise TooLarge(f"{len(free)} free sites exceed the spin enumeration cap of {cap}")
    index = {v: k for k, v in enumerate(free)}

    n_states = 1 << len(free)
    states = np.ones((n_states, len(free) + 1), dtype=np.int8)
    if free:
        states[:, :-1] = 1 - 2 * mask_bits(np.arange(n_states), len(free)).astype(np.int8)
    fixed_column = len(free)

    pair_products = np.empty((n_states, len(region.edges)), dtype=np.int8)
    for j, (a, b) in enumerate(region.edges):
        sa = states[:, index[a]] if a in index else clamped[a] * states[:, fixed_column]
        sb = states[:, index[b]] if b in index else clamped[b] * states[:, fixed_column]
        pair_products[:, j] = sa * sb

    J = couplings.array(region.edges)
    log_weights = 0.5 * beta * (pair_products @ J)
    log_partition = float(special.logsumexp(log_weights))
    probabilities = np.exp(log_weights - log_partition)
    correlations = probabilities @ pair_products
    return SpinCorrelations(
        edges=region.edges,
        correlations=np.asarray(correlations, dtype=float),
        log_partition=log_partition,
        spin_bc=spin_bc,
    )


def exact_spin_distribution(region: RectRegion, couplings: CouplingField, beta: float, spin_bc: str,
                            cap: int = SPIN_SITE_CAP):
    """
    All free-site spin assignments and their probabilities, for marginal checks.

    Returns:
        (free sites, spins array of shape (2**n, n), probabilities)
    """
    clamped = clamped_spins(region, spin_bc)
    free = [v for v in region.vertices if v not in clamped]
    if len(free) > cap:
        raise TooLarge(f"{len(free)} free sites exceed the spin enumeration cap of {cap}")
    spins = np.array(list(itertools.product((1, -1), repeat=len(free))), dtype=np.int8)
    J = couplings.array(region.edges)
    index = {v: k for k, v in enumerate(free)}
    energy = np.zeros(len(spins))
    for j, (a, b) in enumerate(region.edges):
        sa = spins[:, index[a]] if a in index else clamped[a]
        sb = spins[:, index[b]] if b in index else clamped[b]
        energy += J[j] * sa * sb
    log_weights = 0.5 * beta * energy
    probabilities = np.exp(log_weights - special.logsumexp(log_weights))
    return tuple(free), spins, probabilities
