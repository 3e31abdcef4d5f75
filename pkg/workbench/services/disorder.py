"""
Quenched disorder: coupling laws, counter-based coupling fields and the
derived bond probabilities p_e = 1 - exp(-beta J_e).
"""

import csv
import hashlib
import logging
import struct
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from ..exceptions import InvalidCouplingLaw, NegativeBeta, ProvenanceMismatch
from .lattice_graph import Edge, canonical_edge

logger = logging.getLogger(__name__)

LAW_KINDS = ('constant', 'dilution', 'two-point', 'uniform')


def _exact(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, str):
        return Fraction(value)
    return Fraction(value).limit_denominator(10**9) if isinstance(value, float) else Fraction(value)


@dataclass(frozen=True)
class CouplingLaw:
    """
    Law of a single coupling J_e in [0, 1].

    Finite-support laws keep their atoms and weights as exact rationals;
    ``uniform`` keeps its interval.
    """

    kind: str
    atoms: Tuple[Fraction, ...] = ()
    weights: Tuple[Fraction, ...] = ()
    lo: float = 0.0
    hi: float = 0.0

    def __post_init__(self):
        if self.kind not in LAW_KINDS:
            raise InvalidCouplingLaw(f"Unknown law kind {self.kind!r}; expected one of {LAW_KINDS}")
        if self.kind == 'uniform':
            if not (0.0 <= self.lo <= self.hi <= 1.0):
                raise InvalidCouplingLaw(f"uniform({self.lo}, {self.hi}) must satisfy 0 <= lo <= hi <= 1")
            return
        if len(self.atoms) != len(self.weights) or not self.atoms:
            raise InvalidCouplingLaw("Finite-support law needs matching atoms and weights")
        for atom in self.atoms:
            if not (0 <= atom <= 1):
                raise InvalidCouplingLaw(f"Coupling value {atom} lies outside [0, 1]")
        for weight in self.weights:
            if not (0 <= weight <= 1):
                raise InvalidCouplingLaw(f"Probability {weight} lies outside [0, 1]")
        if sum(self.weights) != 1:
            raise InvalidCouplingLaw(f"Weights {self.weights} do not sum to 1")

    @classmethod
    def constant(cls, c) -> 'CouplingLaw':
        return cls(kind='constant', atoms=(_exact(c),), weights=(Fraction(1),))

    @classmethod
    def dilution(cls, p) -> 'CouplingLaw':
        """P(J=1) = p, P(J=0) = 1-p."""
        p = _exact(p)
        return cls(kind='dilution', atoms=(Fraction(1), Fraction(0)), weights=(p, 1 - p))

    @classmethod
    def two_point(cls, a, b, p) -> 'CouplingLaw':
        """P(J=a) = p, P(J=b) = 1-p."""
        p = _exact(p)
        return cls(kind='two-point', atoms=(_exact(a), _exact(b)), weights=(p, 1 - p))

    @classmethod
    def uniform(cls, lo: float, hi: float) -> 'CouplingLaw':
        return cls(kind='uniform', lo=float(lo), hi=float(hi))

    @property
    def is_finite_support(self) -> bool:
        return self.kind != 'uniform'

    def support(self) -> List[Tuple[float, float]]:
        """Atoms with positive weight as (value, probability) pairs."""
        if not self.is_finite_support:
            raise InvalidCouplingLaw("uniform law has no finite support")
        return [(float(a), float(w)) for a, w in zip(self.atoms, self.weights) if w > 0]

    def exact_support(self) -> List[Tuple[Fraction, Fraction]]:
        return [(a, w) for a, w in zip(self.atoms, self.weights) if w > 0]

    @property
    def j_min(self) -> float:
        if self.kind == 'uniform':
            return self.lo
        return float(min(a for a, _ in self.exact_support()))

    @property
    def j_max(self) -> float:
        if self.kind == 'uniform':
            return self.hi
        return float(max(a for a, _ in self.exact_support()))

    @property
    def mean(self) -> float:
        if self.kind == 'uniform':
            return 0.5 * (self.lo + self.hi)
        return float(sum(a * w for a, w in self.exact_support()))

    def quantile(self, u: np.ndarray) -> np.ndarray:
        """Map uniforms in [0, 1) to coupling values."""
        u = np.asarray(u, dtype=float)
        if self.kind == 'uniform':
            return self.lo + (self.hi - self.lo) * u
        support = self.exact_support()
        values = np.array([float(a) for a, _ in support])
        cumulative = np.cumsum([float(w) for _, w in support])
        cumulative[-1] = 1.0
        slot = np.searchsorted(cumulative, u, side='right')
        return values[np.minimum(slot, len(values) - 1)]

    def to_spec(self) -> Dict:
        if self.kind == 'constant':
            return {'kind': 'constant', 'value': str(self.atoms[0])}
        if self.kind == 'dilution':
            return {'kind': 'dilution', 'p': str(self.weights[0])}
        if self.kind == 'two-point':
            return {'kind': 'two-point', 'a': str(self.atoms[0]), 'b': str(self.atoms[1]), 'p': str(self.weights[0])}
        return {'kind': 'uniform', 'lo': self.lo, 'hi': self.hi}

    @classmethod
    def parse(cls, spec: Mapping) -> 'CouplingLaw':
        """
        Build a law from its config form, e.g. ``{"kind": "dilution", "p": 0.7}``.

        Raises:
            InvalidCouplingLaw: on unknown kinds, missing keys or values outside [0, 1].
        """
        if not isinstance(spec, Mapping):
            raise InvalidCouplingLaw(f"Law spec must be a mapping, got {type(spec).__name__}")
        kind = spec.get('kind')
        expected = {
            'constant': {'value'},
            'dilution': {'p'},
            'two-point': {'a', 'b', 'p'},
            'uniform': {'lo', 'hi'},
        }
        if kind not in expected:
            raise InvalidCouplingLaw(f"Unknown law kind {kind!r}; expected one of {LAW_KINDS}")
        keys = set(spec) - {'kind'}
        if keys != expected[kind]:
            raise InvalidCouplingLaw(f"Law {kind!r} takes keys {sorted(expected[kind])}, got {sorted(keys)}")
        try:
            if kind == 'constant':
                return cls.constant(_exact(spec['value']))
            if kind == 'dilution':
                return cls.dilution(_exact(spec['p']))
            if kind == 'two-point':
                return cls.two_point(_exact(spec['a']), _exact(spec['b']), _exact(spec['p']))
            return cls.uniform(float(spec['lo']), float(spec['hi']))
        except (TypeError, ValueError, ZeroDivisionError) as e:
            if isinstance(e, InvalidCouplingLaw):
                raise
            raise InvalidCouplingLaw(f"Malformed law spec {dict(spec)!r}: {str(e)}") from e

    def __str__(self):
        return f"{self.kind}({', '.join(f'{k}={v}' for k, v in self.to_spec().items() if k != 'kind')})"


@dataclass(frozen=True)
class CouplingField:
    """Couplings J_e on an edge set; ``law`` is None for hand-built fields."""

    values: Mapping[Edge, float] = field(hash=False)
    law: Optional[CouplingLaw] = None
    seed: Optional[int] = None

    @property
    def edges(self) -> Tuple[Edge, ...]:
        return tuple(sorted(self.values))

    def __getitem__(self, edge: Edge) -> float:
        return self.values[edge]

    def __len__(self):
        return len(self.values)

    def array(self, edges: Sequence[Edge]) -> np.ndarray:
        return np.array([self.values[e] for e in edges], dtype=float)

    def restrict(self, edges: Iterable[Edge]) -> 'CouplingField':
        return CouplingField(values={e: self.values[e] for e in edges}, law=self.law, seed=self.seed)

    def with_value(self, edge: Edge, value: float) -> 'CouplingField':
        values = dict(self.values)
        values[edge] = float(value)
        return CouplingField(values=values, law=None, seed=self.seed)

    def scaled(self, factor: float) -> 'CouplingField':
        return CouplingField(values={e: factor * j for e, j in self.values.items()}, law=None, seed=self.seed)

    def checksum(self) -> str:
        digest = hashlib.sha256()
        for edge in self.edges:
            digest.update(repr((edge, self.values[edge])).encode())
        return digest.hexdigest()

    @classmethod
    def constant(cls, edges: Iterable[Edge], value: float) -> 'CouplingField':
        return cls(values={e: float(value) for e in edges}, law=None, seed=None)


def edge_uniform(seed: int, edge: Edge) -> float:
    """
    Counter-based uniform in [0, 1) keyed by (seed, edge coordinates).

    Independent of which other edges are sampled and of their order.
    """
    a, b = edge
    payload = struct.pack(f'<q{len(a) + len(b)}q', int(seed) & 0x7FFFFFFFFFFFFFFF, *a, *b)
    word = int.from_bytes(hashlib.blake2b(payload, digest_size=8, person=b'dilutelab-J').digest(), 'little')
    return (word >> 11) * (1.0 / (1 << 53))


def sample_couplings(law: CouplingLaw, edges: Iterable[Edge], seed: int) -> CouplingField:
    """
    Sample an i.i.d. coupling field.

    Args:
        law: Law of each J_e.
        edges: Edge set (any order; the field is keyed by edge).
        seed: 64-bit seed.

    Returns:
        CouplingField whose values depend only on (law, seed, edge).
    """
    edges = sorted(canonical_edge(a, b) for a, b in edges)
    uniforms = np.array([edge_uniform(seed, e) for e in edges], dtype=float)
    values = law.quantile(uniforms)
    logger.debug(f"Sampled {len(edges)} couplings from {law} with seed {seed}")
    return CouplingField(values=dict(zip(edges, (float(v) for v in values))), law=law, seed=int(seed))


def edge_prob(J_e: float, beta: float) -> float:
    """p_e = 1 - exp(-beta J_e)."""
    if beta < 0:
        raise NegativeBeta(f"beta={beta} must be non-negative")
    if not (0.0 <= J_e <= 1.0):
        raise InvalidCouplingLaw(f"J_e={J_e} lies outside [0, 1]")
    return float(-np.expm1(-beta * J_e))


def edge_probs(values: np.ndarray, beta: float) -> np.ndarray:
    """Vectorized edge_prob."""
    if beta < 0:
        raise NegativeBeta(f"beta={beta} must be non-negative")
    values = np.asarray(values, dtype=float)
    if values.size and (values.min() < 0.0 or values.max() > 1.0):
        raise InvalidCouplingLaw("Couplings must lie in [0, 1]")
    return -np.expm1(-beta * values)


def derive_seed(seed: int, *counters: int) -> int:
    """Deterministic child seed for replica ``counters`` of a run seeded by ``seed``."""
    state = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, *[int(c) for c in counters]])
    return int(state.generate_state(1, dtype=np.uint64)[0] & np.uint64(0x7FFFFFFFFFFFFFFF))


def _format_point(point) -> str:
    return ' '.join(str(c) for c in point)


def _parse_point(text: str):
    return tuple(int(c) for c in text.split())


def export_couplings_csv(couplings: CouplingField, path, version: str, method: str = 'sample') -> Path:
    """
    Write a field as CSV rows (seed, method, version, law, u, v, J).
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    law = str(couplings.law) if couplings.law is not None else 'explicit'
    with path.open('w', newline='', encoding='utf-8') as handle:
        writer = csv.writer(handle, lineterminator='\n')
        writer.writerow(['seed', 'method', 'version', 'law', 'u', 'v', 'J'])
        for edge in couplings.edges:
            writer.writerow([couplings.seed if couplings.seed is not None else '', method, version, law,
                             _format_point(edge[0]), _format_point(edge[1]), repr(couplings[edge])])
    logger.info(f"Exported {len(couplings)} couplings to {path}")
    return path


def import_couplings_csv(path, law: Optional[CouplingLaw] = None) -> CouplingField:
    """
    Read a field written by export_couplings_csv.

    When ``law`` is given, the rows must be regenerable from it (same seed,
    same values), otherwise ProvenanceMismatch is raised.
    """
    values, seeds = {}, set()
    with Path(path).open(newline='', encoding='utf-8') as handle:
        for row in csv.DictReader(handle):
            edge = canonical_edge(_parse_point(row['u']), _parse_point(row['v']))
            values[edge] = float(row['J'])
            seeds.add(row['seed'])
    seed = None
    if len(seeds) == 1 and '' not in seeds:
        seed = int(seeds.pop())
    field_ = CouplingField(values=values, law=None, seed=seed)
    if law is not None:
        if seed is None:
            raise ProvenanceMismatch(f"{path} carries no single seed to check against {law}")
        regenerated = sample_couplings(law, values.keys(), seed)
        if regenerated.checksum() != field_.checksum():
            raise ProvenanceMismatch(f"{path} is not the {law} field of seed {seed}")
        return regenerated
    logger.info(f"Imported {len(values)} couplings from {path}")
    return field_
