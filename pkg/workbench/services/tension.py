"""
Surface tension of oriented boxes.

    tau = -(1/L^{d-1}) log Phi^w(D),   D = {upper boundary not connected to lower boundary}

computed exactly on small boxes, and for q = 2 by thermodynamic
integration of the plus/mixed correlation gap,

    tau(beta) = (1/L^{d-1}) int_0^beta (1/2) sum_e J_e [<s_x s_y>_+ - <s_x s_y>_mixed] dbeta'.
"""

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from ..exceptions import DomainValidationError, GridNotFromZero, InsufficientSamples, InvalidParameter
from .disorder import CouplingField, CouplingLaw, derive_seed, sample_couplings
from .geometry import Direction, RectRegion, build_rect, disconnection_table, discretize_box
from .lattice_graph import sets_connected
from .rc_core import (
    EXACT_EDGE_CAP,
    BondConfig,
    BoundaryCondition,
    exact_log_event,
    exact_measure,
    exact_spin_correlations,
)
from .rc_mc import MIN_BATCHES, IsingChain, energy_estimate

logger = logging.getLogger(__name__)

# Critical beta of the pure model exp((beta/2) sum s_x s_y) on Z^2.
PURE_ISING_BETA_C = math.log(1.0 + math.sqrt(2.0))

DEFAULT_GRID_NODES = 40
DEFAULT_TI_SWEEPS = 2000


@dataclass(frozen=True)
class TensionEstimate:
    region: RectRegion = field(repr=False)
    beta: float
    q: float
    value: float
    method: str
    stderr: float = 0.0
    seed: Optional[int] = None
    bias: float = 0.0


def is_disconnected(omega: BondConfig, region: RectRegion) -> bool:
    """True iff no open path of omega joins the upper to the lower boundary."""
    if set(omega.edges) != set(region.edges):
        raise DomainValidationError("Configuration must be defined on the region's edge set")
    return not sets_connected(omega.open_edges, region.upper, region.lower)


@lru_cache(maxsize=32)
def disconnection_selector(region: RectRegion, cap: int) -> np.ndarray:
    table = disconnection_table(region, cap)
    table.flags.writeable = False
    return table


def tension_exact(region: RectRegion, couplings: CouplingField, beta: float, q: float,
                  cap: int = EXACT_EDGE_CAP) -> TensionEstimate:
    """
    Exact tau^J_R from the wired measure of the region.

    Raises:
        TooLarge: above the exact cap.
    """
    measure = exact_measure(region.edges, couplings, beta, q, BoundaryCondition.wired(), cap=cap)
    log_p = exact_log_event(measure, disconnection_selector(region, cap))
    value = -log_p / region.area + 0.0
    return TensionEstimate(region=region, beta=float(beta), q=float(q), value=value, method='exact',
                           stderr=0.0, seed=couplings.seed)


def default_beta_grid(beta: float, nodes: int = DEFAULT_GRID_NODES,
                      beta_c: float = PURE_ISING_BETA_C) -> np.ndarray:
    """
    Integration grid on [0, beta]: half the nodes uniform, the rest
    geometrically refined around beta_c when it lies inside the range.
    """
    if beta <= 0:
        return np.array([0.0])
    uniform = np.linspace(0.0, beta, nodes // 2 + 1)
    refined = np.empty(0)
    if 0.0 < beta_c < beta:
        width = 0.5 * min(beta_c, beta - beta_c)
        levels = (nodes - len(uniform)) // 2
        offsets = width * 2.0 ** -np.arange(levels)
        refined = np.concatenate([beta_c - offsets, beta_c + offsets, [beta_c]])
    return np.unique(np.round(np.concatenate([uniform, refined]), 12))


def trapezoid(grid: np.ndarray, values: np.ndarray) -> float:
    grid = np.asarray(grid, dtype=float)
    values = np.asarray(values, dtype=float)
    return float(np.sum(0.5 * (values[1:] + values[:-1]) * np.diff(grid)))


def trapezoid_weights(grid: np.ndarray) -> np.ndarray:
    widths = np.diff(np.asarray(grid, dtype=float))
    weights = np.zeros(len(grid))
    weights[:-1] += 0.5 * widths
    weights[1:] += 0.5 * widths
    return weights


def trapezoid_bias(grid: np.ndarray, values: np.ndarray) -> float:
    """Richardson estimate |T_h - T_2h| / 3 of the trapezoid error on ``grid``."""
    if len(grid) < 3:
        return 0.0
    keep = list(range(0, len(grid), 2))
    if keep[-1] != len(grid) - 1:
        keep.append(len(grid) - 1)
    coarse = trapezoid(np.asarray(grid)[keep], np.asarray(values)[keep])
    return abs(trapezoid(grid, values) - coarse) / 3.0


def _validate_grid(beta: float, beta_grid: Sequence[float]) -> np.ndarray:
    grid = np.asarray(beta_grid, dtype=float)
    if grid.size == 0 or grid[0] != 0.0:
        raise GridNotFromZero(f"beta grid must start at 0, starts at {grid[0] if grid.size else None}")
    if np.any(np.diff(grid) <= 0):
        raise DomainValidationError("beta grid must be strictly increasing")
    if abs(grid[-1] - beta) > 1e-12:
        raise DomainValidationError(f"beta grid ends at {grid[-1]}, expected beta={beta}")
    return grid


def correlation_gap(region: RectRegion, couplings: CouplingField, beta: float, source: str = 'mc',
                    sweeps: int = DEFAULT_TI_SWEEPS, batches: int = MIN_BATCHES,
                    burn_in: Optional[int] = None, seed: int = 0):
    """
    (1/2) sum_e J_e [<s s>_+ - <s s>_mixed] / L^{d-1} at one beta, with its standard error.

    The gap does not vanish at beta = 0: edges between clamped boundary
    sites keep their mandated correlation.
    """
    if source == 'exact':
        plus = exact_spin_correlations(region, couplings, beta, 'plus').energy(couplings)
        mixed = exact_spin_correlations(region, couplings, beta, 'mixed').energy(couplings)
        return (plus - mixed) / region.area, 0.0
    if source != 'mc':
        raise DomainValidationError(f"Unknown correlation source {source!r}")
    plus = energy_estimate(IsingChain(region, couplings, beta, 'plus', derive_seed(seed, 0)),
                           sweeps, batches, burn_in)
    mixed = energy_estimate(IsingChain(region, couplings, beta, 'mixed', derive_seed(seed, 1)),
                            sweeps, batches, burn_in)
    gap = (plus.mean - mixed.mean) / region.area
    return gap, math.hypot(plus.stderr, mixed.stderr) / region.area


def tension_ti(region: RectRegion, couplings: CouplingField, beta: float, q: float = 2,
               beta_grid: Optional[Sequence[float]] = None, sweeps: int = DEFAULT_TI_SWEEPS,
               batches: int = MIN_BATCHES, burn_in: Optional[int] = None, seed: int = 0,
               correlation_source: str = 'mc') -> TensionEstimate:
    """
    Thermodynamic-integration estimate of tau^J_R for the Ising case.

    Args:
        region: The box.
        couplings: Field on the region's edges.
        beta: Target inverse temperature.
        q: Must be 2.
        beta_grid: Nodes from 0 to beta; default_beta_grid(beta) when omitted.
        sweeps, batches, burn_in: Monte Carlo budget per node and boundary condition.
        seed: Root seed; node k uses derive_seed(seed, k).
        correlation_source: 'mc', or 'exact' for enumeration on tiny regions.

    Raises:
        GridNotFromZero: if the grid does not start at 0.
        InsufficientSamples: with fewer than 20 batches.
    """
    if q != 2:
        raise InvalidParameter(f"Thermodynamic integration needs the Ising case q=2, got q={q}")
    grid = _validate_grid(beta, default_beta_grid(beta) if beta_grid is None else beta_grid)
    if correlation_source == 'mc' and (batches < MIN_BATCHES or sweeps < batches):
        raise InsufficientSamples(f"{sweeps} sweeps in {batches} batches; need at least {MIN_BATCHES} batches")

    gaps = np.zeros(len(grid))
    errors = np.zeros(len(grid))
    for k, node in enumerate(grid):
        gaps[k], errors[k] = correlation_gap(region, couplings, float(node), correlation_source,
                                             sweeps, batches, burn_in, derive_seed(seed, k))
        logger.debug(f"TI node beta={node:.4f}: gap={gaps[k]:.6f} +- {errors[k]:.6f}")

    value = trapezoid(grid, gaps)
    stderr = float(np.sqrt(np.sum((trapezoid_weights(grid) * errors) ** 2)))
    bias = trapezoid_bias(grid, gaps)
    logger.info(f"TI tension at beta={beta}: {value:.6f} +- {stderr:.6f} (bias {bias:.2e}, {len(grid)} nodes)")
    return TensionEstimate(region=region, beta=float(beta), q=2.0, value=value, method='thermo-integration',
                           stderr=stderr, seed=couplings.seed, bias=bias)


@dataclass(frozen=True)
class QuenchedTension:
    mean: float
    stderr: float
    samples: List[float]
    seeds: List[int]
    method: str
    region: RectRegion = field(repr=False)
    errors: List[float] = field(default_factory=list)


def tension_replica(payload: Dict) -> Dict:
    """
    One disorder replica from a JSON payload (the unit of work fanned out to workers).

    Payload keys: region (spec), check_size, law (spec), seed, beta, q, method,
    and for thermo-integration: beta_grid, sweeps, batches, burn_in.
    """
    spec = payload['region']
    direction = Direction.from_dict(spec['direction'])
    build = build_rect if payload.get('check_size', True) else discretize_box
    region = build(spec['center'], spec['L'], spec['H'], direction)
    law = CouplingLaw.parse(payload['law'])
    couplings = sample_couplings(law, region.edges, payload['seed'])
    if payload['method'] == 'exact':
        estimate = tension_exact(region, couplings, payload['beta'], payload['q'])
    else:
        estimate = tension_ti(region, couplings, payload['beta'], payload['q'],
                              beta_grid=payload.get('beta_grid'),
                              sweeps=payload.get('sweeps', DEFAULT_TI_SWEEPS),
                              batches=payload.get('batches', MIN_BATCHES),
                              burn_in=payload.get('burn_in'),
                              seed=payload['seed'])
    return {'seed': payload['seed'], 'tau': estimate.value, 'stderr': estimate.stderr,
            'bias': estimate.bias, 'method': estimate.method}


Runner = Callable[[List[Dict]], List[Dict]]


def local_runner(function: Callable[[Dict], Dict]) -> Runner:
    return lambda payloads: [function(p) for p in payloads]


def quenched_tension(law: CouplingLaw, direction: Direction, L: float, H: float, beta: float, q: float,
                     replicas: int, seed: int = 0, method: str = 'exact',
                     center: Optional[Sequence[float]] = None, check_size: bool = True,
                     ti_options: Optional[Dict] = None, runner: Optional[Runner] = None) -> QuenchedTension:
    """
    Disorder average of tau^J_R over i.i.d. replicas with derived seeds.

    Returns the mean, its standard error and the raw sample vector.
    """
    if replicas < 2:
        raise InvalidParameter(f"replicas={replicas} must be at least 2")
    center = tuple([0.0] * direction.d) if center is None else tuple(center)
    build = build_rect if check_size else discretize_box
    region = build(center, L, H, direction)
    seeds = [derive_seed(seed, k) for k in range(replicas)]
    base = {
        'region': {'center': list(center), 'L': L, 'H': H, 'direction': direction.to_dict()},
        'check_size': check_size,
        'law': law.to_spec(),
        'beta': beta,
        'q': q,
        'method': method,
    }
    base.update(ti_options or {})
    payloads = [dict(base, seed=s) for s in seeds]
    results = (runner or local_runner(tension_replica))(payloads)

    samples = [float(r['tau']) for r in results]
    mean = float(np.mean(samples))
    stderr = float(np.std(samples, ddof=1) / math.sqrt(len(samples)))
    logger.info(f"Quenched tension over {replicas} replicas of {law}: {mean:.6f} +- {stderr:.6f}")
    return QuenchedTension(mean=mean, stderr=stderr, samples=samples, seeds=seeds, method=method,
                           region=region, errors=[float(r['stderr']) for r in results])


def explicit_tension_bound(d: int, beta: float, j_max: float) -> float:
    """6 2^d d^{3/2} beta J^max."""
    return 6.0 * 2.0 ** d * d ** 1.5 * beta * j_max


def tension_bounds(region: RectRegion, law: CouplingLaw, beta: float, q: float) -> Dict[str, float]:
    """tau^min and tau^max (constant fields at J^min, J^max) and the explicit linear bound."""
    low = CouplingField.constant(region.edges, law.j_min)
    high = CouplingField.constant(region.edges, law.j_max)
    return {
        'tau_min': tension_exact(region, low, beta, q).value,
        'tau_max': tension_exact(region, high, beta, q).value,
        'explicit_bound': explicit_tension_bound(region.d, beta, law.j_max),
    }
