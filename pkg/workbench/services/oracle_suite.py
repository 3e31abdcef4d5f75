"""
Randomized cross-checks of the exact oracles.

Every fixture is a tiny oriented box with uniform couplings, a random
(beta, q) and a random boundary condition. On each one the suite checks
normalization, FKG for increasing events, the single-edge DLR conditional
probabilities, stochastic monotonicity in (J, beta, boundary), monotonicity
of the exact tension, and max-flow / min-cut agreement between the three
flow oracles.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np

from ..exceptions import InvalidParameter, OracleInconsistency
from .disorder import CouplingLaw, derive_seed, edge_prob, sample_couplings
from .flow import brute_force_min_cut, dual_path_min_cut, max_flow
from .geometry import Direction, discretize_box
from .rc_core import (
    EXACT_EDGE_CAP,
    BondConfig,
    BoundaryCondition,
    count_clusters,
    exact_conditional,
    exact_event,
    exact_measure,
    open_edge_selector,
)
from .tension import disconnection_selector, tension_exact

logger = logging.getLogger(__name__)

MIN_FIXTURES = 50
NORMALIZATION_TOLERANCE = 1e-12
FKG_TOLERANCE = 1e-12
TOLERANCE = 1e-9
DLR_MASKS = 16
BUMP = 0.1
Q_CHOICES = (1.0, 1.5, 2.0, 3.0)

# (center, L, H, axis of n); 4, 7, 7 and 10 edges.
REGION_MENU = (
    ((0.5, 0.5), 2.0, 1.0, 1),
    ((0.0, 0.5), 3.0, 1.1, 1),
    ((0.5, 0.0), 3.0, 1.1, 0),
    ((0.5, 0.5), 4.0, 1.0, 1),
)

# Taller twin of the second menu entry for the monotonicity in H.
TALL_H = 1.6


@dataclass
class OracleReport:
    fixtures: int
    seed: int
    checks: Dict[str, int] = field(default_factory=dict)
    worst: Dict[str, float] = field(default_factory=dict)
    rows: List[Dict] = field(default_factory=list)

    def record(self, name: str, margin: float, tolerance: float):
        """
        Count one check; ``margin`` is the signed slack (negative means the
        inequality was violated by that much).
        """
        self.checks[name] = self.checks.get(name, 0) + 1
        self.worst[name] = min(self.worst.get(name, math.inf), margin)
        if margin < -tolerance:
            raise OracleInconsistency(f"Oracle check {name} failed by {-margin:.3e} (tolerance {tolerance:.0e})")


def _region(index: int):
    center, L, H, axis = REGION_MENU[index % len(REGION_MENU)]
    return discretize_box(center, L, H, Direction.axis(axis, 2))


def _check_fkg(report: OracleReport, measure, region, rng):
    m = measure.n_edges
    i, j = rng.choice(m, size=2, replace=False)
    a = open_edge_selector(measure, measure.edges[i])
    b = open_edge_selector(measure, measure.edges[j])
    crossing = ~disconnection_selector(region, EXACT_EDGE_CAP)
    for first, second in ((a, b), (a, crossing), (b, crossing)):
        joint = exact_event(measure, first & second)
        report.record('fkg', joint - exact_event(measure, first) * exact_event(measure, second), FKG_TOLERANCE)


def _check_dlr(report: OracleReport, measure, rng):
    m = measure.n_edges
    j = int(rng.integers(m))
    edge = measure.edges[j]
    exact_conditional(measure, {edge: int(rng.integers(2))})

    p = edge_prob(float(measure.couplings[edge]), measure.beta)
    q = measure.q
    closed = [mask for mask in range(1 << m) if not (mask >> j) & 1]
    picks = rng.choice(len(closed), size=min(DLR_MASKS, len(closed)), replace=False)
    for k in picks:
        mask0 = closed[int(k)]
        mask1 = mask0 | (1 << j)
        p0, p1 = measure.probabilities[mask0], measure.probabilities[mask1]
        ratio = p1 / (p0 + p1)
        joined = (count_clusters(BondConfig.from_mask(measure.edges, mask1), measure.bc)
                  == count_clusters(BondConfig.from_mask(measure.edges, mask0), measure.bc))
        expected = p if joined else p / (p + q * (1.0 - p))
        report.record('dlr', -abs(ratio - expected), TOLERANCE)


def _check_monotone(report: OracleReport, measure, region, couplings, rng):
    base = measure.edge_marginals()
    edge = region.edges[int(rng.integers(region.n_edges))]
    bumped = couplings.with_value(edge, min(1.0, float(couplings[edge]) + BUMP))
    stronger = exact_measure(region.edges, bumped, measure.beta, measure.q, measure.bc)
    report.record('monotone_j', float(np.min(stronger.edge_marginals() - base)), TOLERANCE)

    colder = exact_measure(region.edges, couplings, measure.beta + BUMP, measure.q, measure.bc)
    report.record('monotone_beta', float(np.min(colder.edge_marginals() - base)), TOLERANCE)

    free = exact_measure(region.edges, couplings, measure.beta, measure.q, BoundaryCondition.free())
    wired = exact_measure(region.edges, couplings, measure.beta, measure.q, BoundaryCondition.wired())
    report.record('monotone_bc', float(np.min(wired.edge_marginals() - free.edge_marginals())), TOLERANCE)

    tau = tension_exact(region, couplings, measure.beta, measure.q).value
    report.record('tension_j', tension_exact(region, bumped, measure.beta, measure.q).value - tau, TOLERANCE)
    report.record('tension_beta',
                  tension_exact(region, couplings, measure.beta + BUMP, measure.q).value - tau, TOLERANCE)
    return tau


def _check_flow(report: OracleReport, region, couplings):
    value = max_flow(region, couplings).value
    for oracle in (dual_path_min_cut, brute_force_min_cut):
        report.record('flow_duality', -abs(oracle(region, couplings).value - value), TOLERANCE)
    return value


def _check_height(report: OracleReport, region, couplings, beta, q, tau):
    tall = discretize_box(region.center, region.L, TALL_H, region.direction)
    tall_couplings = sample_couplings(couplings.law, tall.edges, couplings.seed)
    report.record('tension_h', tau - tension_exact(tall, tall_couplings, beta, q).value, TOLERANCE)


def run_oracle_suite(fixtures: int = MIN_FIXTURES, seed: int = 0) -> OracleReport:
    """
    Run the randomized oracle cross-checks.

    Args:
        fixtures: Number of random fixtures (at least 50).
        seed: Root seed; fixture k uses derive_seed(seed, k).

    Returns:
        OracleReport with per-check counts, worst margins and one row per fixture

    Raises:
        OracleInconsistency: on the first failing check.
    """
    if fixtures < MIN_FIXTURES:
        raise InvalidParameter(f"fixtures={fixtures} must be at least {MIN_FIXTURES}")

    law = CouplingLaw.uniform(0.0, 1.0)
    report = OracleReport(fixtures=fixtures, seed=seed)
    for k in range(fixtures):
        fixture_seed = derive_seed(seed, k)
        rng = np.random.default_rng(fixture_seed)
        region = _region(k)
        couplings = sample_couplings(law, region.edges, fixture_seed)
        beta = float(rng.uniform(0.1, 2.5))
        q = float(rng.choice(Q_CHOICES))
        bc = BoundaryCondition.wired() if rng.random() < 0.5 else BoundaryCondition.free()

        measure = exact_measure(region.edges, couplings, beta, q, bc)
        report.record('normalization', -abs(math.fsum(measure.probabilities) - 1.0), NORMALIZATION_TOLERANCE)
        _check_fkg(report, measure, region, rng)
        _check_dlr(report, measure, rng)
        tau = _check_monotone(report, measure, region, couplings, rng)
        flow = _check_flow(report, region, couplings)
        if k % 20 == 1:
            _check_height(report, region, couplings, beta, q, tau)

        report.rows.append({
            'seed': fixture_seed,
            'method': 'exact',
            'fixture': k,
            'edges': region.n_edges,
            'bc': bc.kind,
            'beta': beta,
            'q': q,
            'tau': tau,
            'flow': flow,
        })
        logger.debug(f"Oracle fixture {k}: {region.n_edges} edges, beta={beta:.3f}, q={q}, bc={bc.kind}")

    logger.info(f"Oracle suite passed on {fixtures} fixtures: "
                + ', '.join(f"{name}={count}" for name, count in sorted(report.checks.items())))
    return report
