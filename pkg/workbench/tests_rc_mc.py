"""
Tests for the Monte Carlo samplers: bond dynamics against the exact tables,
Edwards-Sokal spin chains, batched means and checkpoints.
"""

import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from workbench.exceptions import (
    DomainValidationError,
    InsufficientSamples,
    InvalidParameter,
    ProvenanceMismatch,
    TooLarge,
)
from workbench.services.disorder import CouplingField, CouplingLaw, sample_couplings
from workbench.services.geometry import Direction, discretize_box
from workbench.services.rc_core import BoundaryCondition, exact_measure, exact_spin_correlations
from workbench.services.rc_mc import (
    ChainState,
    IsingChain,
    batched_means,
    correlation_estimate,
    empirical_distribution,
    estimate_burn_in,
    heatbath_sweep,
    load_checkpoint,
    run_sweeps,
    save_checkpoint,
    swendsen_wang_sweep,
    total_variation,
)


def square():
    return discretize_box((0.5, 0.5), 2.0, 1.0, Direction.axis(1, 2))


def strip(H=1.1):
    return discretize_box((0.0, 0.5), 3.0, H, Direction.axis(1, 2))


# ============================================================================
# Bond dynamics
# ============================================================================

class BondDynamicsTests(SimpleTestCase):

    def setUp(self):
        self.region = square()
        self.couplings = sample_couplings(CouplingLaw.uniform(0.3, 1.0), self.region.edges, 9)

    def _tv(self, q, bc, dynamics):
        exact = exact_measure(self.region.edges, self.couplings, 1.0, q, bc)
        state = ChainState.start(self.region.edges, self.couplings, 1.0, q, bc, seed=123)
        _, frequencies = empirical_distribution(state, 40000, burn_in=100, dynamics=dynamics)
        return total_variation(frequencies, exact.probabilities)

    def test_heatbath_matches_exact_free(self):
        self.assertLess(self._tv(1.5, BoundaryCondition.free(), 'heatbath'), 0.05)

    def test_heatbath_matches_exact_wired(self):
        self.assertLess(self._tv(3.0, BoundaryCondition.wired(), 'heatbath'), 0.05)

    def test_swendsen_wang_matches_exact(self):
        self.assertLess(self._tv(2.0, BoundaryCondition.free(), 'swendsen-wang'), 0.05)

    def test_swendsen_wang_needs_integer_q(self):
        state = ChainState.start(self.region.edges, self.couplings, 1.0, 1.5, BoundaryCondition.free(), seed=1)
        with self.assertRaises(InvalidParameter):
            swendsen_wang_sweep(state)

    def test_q_below_one_rejected(self):
        with self.assertRaises(InvalidParameter):
            ChainState.start(self.region.edges, self.couplings, 1.0, 0.5, BoundaryCondition.free(), seed=1)

    def test_chain_is_reproducible_from_seed_and_sweep(self):
        first = run_sweeps(ChainState.start(self.region.edges, self.couplings, 1.0, 2.0,
                                            BoundaryCondition.free(), seed=77), 50)
        second = run_sweeps(ChainState.start(self.region.edges, self.couplings, 1.0, 2.0,
                                             BoundaryCondition.free(), seed=77), 50)
        self.assertEqual(first.mask, second.mask)
        self.assertEqual(first.sweep, 50)

    def test_closed_edges_with_zero_coupling_stay_closed(self):
        couplings = CouplingField.constant(self.region.edges, 1.0).with_value(self.region.edges[0], 0.0)
        state = ChainState.start(self.region.edges, couplings, 2.0, 2.0, BoundaryCondition.free(),
                                 seed=5, initial='open')
        for _ in range(20):
            state = heatbath_sweep(state)
            self.assertEqual(int(state.bonds[0]), 0)

    def test_empirical_distribution_cap(self):
        region = discretize_box((0.5, 0.5), 6.0, 3.0, Direction.axis(1, 2))
        couplings = CouplingField.constant(region.edges, 1.0)
        state = ChainState.start(region.edges, couplings, 1.0, 2.0, BoundaryCondition.free(), seed=0)
        with self.assertRaises(TooLarge):
            empirical_distribution(state, 10)


class CheckpointTests(SimpleTestCase):

    def test_resume_gives_the_same_trajectory(self):
        region = strip(1.6)
        couplings = sample_couplings(CouplingLaw.dilution('7/10'), region.edges, 3)
        state = run_sweeps(ChainState.start(region.edges, couplings, 1.2, 2.0,
                                            BoundaryCondition.wired(), seed=8), 25)
        with tempfile.TemporaryDirectory() as tmp:
            path = save_checkpoint(state, Path(tmp) / 'chain.json')
            resumed = load_checkpoint(path, couplings)
        self.assertEqual(resumed.mask, state.mask)
        self.assertEqual(resumed.sweep, 25)
        self.assertEqual(run_sweeps(resumed, 10).mask, run_sweeps(state, 10).mask)

    def test_foreign_couplings_rejected(self):
        region = strip()
        couplings = sample_couplings(CouplingLaw.uniform(0.0, 1.0), region.edges, 3)
        state = ChainState.start(region.edges, couplings, 1.0, 2.0, BoundaryCondition.free(), seed=8)
        with tempfile.TemporaryDirectory() as tmp:
            path = save_checkpoint(state, Path(tmp) / 'chain.json')
            other = sample_couplings(CouplingLaw.uniform(0.0, 1.0), region.edges, 4)
            with self.assertRaises(ProvenanceMismatch):
                load_checkpoint(path, other)


# ============================================================================
# Spin chains and estimators
# ============================================================================

class IsingChainTests(SimpleTestCase):

    def test_unknown_boundary(self):
        region = strip()
        with self.assertRaises(DomainValidationError):
            IsingChain(region, CouplingField.constant(region.edges, 1.0), 1.0, 'free', seed=0)

    def test_mixed_boundary_pins_the_interface(self):
        region = strip()
        chain = IsingChain(region, CouplingField.constant(region.edges, 1.0), 1.0, 'mixed', seed=0)
        estimate = correlation_estimate(chain, ((0, 0), (0, 1)), sweeps=40, batches=20, burn_in=0)
        self.assertEqual(estimate.mean, -1.0)
        self.assertEqual(estimate.stderr, 0.0)

    def test_correlation_matches_exact(self):
        region = strip(1.6)
        couplings = sample_couplings(CouplingLaw.uniform(0.3, 1.0), region.edges, 2)
        exact = exact_spin_correlations(region, couplings, 0.8, 'mixed').of(((0, 0), (0, 1)))
        chain = IsingChain(region, couplings, 0.8, 'mixed', seed=31)
        estimate = correlation_estimate(chain, ((0, 0), (0, 1)), sweeps=4000, batches=20, burn_in=50)
        self.assertLess(abs(estimate.mean - exact), 5 * estimate.stderr + 0.02)

    def test_edge_outside_region(self):
        region = strip()
        chain = IsingChain(region, CouplingField.constant(region.edges, 1.0), 1.0, 'plus', seed=0)
        with self.assertRaises(DomainValidationError):
            correlation_estimate(chain, ((7, 7), (7, 8)), sweeps=40, burn_in=0)

    def test_burn_in_covers_the_pilot_run(self):
        region = strip(1.6)
        couplings = sample_couplings(CouplingLaw.uniform(0.3, 1.0), region.edges, 5)
        chain = IsingChain(region, couplings, 0.8, 'plus', seed=3)
        burn_in = estimate_burn_in(chain, pilot_sweeps=200)
        self.assertGreaterEqual(burn_in, 200)
        self.assertEqual(chain.sweep, burn_in)


class BatchedMeansTests(SimpleTestCase):

    def test_constant_series(self):
        mean, stderr = batched_means(np.full(100, 0.25), 20)
        self.assertEqual(mean, 0.25)
        self.assertEqual(stderr, 0.0)

    def test_too_few_batches(self):
        with self.assertRaises(InsufficientSamples):
            batched_means(np.arange(100.0), 10)
        with self.assertRaises(InsufficientSamples):
            batched_means(np.arange(10.0), 20)

    def test_mean_of_iid_series(self):
        rng = np.random.default_rng(0)
        mean, stderr = batched_means(rng.normal(1.0, 1.0, size=20000), 20)
        self.assertLess(abs(mean - 1.0), 5 * stderr)
        self.assertAlmostEqual(stderr, 1.0 / np.sqrt(20000), delta=0.004)
