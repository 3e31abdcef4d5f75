"""
Tests for phase coexistence: the conditioned plus-boundary chain, block
profiles and the fit of translated crystals.
"""

import math

import numpy as np
from django.test import SimpleTestCase
from hypothesis import given, settings, strategies as st
from hypothesis.extra.django import TestCase as HypothesisTestCase

from workbench.exceptions import BadK, EmptyTranslateSet, EventUnreachable, InvalidParameter, TooLarge
from workbench.services.coexist import (
    CoexistenceChain,
    box_edges,
    box_sites,
    central_magnetization,
    coexistence_chain,
    conditioned_sampler,
    droplet_fit,
    droplet_indicator,
    ensemble_agreement,
    estimate_magnetization,
    exact_conditional_marginals,
    minority_fraction,
    profile,
    volume_fraction_sensitivity,
)
from workbench.services.disorder import CouplingField, CouplingLaw, derive_seed, sample_couplings
from workbench.services.rc_mc import Estimate
from workbench.services.wulff import TensionFunction, wulff_construct


def unit_square():
    return wulff_construct(TensionFunction.l1(2))


# ============================================================================
# Conditioned chain
# ============================================================================

class BoxTests(SimpleTestCase):

    def test_sites_and_edges(self):
        self.assertEqual(len(box_sites(3)), 9)
        self.assertEqual(box_sites(2)[0], (1, 1))
        self.assertEqual(len(box_edges(2)), 12)
        self.assertEqual(len(box_edges(4)), 2 * 4 * 5)
        self.assertEqual(len(box_edges(2, d=3)), 3 * 4 * 3)

    def test_energy_counts_exterior_edges_once(self):
        couplings = CouplingField.constant(box_edges(2), 1.0)
        chain = CoexistenceChain(2, couplings, 1.0, 0.0, 1.0, seed=0)
        self.assertEqual(chain.energy(), 6.0)
        self.assertEqual(chain.magnetization, 1.0)


class CoexistenceChainTests(SimpleTestCase):

    def test_starts_inside_the_event(self):
        couplings = CouplingField.constant(box_edges(6), 1.0)
        chain = CoexistenceChain(6, couplings, 0.6, 0.5, 0.8, seed=1)
        self.assertAlmostEqual(chain.threshold, 0.5)
        self.assertLessEqual(chain.magnetization / 0.8, 0.5)
        self.assertEqual(chain.total, 14)

    def test_unreachable_event(self):
        couplings = CouplingField.constant(box_edges(3), 1.0)
        with self.assertRaises(EventUnreachable):
            CoexistenceChain(3, couplings, 0.6, 1.1, 1.0, seed=1)

    def test_parameter_checks(self):
        couplings = CouplingField.constant(box_edges(3), 1.0)
        with self.assertRaises(InvalidParameter):
            CoexistenceChain(0, couplings, 0.6, 0.5, 0.8, seed=1)
        with self.assertRaises(InvalidParameter):
            CoexistenceChain(3, couplings, -0.1, 0.5, 0.8, seed=1)

    def test_unconstrained_without_alpha(self):
        couplings = CouplingField.constant(box_edges(4), 1.0)
        chain = CoexistenceChain(4, couplings, 0.6, 0.0, 0.8, seed=1)
        self.assertEqual(chain.threshold, math.inf)
        self.assertEqual(chain.total, 16)

    def test_reproducible(self):
        couplings = sample_couplings(CouplingLaw.dilution('4/5'), box_edges(5), 2)
        first = CoexistenceChain(5, couplings, 0.7, 0.4, 0.9, seed=3)
        second = CoexistenceChain(5, couplings, 0.7, 0.4, 0.9, seed=3)
        for a, b in zip(first.run(30), second.run(30)):
            np.testing.assert_array_equal(a.spins, b.spins)
        self.assertEqual(first.diagnostics(), second.diagnostics())

    def test_diagnostics(self):
        couplings = CouplingField.constant(box_edges(5), 1.0)
        chain = CoexistenceChain(5, couplings, 0.8, 0.5, 0.9, seed=4)
        samples = list(chain.run(40, burn_in=10))
        self.assertEqual(len(samples), 40)
        report = chain.diagnostics()
        self.assertEqual(report['sweeps'], 50)
        self.assertTrue(0.0 <= report['acceptance'] <= 1.0)
        self.assertTrue(0.0 <= report['event_boundary_hit_rate'] <= 1.0)
        self.assertGreaterEqual(report['energy_autocorrelation'], 1.0)

    def test_matches_exact_conditional_marginals(self):
        couplings = sample_couplings(CouplingLaw.uniform(0.5, 1.0), box_edges(3), 11)
        exact = exact_conditional_marginals(3, couplings, 0.4, 0.5, 0.8)
        self.assertLessEqual(exact.sum(), (3 + 9) / 2 + 1e-9)

        chain = CoexistenceChain(3, couplings, 0.4, 0.5, 0.8, seed=7)
        counts = np.zeros(9)
        sweeps = 20000
        for sample in chain.run(sweeps, burn_in=500):
            counts += (sample.spins.reshape(-1) == 1)
        np.testing.assert_allclose(counts / sweeps, exact, atol=0.04)


class ConditionedSamplerPropertyTests(HypothesisTestCase):

    @given(
        seed=st.integers(min_value=0, max_value=10**6),
        alpha=st.floats(min_value=0.1, max_value=0.6),
        beta=st.floats(min_value=0.0, max_value=1.5),
    )
    @settings(max_examples=10, deadline=None)
    def test_every_sample_lies_in_the_event(self, seed, alpha, beta):
        m_hat = 0.85
        for sample in conditioned_sampler(6, CouplingLaw.dilution('9/10'), beta, alpha, m_hat,
                                          sweeps=20, seed=seed):
            self.assertLessEqual(sample.magnetization / m_hat, 1.0 - 2.0 * alpha ** 2 + 1e-12)
            self.assertEqual(sample.bc, 'plus')


class ExactMarginalTests(SimpleTestCase):

    def test_free_spins_are_fair_coins(self):
        couplings = CouplingField.constant(box_edges(2), 0.0)
        np.testing.assert_allclose(exact_conditional_marginals(2, couplings, 1.0, 0.0, 1.0), 0.5)

    def test_plus_boundary_favours_plus(self):
        couplings = CouplingField.constant(box_edges(3), 1.0)
        self.assertTrue(np.all(exact_conditional_marginals(3, couplings, 0.5, 0.0, 1.0) > 0.5))

    def test_cap(self):
        with self.assertRaises(TooLarge):
            exact_conditional_marginals(5, CouplingField.constant(box_edges(5), 1.0), 0.5, 0.0, 1.0)


class MagnetizationTests(SimpleTestCase):

    def test_central_window(self):
        spins = np.ones((8, 8))
        spins[2:6, 2:6] = -1
        self.assertEqual(central_magnetization(spins), -1.0)
        self.assertEqual(central_magnetization(np.array([[1]])), 1.0)

    def test_cold_plus_phase(self):
        estimate = estimate_magnetization(6, CouplingLaw.constant(1), 3.0, sweeps=200, burn_in=0, seed=2)
        self.assertGreater(estimate.mean, 0.95)
        self.assertEqual(estimate.samples, 200)
        again = estimate_magnetization(6, CouplingLaw.constant(1), 3.0, sweeps=200, burn_in=0, seed=2)
        self.assertEqual(estimate, again)


# ============================================================================
# Profiles and droplets
# ============================================================================

class ProfileTests(SimpleTestCase):

    def test_block_averages(self):
        spins = np.ones((4, 4))
        spins[:2, :] = -1
        result = profile(spins, 2)
        np.testing.assert_array_equal(result.values, [[-1.0, -1.0], [1.0, 1.0]])
        self.assertEqual(result.remainder, 0)
        np.testing.assert_allclose(result.block_centers(), [[0.25, 0.25], [0.25, 0.75], [0.75, 0.25], [0.75, 0.75]])
        self.assertEqual(minority_fraction(result, 0.9), 0.5)

    def test_remainder_is_dropped(self):
        result = profile(np.ones((5, 5)), 2)
        self.assertEqual(result.blocks, 2)
        self.assertEqual(result.remainder, 1)

    def test_bad_block_side(self):
        with self.assertRaises(BadK):
            profile(np.ones((4, 4)), 0)
        with self.assertRaises(BadK):
            profile(np.ones((4, 4)), 5)


class DropletFitTests(SimpleTestCase):

    def setUp(self):
        self.shape = unit_square()
        self.spins = np.ones((8, 8))
        self.spins[2:6, 2:6] = -1

    def test_indicator(self):
        centers = np.array([[0.5, 0.5], [0.1, 0.5]])
        np.testing.assert_array_equal(droplet_indicator(centers, self.shape, 0.5, (0.5, 0.5)), [-1.0, 1.0])
        np.testing.assert_array_equal(droplet_indicator(centers, self.shape, 0.0, (0.5, 0.5)), [1.0, 1.0])

    def test_centered_droplet_is_found(self):
        fit = droplet_fit(profile(self.spins, 1), 1.0, 0.5, self.shape)
        self.assertEqual(fit.z, (0.5, 0.5))
        self.assertAlmostEqual(fit.distance, 0.0, places=12)
        self.assertEqual(fit.translates, 25)

    def test_shifted_droplet_costs_mass(self):
        shifted = np.roll(self.spins, 1, axis=0)
        fit = droplet_fit(profile(shifted, 1), 1.0, 0.5, self.shape)
        self.assertEqual(fit.z, (0.625, 0.5))
        self.assertAlmostEqual(fit.distance, 0.0, places=12)

    def test_crystal_too_large(self):
        with self.assertRaises(EmptyTranslateSet):
            droplet_fit(profile(self.spins, 1), 1.0, 1.5, self.shape)


# ============================================================================
# Chain payloads and ensembles
# ============================================================================

class CoexistencePayloadTests(SimpleTestCase):

    def payload(self, **overrides):
        payload = {
            'N': 6, 'law': CouplingLaw.constant(1).to_spec(), 'couplings_seed': 4, 'beta': 0.6,
            'alpha': 0.5, 'm_hat': 0.8, 'sweeps': 40, 'K': 2, 'seed': 3,
            'shape': unit_square().vertices.tolist(),
        }
        payload.update(overrides)
        return payload

    def test_result_fields(self):
        result = coexistence_chain(self.payload())
        self.assertEqual(result['seed'], 3)
        self.assertEqual(result['samples'], 40)
        self.assertLessEqual(result['max_magnetization_ratio'], 0.5 + 1e-12)
        self.assertTrue(0.0 <= result['minority_fraction'] <= 1.0)
        self.assertEqual(np.array(result['profile']).shape, (3, 3))
        self.assertGreaterEqual(result['fit']['distance'], 0.0)
        self.assertEqual(result['diagnostics']['sweeps'], 40)
        self.assertEqual(result, coexistence_chain(self.payload()))

    def test_fit_is_optional(self):
        self.assertNotIn('fit', coexistence_chain(self.payload(shape=None)))


class EnsembleTests(SimpleTestCase):

    def test_hot_restart_ensemble(self):
        seen = []

        def runner(payloads):
            seen.extend(payloads)
            return [coexistence_chain(p) for p in payloads]

        report = ensemble_agreement(8, CouplingLaw.constant(1), 0.8, 0.5, 0.9, unit_square(), K=2,
                                    sweeps=30, seed=5, runner=runner)
        self.assertEqual(len(report['centers']), 8)
        self.assertEqual(report['tolerance'], 0.5)
        self.assertEqual(report['agree'], report['spread'] <= report['tolerance'])
        self.assertEqual([p['seed'] for p in seen], [derive_seed(5, 1, c) for c in range(8)])
        self.assertTrue(all(p['hot'] for p in seen))
        self.assertEqual({p['couplings_seed'] for p in seen}, {derive_seed(5, 0)})

    def test_volume_fraction_sensitivity(self):
        seen = []

        def runner(payloads):
            seen.extend(payloads)
            return [{'minority_fraction': 0.26} for _ in payloads]

        m_hat = Estimate(mean=0.8, stderr=0.01, batches=20, samples=100)
        rows = volume_fraction_sensitivity(8, CouplingLaw.constant(1), 0.8, 0.5, m_hat, K=2, sweeps=10,
                                           runner=runner)
        self.assertEqual([r['shift'] for r in rows], [-1.0, 0.0, 1.0])
        np.testing.assert_allclose([p['m_hat'] for p in seen], [0.79, 0.8, 0.81])
        for row in rows:
            self.assertEqual(row['target'], 0.25)
            self.assertAlmostEqual(row['relative_error'], 0.04)
            self.assertTrue(row['consistent'])

    def test_zero_alpha_has_no_target(self):
        m_hat = Estimate(mean=0.8, stderr=0.0, batches=20, samples=100)
        rows = volume_fraction_sensitivity(8, CouplingLaw.constant(1), 0.8, 0.0, m_hat, K=2, sweeps=10,
                                           runner=lambda payloads: [{'minority_fraction': 0.0} for _ in payloads])
        self.assertTrue(math.isnan(rows[0]['relative_error']))
        self.assertFalse(rows[0]['consistent'])
