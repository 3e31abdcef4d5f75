"""
Tests for the command surface: config validation, dispatch with its exit
statuses and manifests, replay, run records and the management commands.
"""

import csv
import json
import math
import tempfile
from io import StringIO
from pathlib import Path
from unittest.mock import patch

import numpy as np
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase, TestCase

from workbench.exceptions import ConfigValidationError
from workbench.forms import BUDGET_DEFAULTS, parse_run_config
from workbench.models import RunManifest, RunOutput
from workbench.services.csv_export_service import csv_export_service, format_value, sha256_of
from workbench.services.disorder import derive_seed
from workbench.services.oracle_suite import run_oracle_suite
from workbench.services.run_dispatcher import (
    EXIT_FAILED,
    EXIT_INVALID,
    EXIT_OK,
    MANIFEST_NAME,
    dispatch,
    jsonable,
    replay,
)

CONSTANT = {'kind': 'constant', 'value': 1}


def exact_tension_config(**overrides):
    config = {
        'subcommand': 'tension',
        'law': CONSTANT,
        'beta': 0.8,
        'L': 3.0,
        'H': 1.1,
        'center': [0.0, 0.5],
        'directions': [[0, 1]],
        'check_size': False,
    }
    config.update(overrides)
    return config


def read_csv(path):
    with Path(path).open(encoding='utf-8', newline='') as fh:
        return list(csv.DictReader(fh))


class OutDirMixin:

    def setUp(self):
        super().setUp()
        tmp = tempfile.TemporaryDirectory()
        self.addCleanup(tmp.cleanup)
        self.out = Path(tmp.name)


# ============================================================================
# Config validation
# ============================================================================

class RunConfigFormTests(SimpleTestCase):

    def errors_of(self, config):
        with self.assertRaises(ConfigValidationError) as raised:
            parse_run_config(config)
        return raised.exception.errors

    def test_defaults(self):
        cleaned = parse_run_config(exact_tension_config())
        self.assertEqual(cleaned['d'], 2)
        self.assertEqual(cleaned['seed'], 0)
        self.assertEqual(cleaned['q'], 2.0)
        self.assertEqual(cleaned['budgets'], BUDGET_DEFAULTS)
        self.assertFalse(cleaned['check_size'])
        np.testing.assert_allclose(cleaned['directions'][0].n, [0.0, 1.0])
        self.assertEqual(cleaned['law'].kind, 'constant')

    def test_unknown_key(self):
        errors = self.errors_of(exact_tension_config(temperature=3))
        self.assertIn("Unknown configuration key 'temperature'.", errors['__all__'])

    def test_negative_beta(self):
        self.assertIn('beta', self.errors_of(exact_tension_config(beta=-1.0)))

    def test_required_keys(self):
        errors = self.errors_of({'subcommand': 'flow'})
        self.assertIn('law', errors)
        self.assertIn('N', errors)
        self.assertIn('tension', self.errors_of({'subcommand': 'wulff'}))

    def test_bad_law(self):
        self.assertIn('law', self.errors_of(exact_tension_config(law={'kind': 'gaussian'})))
        self.assertIn('law', self.errors_of(exact_tension_config(law={'kind': 'dilution', 'p': 1.5})))

    def test_method_must_match_subcommand(self):
        self.assertIn('method', self.errors_of(exact_tension_config(method='maxflow')))

    def test_beta_grid_must_end_at_beta(self):
        self.assertIn('beta_grid', self.errors_of(exact_tension_config(beta_grid=[0.0, 0.5])))

    def test_budgets(self):
        cleaned = parse_run_config(exact_tension_config(budgets={'sweeps': 500}))
        self.assertEqual(cleaned['budgets']['sweeps'], 500)
        self.assertEqual(cleaned['budgets']['batches'], BUDGET_DEFAULTS['batches'])
        self.assertIn('budgets', self.errors_of(exact_tension_config(budgets={'walltime': 5})))
        self.assertIn('budgets', self.errors_of(exact_tension_config(budgets={'sweeps': -1})))

    def test_direction_forms(self):
        cleaned = parse_run_config(exact_tension_config(directions=['axis', 'diagonal', 0.0]))
        np.testing.assert_allclose(cleaned['directions'][0].n, [1.0, 0.0])
        np.testing.assert_allclose(cleaned['directions'][1].n, [math.sqrt(0.5)] * 2)
        np.testing.assert_allclose(cleaned['directions'][2].n, [1.0, 0.0], atol=1e-12)
        self.assertIn('directions', self.errors_of(exact_tension_config(directions=[[1, 0, 0]])))
        self.assertIn('directions', self.errors_of(exact_tension_config(d=3, directions=[0.5])))

    def test_not_an_object(self):
        self.assertIn('__all__', self.errors_of(['tension']))


class ExportHelperTests(SimpleTestCase):

    def test_format_value(self):
        self.assertEqual(format_value(None), '')
        self.assertEqual(format_value(True), 'true')
        self.assertEqual(format_value(float('nan')), 'nan')
        self.assertEqual(format_value(0.1), '0.1')
        self.assertEqual(format_value(np.int64(7)), '7')
        self.assertEqual(format_value([0.0, 1.0]), '0.0 1.0')

    def test_columns_must_have_equal_lengths(self):
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertRaises(ValueError):
                csv_export_service.write_columns(Path(tmp) / 'x.csv', {'a': [1, 2], 'b': [1]}, '1.0.0', 'm')

    def test_rows_carry_leading_columns(self):
        with tempfile.TemporaryDirectory() as tmp:
            info = csv_export_service.write_rows(Path(tmp) / 'rows.csv', [{'seed': 3, 'tau': 0.5}], '1.0.0',
                                                 method='exact')
            self.assertEqual(info['rows'], 1)
            self.assertEqual(info['sha256'], sha256_of(info['path']))
            self.assertEqual(info['path'].read_text(encoding='utf-8'), 'seed,method,version,tau\n3,exact,1.0.0,0.5\n')

    def test_jsonable(self):
        self.assertEqual(jsonable({'a': np.float64('inf'), 1: (np.int64(2), np.bool_(True))}),
                         {'a': None, '1': [2, True]})


# ============================================================================
# Dispatch
# ============================================================================

class DispatchTests(OutDirMixin, TestCase):

    def test_exact_tension_run(self):
        result = dispatch(exact_tension_config(), out=str(self.out))
        self.assertEqual(result.exit_status, EXIT_OK, result.message)
        rows = read_csv(self.out / 'tension.csv')
        self.assertEqual(list(rows[0]), ['seed', 'method', 'version', 'L', 'H', 'n', 'beta', 'q', 'tau', 'stderr'])
        self.assertEqual(len(rows), 1)
        self.assertEqual(rows[0]['method'], 'exact')
        self.assertEqual(rows[0]['version'], '1.0.0')
        self.assertEqual(int(rows[0]['seed']), derive_seed(derive_seed(0, 0), 0))
        self.assertAlmostEqual(float(rows[0]['tau']), 0.8, places=12)

        manifest = json.loads((self.out / MANIFEST_NAME).read_text(encoding='utf-8'))
        self.assertEqual(manifest['exit_status'], 0)
        self.assertEqual(manifest['config']['out'], str(self.out))
        self.assertEqual(manifest['outputs'][0]['sha256'], sha256_of(self.out / 'tension.csv'))
        self.assertEqual(manifest['seed_ledger']['direction_0'], [int(rows[0]['seed'])])

    def test_replay_is_byte_identical(self):
        first = dispatch(exact_tension_config(seed=9), out=str(self.out))
        self.assertEqual(first.exit_status, EXIT_OK, first.message)
        before = (self.out / 'tension.csv').read_bytes()

        again = replay(first.manifest_path)
        self.assertEqual(again.exit_status, EXIT_OK)
        self.assertEqual([o['sha256'] for o in again.outputs], [o['sha256'] for o in first.outputs])
        self.assertEqual((self.out / 'tension.csv').read_bytes(), before)

    def test_flow_run_with_constant_capacities(self):
        config = {'subcommand': 'flow', 'law': CONSTANT, 'N': 32, 'replicas': 8}
        result = dispatch(config, seed=2, out=str(self.out))
        self.assertEqual(result.exit_status, EXIT_OK, result.message)
        rows = read_csv(self.out / 'flow.csv')
        self.assertEqual(len(rows), 8)
        self.assertEqual(list(rows[0]),
                         ['seed', 'method', 'version', 'law', 'N', 'n', 'mu', 'cut_size', 'flow'])
        for row in rows:
            self.assertAlmostEqual(float(row['mu']), 1.0, places=9)
            self.assertEqual(int(row['cut_size']), 32)
        self.assertEqual([int(r['seed']) for r in rows], [derive_seed(2, 0, k) for k in range(8)])
        self.assertAlmostEqual(result.summary['jmin_gap'][0]['gap'], 0.0, places=9)

    def test_wulff_run(self):
        result = dispatch({'subcommand': 'wulff', 'tension': 'l1', 'alpha': 0.5}, out=str(self.out))
        self.assertEqual(result.exit_status, EXIT_OK, result.message)
        self.assertEqual({o['kind'] for o in result.outputs}, {'CSV', 'SVG'})
        self.assertAlmostEqual(result.summary['volume'], 1.0, places=9)
        self.assertTrue(result.summary['fits'])

    def test_invalid_config_exits_two(self):
        result = dispatch(exact_tension_config(beta=-1.0), out=str(self.out))
        self.assertEqual(result.exit_status, EXIT_INVALID)
        self.assertIn('beta', result.summary['errors'])
        self.assertIsNone(result.manifest_path)
        self.assertEqual(RunManifest.objects.get(run_id=result.run_id).status, 'INVALID')

    def test_domain_precondition_exits_two(self):
        result = dispatch(exact_tension_config(check_size=True), out=str(self.out))
        self.assertEqual(result.exit_status, EXIT_INVALID)
        self.assertTrue(result.message.startswith('SizeTooSmall'))
        self.assertTrue((self.out / MANIFEST_NAME).exists())

    def test_runtime_failure_exits_three(self):
        config = {'subcommand': 'coexist', 'law': CONSTANT, 'beta': 0.8, 'N': 4, 'alpha': 0.3, 'K': 2,
                  'm_hat': 0.0}
        result = dispatch(config, out=str(self.out))
        self.assertEqual(result.exit_status, EXIT_FAILED)
        self.assertTrue(result.message.startswith('EventUnreachable'))
        record = RunManifest.objects.get(run_id=result.run_id)
        self.assertEqual(record.status, 'FAILED')
        self.assertEqual(record.exit_status, EXIT_FAILED)

    def test_run_is_recorded(self):
        result = dispatch(exact_tension_config(), out=str(self.out))
        record = RunManifest.objects.get(run_id=result.run_id)
        self.assertEqual(record.subcommand, 'tension')
        self.assertEqual(record.status, 'SUCCEEDED')
        self.assertEqual(record.output_dir, str(self.out))
        output = RunOutput.objects.get(manifest=record)
        self.assertEqual(output.path, 'tension.csv')
        self.assertEqual(output.kind, 'CSV')
        self.assertEqual(output.rows, 1)
        self.assertEqual(output.sha256, sha256_of(self.out / 'tension.csv'))

    def test_record_failure_keeps_the_exit_status(self):
        with patch.object(RunManifest.objects, 'create', side_effect=RuntimeError('database is locked')):
            result = dispatch(exact_tension_config(), out=str(self.out))
        self.assertEqual(result.exit_status, EXIT_OK)
        self.assertFalse(RunManifest.objects.exists())

    def test_coexist_run(self):
        config = {'subcommand': 'coexist', 'law': CONSTANT, 'beta': 0.8, 'N': 8, 'alpha': 0.4, 'K': 2,
                  'm_hat': 0.9, 'tension': 'l1', 'budgets': {'sweeps': 20, 'chains': 2}}
        result = dispatch(config, out=str(self.out))
        self.assertEqual(result.exit_status, EXIT_OK, result.message)
        self.assertTrue(result.summary['constraint_satisfied'])
        self.assertEqual(len(read_csv(self.out / 'coexist_profile.csv')), 2 * 16)
        droplets = json.loads((self.out / 'coexist_droplets.json').read_text(encoding='utf-8'))
        self.assertEqual(droplets['seeds'], [derive_seed(0, 1, k) for k in range(2)])

    def test_coexist_estimates_m_hat_on_separate_disorder(self):
        config = {'subcommand': 'coexist', 'law': CONSTANT, 'beta': 2.0, 'N': 4, 'alpha': 0.3, 'K': 2,
                  'budgets': {'sweeps': 40, 'chains': 2}}
        result = dispatch(config, out=str(self.out))
        self.assertEqual(result.exit_status, EXIT_OK, result.message)
        ledger = json.loads((self.out / MANIFEST_NAME).read_text(encoding='utf-8'))['seed_ledger']
        self.assertEqual(ledger['magnetization'], derive_seed(0, 2))
        self.assertEqual(ledger['couplings'], derive_seed(0, 0))
        self.assertNotEqual(ledger['magnetization'], ledger['couplings'])
        droplets = json.loads((self.out / 'coexist_droplets.json').read_text(encoding='utf-8'))
        self.assertGreater(droplets['m_hat'], 0.0)
        self.assertIsNotNone(droplets['m_hat_stderr'])


# ============================================================================
# Oracle suite
# ============================================================================

class OracleSuiteTests(OutDirMixin, TestCase):

    def test_suite_passes(self):
        report = run_oracle_suite(fixtures=50, seed=1)
        self.assertEqual(len(report.rows), 50)
        for name in ('normalization', 'fkg', 'dlr', 'monotone_j', 'monotone_beta', 'monotone_bc',
                     'tension_j', 'tension_beta', 'tension_h', 'flow_duality'):
            self.assertGreater(report.checks[name], 0)
        self.assertEqual(report.checks['fkg'], 150)

    def test_too_few_fixtures_exits_two(self):
        result = dispatch({'subcommand': 'oracle-suite', 'budgets': {'fixtures': 10}}, out=str(self.out))
        self.assertEqual(result.exit_status, EXIT_INVALID)
        self.assertTrue(result.message.startswith('InvalidParameter'))


# ============================================================================
# Management commands
# ============================================================================

class CommandTests(OutDirMixin, TestCase):

    def write_config(self, config, name='config.json'):
        path = self.out / name
        path.write_text(json.dumps(config), encoding='utf-8')
        return str(path)

    def test_tension_command(self):
        config = exact_tension_config()
        del config['subcommand']
        stdout = StringIO()
        call_command('tension', config=self.write_config(config), out=str(self.out / 'run'), stdout=stdout)
        self.assertIn('tension.csv', stdout.getvalue())
        self.assertTrue((self.out / 'run' / MANIFEST_NAME).exists())

    def test_failure_status_is_the_return_code(self):
        with self.assertRaises(CommandError) as raised:
            call_command('tension', config=self.write_config(exact_tension_config(beta=-1.0)),
                         out=str(self.out), stdout=StringIO())
        self.assertEqual(raised.exception.returncode, EXIT_INVALID)

    def test_config_for_another_subcommand(self):
        with self.assertRaises(CommandError) as raised:
            call_command('flow', config=self.write_config(exact_tension_config()), stdout=StringIO())
        self.assertEqual(raised.exception.returncode, EXIT_INVALID)

    def test_missing_config_file(self):
        with self.assertRaises(CommandError) as raised:
            call_command('wulff', config=str(self.out / 'absent.json'), stdout=StringIO())
        self.assertEqual(raised.exception.returncode, EXIT_INVALID)

    def test_oracle_suite_fixture_floor(self):
        with self.assertRaises(CommandError) as raised:
            call_command('oracle_suite', fixtures=10, out=str(self.out), stdout=StringIO())
        self.assertEqual(raised.exception.returncode, EXIT_INVALID)

    def test_run_config_and_replay(self):
        run_dir = self.out / 'run'
        call_command('run_config', config=self.write_config(exact_tension_config(out=str(run_dir))),
                     stdout=StringIO())
        before = sha256_of(run_dir / 'tension.csv')
        call_command('run_config', replay=str(run_dir / MANIFEST_NAME), stdout=StringIO())
        self.assertEqual(sha256_of(run_dir / 'tension.csv'), before)
        self.assertEqual(RunManifest.objects.filter(subcommand='tension').count(), 2)

    def test_run_config_needs_an_input(self):
        with self.assertRaises(CommandError) as raised:
            call_command('run_config', stdout=StringIO())
        self.assertEqual(raised.exception.returncode, EXIT_INVALID)
