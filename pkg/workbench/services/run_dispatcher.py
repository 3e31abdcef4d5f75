"""
Run Dispatcher

Validates a run config, runs one subcommand, writes its CSV outputs and a
JSON manifest next to them, and records the run in the database.

Exit statuses: 0 on success, 2 when the config or a precondition is
invalid, 3 on any other failure.
"""

import json
import logging
import math
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional

import numpy as np
from django.conf import settings

from ..exceptions import ConfigValidationError, DomainValidationError, EventUnreachable
from .csv_export_service import csv_export_service, sha256_of
from .disorder import derive_seed

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_FAILED = 3

MANIFEST_NAME = 'manifest.json'


@dataclass
class DispatchResult:
    exit_status: int
    message: str
    outputs: List[Dict] = field(default_factory=list)
    manifest_path: Optional[Path] = None
    summary: Dict = field(default_factory=dict)
    run_id: Optional[str] = None


@dataclass
class RunContext:
    """What a subcommand handler sees: the cleaned config and where to write."""

    config: Dict
    out_dir: Path
    version: str
    seed_ledger: Dict = field(default_factory=dict)
    outputs: List[Dict] = field(default_factory=list)

    @property
    def budgets(self) -> Dict:
        return self.config['budgets']

    def path(self, name: str) -> Path:
        return self.out_dir / name

    def add_output(self, info: Dict):
        path = Path(info['path'])
        kind = {'.csv': 'CSV', '.svg': 'SVG', '.json': 'JSON'}.get(path.suffix.lower(), 'CSV')
        self.outputs.append({
            'path': path.name,
            'kind': kind,
            'sha256': info.get('sha256') or sha256_of(path),
            'rows': info.get('rows'),
        })

    def write_rows(self, name: str, rows, fields=None, method=None):
        info = csv_export_service.write_rows(self.path(name), rows, self.version, fields=fields, method=method)
        self.add_output(info)
        return info


def jsonable(value):
    """Plain JSON types for manifests; non-finite floats become None."""
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, np.ndarray)):
        return [jsonable(v) for v in value]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    if isinstance(value, Path):
        return str(value)
    return value


def _runner(task_name: str):
    from workbench import tasks

    task = {
        'tension': tasks.tension_replica_task,
        'flow': tasks.flow_replica_task,
        'coexist': tasks.coexistence_chain_task,
    }[task_name]
    return tasks.group_runner(task)


def _direction_label(direction) -> str:
    return ' '.join(repr(float(c)) for c in direction.n)


# Subcommand handlers

def run_tension(ctx: RunContext) -> Dict:
    from .tension import quenched_tension, tension_replica

    c = ctx.config
    method = c.get('method') or 'exact'
    replicas = c.get('replicas') or 1
    ti_options = {}
    if method == 'thermo-integration':
        ti_options = {'beta_grid': c.get('beta_grid'), 'sweeps': ctx.budgets['sweeps'],
                      'batches': ctx.budgets['batches'], 'burn_in': ctx.budgets['burn_in']}
    center = c.get('center') or [0.0] * c['d']

    rows, summary = [], {'directions': []}
    for i, direction in enumerate(c['directions']):
        seed = derive_seed(c['seed'], i)
        if replicas >= 2:
            result = quenched_tension(c['law'], direction, c['L'], c['H'], c['beta'], c['q'], replicas,
                                      seed=seed, method=method, center=center, check_size=c['check_size'],
                                      ti_options=ti_options, runner=_runner('tension'))
            samples = list(zip(result.seeds, result.samples, result.errors))
            mean, stderr = result.mean, result.stderr
        else:
            payload = {
                'region': {'center': list(center), 'L': c['L'], 'H': c['H'], 'direction': direction.to_dict()},
                'check_size': c['check_size'],
                'law': c['law'].to_spec(),
                'seed': derive_seed(seed, 0),
                'beta': c['beta'],
                'q': c['q'],
                'method': method,
                **ti_options,
            }
            single = tension_replica(payload)
            samples = [(single['seed'], single['tau'], single['stderr'])]
            mean, stderr = single['tau'], single['stderr']

        ctx.seed_ledger[f'direction_{i}'] = [s for s, _, _ in samples]
        for replica_seed, tau, error in samples:
            rows.append({'seed': replica_seed, 'method': method, 'L': c['L'], 'H': c['H'],
                         'n': _direction_label(direction), 'beta': c['beta'], 'q': c['q'],
                         'tau': tau, 'stderr': error})
        summary['directions'].append({'n': list(direction.n), 'mean': mean, 'stderr': stderr,
                                      'replicas': len(samples)})

    ctx.write_rows('tension.csv', rows, fields=['L', 'H', 'n', 'beta', 'q', 'tau', 'stderr'])
    return summary


def run_flow(ctx: RunContext) -> Dict:
    from .flow import MIN_REPLICAS, flow_direction_sweep, jmin_gap

    c = ctx.config
    method = c.get('method') or 'maxflow'
    delta = c['delta'] if c.get('delta') is not None else 1.0
    replicas = c.get('replicas') or MIN_REPLICAS
    table = flow_direction_sweep(c['law'], c['N'], delta, c['directions'], replicas, seed=c['seed'],
                                 method=method, runner=_runner('flow'))

    rows = []
    for i, entry in enumerate(table):
        ctx.seed_ledger[f'direction_{i}'] = entry.seeds
        for replica_seed, mu, cut_size in zip(entry.seeds, entry.samples, entry.cut_sizes):
            rows.append({'seed': replica_seed, 'method': method, 'law': str(c['law']), 'N': c['N'],
                         'n': _direction_label(entry.direction), 'mu': mu, 'cut_size': cut_size,
                         'flow': mu * float(c['N']) ** (c['d'] - 1)})
    ctx.write_rows('flow.csv', rows, fields=['law', 'N', 'n', 'mu', 'cut_size', 'flow'])
    return {
        'directions': [{'n': list(e.direction.n), 'mean': e.mean, 'stderr': e.stderr} for e in table],
        'jmin_gap': jmin_gap(table, c['law']),
    }


def run_wulff(ctx: RunContext) -> Dict:
    from .wulff import (
        TensionFunction,
        cube_residual,
        diam_inf,
        export_svg,
        export_vertices_csv,
        is_convex_shape,
        load_tension_csv,
        reciprocity_check,
        wulff_construct,
    )

    c = ctx.config
    if c.get('tension_table'):
        tau = load_tension_csv(c['tension_table'])
        source = c['tension_table']
    elif c['tension'] == 'l1':
        tau = TensionFunction.l1(c['d'], size=ctx.budgets['grid_size'])
        source = 'l1'
    else:
        tau = TensionFunction.isotropic(c['d'], size=ctx.budgets['grid_size'])
        source = 'isotropic'

    shape = wulff_construct(tau)
    ctx.add_output(export_vertices_csv(shape, ctx.path('wulff_vertices.csv'), ctx.version, seed=c['seed']))
    if shape.d == 2:
        ctx.add_output({'path': export_svg(shape, ctx.path('wulff.svg'))})

    fit = diam_inf(shape, c.get('alpha'))
    return {
        'tension': source,
        'directions': len(tau),
        'vertices': len(shape.vertices),
        'volume': shape.volume,
        'scale': shape.scale,
        'reciprocity_residual': reciprocity_check(tau, shape),
        'cube_residual': cube_residual(shape),
        'convex': is_convex_shape(shape),
        'diam_inf': fit.diameter,
        'fits': fit.fits if fit.alpha is not None else None,
    }


def run_deviations(ctx: RunContext) -> Dict:
    from .deviations import (
        MIN_SAMPLES,
        Provenance,
        alpha_slope,
        annealed_tension,
        empirical_rate,
        legendre_residual,
        limit_ordering,
        local_curvature,
    )
    from .tension import quenched_tension

    c = ctx.config
    method = c.get('method') or 'exact'
    replicas = c.get('replicas') or MIN_SAMPLES
    direction = c['directions'][0]
    ti_options = {}
    if method == 'thermo-integration':
        ti_options = {'beta_grid': c.get('beta_grid'), 'sweeps': ctx.budgets['sweeps'],
                      'batches': ctx.budgets['batches'], 'burn_in': ctx.budgets['burn_in']}
    result = quenched_tension(c['law'], direction, c['L'], c['H'], c['beta'], c['q'], replicas,
                              seed=c['seed'], method=method, center=c.get('center'),
                              check_size=c['check_size'], ti_options=ti_options, runner=_runner('tension'))
    ctx.seed_ledger['replicas'] = result.seeds

    provenance = Provenance.of(result.region, c['beta'], c['q'])
    rate = empirical_rate(result.samples, provenance)
    annealed = annealed_tension(result.samples, provenance, c.get('lambdas'), rate=rate)

    ctx.write_rows('deviations_samples.csv',
                   ({'seed': s, 'method': method, 'tau': t} for s, t in zip(result.seeds, result.samples)),
                   fields=['tau'])
    ctx.add_output(csv_export_service.write_columns(
        ctx.path('deviations_rate.csv'), {'tau': rate.tau, 'I': rate.rate}, ctx.version, 'empirical-rate',
        seed=c['seed']))
    ctx.add_output(csv_export_service.write_columns(
        ctx.path('deviations_annealed.csv'),
        {'lambda': annealed.lambdas, 'tau_lambda': annealed.tau_lambda,
         'tau_hat_lo': annealed.tau_hat_low, 'tau_hat_hi': annealed.tau_hat_high},
        ctx.version, 'annealed', seed=c['seed']))

    return {
        'samples': len(result.samples),
        'mean': result.mean,
        'stderr': result.stderr,
        'legendre_residual': legendre_residual(rate, annealed),
        'alpha_slope': alpha_slope(annealed),
        'concave': annealed.is_concave(),
        'ordering': limit_ordering(annealed),
        'curvature': local_curvature(rate),
    }


def run_coexist(ctx: RunContext) -> Dict:
    """
    Conditioned chains on one disorder sample (seed branch 0). Without a
    configured m_hat, the magnetization run draws its own disorder from seed
    branch 2; m_beta is a disorder average, so the chains' couplings are not
    reused for it.
    """
    from .coexist import ENSEMBLE_CHAINS, estimate_magnetization
    from .wulff import TensionFunction, wulff_construct

    c = ctx.config
    N, d, K = c['N'], c['d'], c['K']
    budgets = ctx.budgets
    burn_in = budgets['burn_in'] or 0
    couplings_seed = derive_seed(c['seed'], 0)

    m_hat = c.get('m_hat')
    m_hat_stderr = None
    if m_hat is None:
        estimate = estimate_magnetization(N, c['law'], c['beta'], budgets['sweeps'], burn_in,
                                          batches=budgets['batches'], seed=derive_seed(c['seed'], 2), d=d)
        m_hat, m_hat_stderr = estimate.mean, estimate.stderr
        ctx.seed_ledger['magnetization'] = derive_seed(c['seed'], 2)
    if m_hat <= 0:
        raise EventUnreachable(f"m_hat={m_hat:.4f} is not positive; the plus phase is not ordered at beta={c['beta']}")

    tau = TensionFunction.l1(d) if c.get('tension') == 'l1' else TensionFunction.isotropic(d)
    shape = wulff_construct(tau)
    chains = budgets['chains'] or ENSEMBLE_CHAINS
    base = {'N': N, 'd': d, 'law': c['law'].to_spec(), 'couplings_seed': couplings_seed, 'beta': c['beta'],
            'alpha': c['alpha'], 'm_hat': m_hat, 'sweeps': budgets['sweeps'], 'burn_in': burn_in,
            'thin': budgets['thin'] or 1, 'K': K, 'shape': shape.vertices.tolist()}
    payloads = [dict(base, seed=derive_seed(c['seed'], 1, k), hot=k > 0) for k in range(chains)]
    results = _runner('coexist')(payloads)
    ctx.seed_ledger['couplings'] = couplings_seed
    ctx.seed_ledger['chains'] = [p['seed'] for p in payloads]

    rows = []
    for result in results:
        values = np.asarray(result['profile'], dtype=float)
        for index in np.ndindex(*values.shape):
            rows.append({'seed': result['seed'], 'method': 'conditioned-metropolis',
                         'block': ' '.join(str(i) for i in index), 'M_K': values[index]})
    ctx.write_rows('coexist_profile.csv', rows, fields=['block', 'M_K'])

    droplets = {
        'alpha': c['alpha'],
        'm_hat': m_hat,
        'm_hat_stderr': m_hat_stderr,
        'K': K,
        'N': N,
        'seeds': [r['seed'] for r in results],
        'fits': [r.get('fit') for r in results],
    }
    report_path = ctx.path('coexist_droplets.json')
    report_path.write_text(json.dumps(jsonable(droplets), indent=2, sort_keys=True) + '\n', encoding='utf-8')
    ctx.add_output({'path': report_path})

    distances = [r['fit']['distance'] for r in results if r.get('fit')]
    fractions = [r['minority_fraction'] for r in results]
    target = c['alpha'] ** d
    mean_fraction = float(np.mean(fractions)) if fractions else math.nan
    return {
        'm_hat': m_hat,
        'target_fraction': target,
        'minority_fraction': mean_fraction,
        'constraint_satisfied': all(r['max_magnetization_ratio'] <= 1 - 2 * target + 1e-12 for r in results)
        if c['alpha'] > 0 else True,
        'median_distance': float(np.median(distances)) if distances else None,
        'diagnostics': [r['diagnostics'] for r in results],
    }


def run_oracle_suite(ctx: RunContext) -> Dict:
    from .oracle_suite import run_oracle_suite as suite

    c = ctx.config
    report = suite(fixtures=ctx.budgets['fixtures'], seed=c['seed'])
    ctx.seed_ledger['fixtures'] = [row['seed'] for row in report.rows]
    ctx.write_rows('oracle_suite.csv', report.rows,
                   fields=['fixture', 'edges', 'bc', 'beta', 'q', 'tau', 'flow'])
    return {'fixtures': report.fixtures, 'checks': report.checks, 'worst_margin': report.worst}


HANDLERS: Dict[str, Callable[[RunContext], Dict]] = {
    'tension': run_tension,
    'flow': run_flow,
    'wulff': run_wulff,
    'deviations': run_deviations,
    'coexist': run_coexist,
    'oracle-suite': run_oracle_suite,
}


def dispatch(config: Dict, seed: Optional[int] = None, out: Optional[str] = None) -> DispatchResult:
    """
    Validate and run one config.

    Args:
        config: The run config document.
        seed: Overrides the config's seed.
        out: Overrides the config's output directory.

    Returns:
        DispatchResult with the exit status, written outputs and manifest path
    """
    from workbench.forms import parse_run_config

    started = time.perf_counter()
    run_id = str(uuid.uuid4())
    config = dict(config) if isinstance(config, dict) else config
    if isinstance(config, dict):
        if seed is not None:
            config['seed'] = seed
        if out is not None:
            config['out'] = out

    try:
        cleaned = parse_run_config(config)
    except ConfigValidationError as e:
        logger.warning(f"Rejected run config: {e.errors}")
        result = DispatchResult(exit_status=EXIT_INVALID, message=str(e), summary={'errors': e.errors},
                                run_id=run_id)
        _persist(result, config if isinstance(config, dict) else {}, None, {}, started)
        return result

    subcommand = cleaned['subcommand']
    out_dir = Path(cleaned.get('out') or settings.DILUTELAB_OUTPUT_DIR)
    out_dir.mkdir(parents=True, exist_ok=True)
    ctx = RunContext(config=cleaned, out_dir=out_dir, version=settings.DILUTELAB_VERSION)

    logger.info(f"Dispatching {subcommand} run {run_id} (seed={cleaned['seed']}) into {out_dir}")
    try:
        summary = HANDLERS[subcommand](ctx)
        exit_status, message = EXIT_OK, f"{subcommand} finished with {len(ctx.outputs)} outputs"
    except DomainValidationError as e:
        logger.warning(f"{subcommand} run {run_id} rejected: {str(e)}")
        summary, exit_status, message = {'error': str(e)}, EXIT_INVALID, f"{type(e).__name__}: {str(e)}"
    except Exception as e:
        logger.error(f"{subcommand} run {run_id} failed: {str(e)}", exc_info=True)
        summary, exit_status, message = {'error': str(e)}, EXIT_FAILED, f"{type(e).__name__}: {str(e)}"

    wall_clock = time.perf_counter() - started
    manifest = {
        'run_id': run_id,
        'subcommand': subcommand,
        'config': config,
        'version': ctx.version,
        'seed': cleaned['seed'],
        'seed_ledger': ctx.seed_ledger,
        'outputs': ctx.outputs,
        'summary': summary,
        'exit_status': exit_status,
        'wall_clock_seconds': wall_clock,
    }
    manifest_path = out_dir / MANIFEST_NAME
    manifest_path.write_text(json.dumps(jsonable(manifest), indent=2, sort_keys=True) + '\n', encoding='utf-8')
    logger.info(f"Manifest for run {run_id} written to {manifest_path} (exit {exit_status}, {wall_clock:.2f}s)")

    result = DispatchResult(exit_status=exit_status, message=message, outputs=ctx.outputs,
                            manifest_path=manifest_path, summary=jsonable(summary), run_id=run_id)
    _persist(result, config, cleaned, ctx.seed_ledger, started, out_dir=out_dir)
    return result


def replay(manifest_path) -> DispatchResult:
    """Re-run the config recorded in a manifest into the same directory."""
    manifest = json.loads(Path(manifest_path).read_text(encoding='utf-8'))
    return dispatch(manifest['config'])


def _persist(result: DispatchResult, config: Dict, cleaned: Optional[Dict], seed_ledger: Dict,
             started: float, out_dir: Optional[Path] = None):
    """Record the run; failures here never change the exit status."""
    from workbench.models import RunManifest, RunOutput

    status = {EXIT_OK: 'SUCCEEDED', EXIT_INVALID: 'INVALID'}.get(result.exit_status, 'FAILED')
    try:
        manifest = RunManifest.objects.create(
            run_id=result.run_id,
            subcommand=(cleaned or {}).get('subcommand') or str(config.get('subcommand', ''))[:20],
            config=jsonable(config),
            version=settings.DILUTELAB_VERSION,
            seed=(cleaned or {}).get('seed') or 0,
            seed_ledger=jsonable(seed_ledger),
            summary=result.summary,
            status=status,
            exit_status=result.exit_status,
            wall_clock_seconds=time.perf_counter() - started,
            output_dir=str(out_dir or ''),
            error_message=None if result.exit_status == EXIT_OK else result.message,
        )
        for output in result.outputs:
            RunOutput.objects.create(manifest=manifest, path=output['path'], kind=output['kind'],
                                     sha256=output['sha256'], rows=output.get('rows'))
    except Exception as e:
        logger.error(f"Could not record run {result.run_id}: {str(e)}")
