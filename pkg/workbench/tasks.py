"""
Celery tasks for the workbench.

Disorder replicas and coexistence chains are independent units of work;
each task takes a JSON payload and returns a JSON result so the same
service function runs in-process or on a worker.
"""

import logging
from celery import group, shared_task
from django.conf import settings

logger = logging.getLogger(__name__)


@shared_task(bind=True, name='workbench.tension_replica', max_retries=3)
def tension_replica_task(self, payload):
    """
    Surface tension of one disorder replica.

    Args:
        payload (dict): region spec, law spec, seed, beta, q and method

    Returns:
        dict: seed, tau, stderr, bias and method
    """
    from workbench.services.tension import tension_replica

    try:
        logger.debug(f"Tension replica seed={payload['seed']} ({payload['method']})")
        return tension_replica(payload)
    except Exception as e:
        logger.error(f"Tension replica seed={payload.get('seed')} failed: {str(e)}")
        raise


@shared_task(bind=True, name='workbench.flow_replica', max_retries=3)
def flow_replica_task(self, payload):
    """
    Maximal flow of one disorder replica.

    Returns:
        dict: seed, flow, mu and cut_size
    """
    from workbench.services.flow import flow_replica

    try:
        logger.debug(f"Flow replica seed={payload['seed']}")
        return flow_replica(payload)
    except Exception as e:
        logger.error(f"Flow replica seed={payload.get('seed')} failed: {str(e)}")
        raise


@shared_task(bind=True, name='workbench.coexistence_chain', max_retries=1)
def coexistence_chain_task(self, payload):
    """
    One conditioned spin chain with its profile and droplet fit.
    """
    from workbench.services.coexist import coexistence_chain

    try:
        logger.info(f"Coexistence chain seed={payload['seed']} N={payload['N']}")
        return coexistence_chain(payload)
    except Exception as e:
        logger.error(f"Coexistence chain seed={payload.get('seed')} failed: {str(e)}")
        raise


@shared_task(bind=True, name='workbench.run_config')
def run_config_task(self, config):
    """
    Dispatch a whole run config on a worker.

    Returns:
        dict: exit_status, manifest path and message
    """
    from workbench.services.run_dispatcher import dispatch

    result = dispatch(config)
    return {
        'exit_status': result.exit_status,
        'manifest_path': str(result.manifest_path) if result.manifest_path else None,
        'message': result.message,
    }


def run_group(task, payloads):
    """
    Fan payloads out to ``task`` and gather results in submission order.

    With CELERY_TASK_ALWAYS_EAGER the payloads run one after another in
    this process.
    """
    if not payloads:
        return []
    if getattr(settings, 'CELERY_TASK_ALWAYS_EAGER', True):
        return [task.apply(args=(payload,)).get() for payload in payloads]
    job = group(task.s(payload) for payload in payloads)
    return job.apply_async().get(disable_sync_subtasks=False)


def group_runner(task):
    """A runner for the services' ``runner=`` hook backed by ``task``."""
    return lambda payloads: run_group(task, payloads)
