"""
Celery configuration for the dilutelab project.

Disorder replicas, direction sweeps and coexistence chains are independent
units of work; the workbench fans them out as Celery tasks. With
CELERY_TASK_ALWAYS_EAGER (the default) they execute in-process.
"""

import logging
import os

from celery import Celery
from celery.signals import task_failure, task_success, worker_ready

logger = logging.getLogger(__name__)

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'dilutelab.settings')

app = Celery('dilutelab')

# - namespace='CELERY' means all celery-related configuration keys
#   should have a `CELERY_` prefix.
app.config_from_object('django.conf:settings', namespace='CELERY')

app.autodiscover_tasks()

app.conf.update(
    task_acks_late=True,
    task_reject_on_worker_lost=True,
    task_track_started=True,

    result_expires=3600,

    worker_prefetch_multiplier=1,
    worker_max_tasks_per_child=200,  # numba kernels hold memory per process

    task_routes={
        'workbench.tension_replica': {'queue': 'replicas'},
        'workbench.flow_replica': {'queue': 'replicas'},
        'workbench.coexistence_chain': {'queue': 'chains'},
    },

    task_serializer='json',
    result_serializer='json',
    accept_content=['json'],
    timezone='UTC',
    enable_utc=True,
)


@task_failure.connect
def task_failure_handler(sender=None, task_id=None, exception=None, args=None, kwargs=None, traceback=None, einfo=None, **kw):
    """Log replica failures"""
    logger.error(
        f'Task {sender.name} [{task_id}] failed: {exception}',
        exc_info=einfo,
        extra={
            'task_name': sender.name,
            'task_id': task_id,
        }
    )


@task_success.connect
def task_success_handler(sender=None, result=None, **kwargs):
    logger.debug(f'Task {sender.name} completed')


@worker_ready.connect
def worker_ready_handler(sender=None, **kwargs):
    logger.info(f'Celery worker ready: {sender.hostname}')
