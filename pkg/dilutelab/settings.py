"""
Django settings for the dilutelab project.

The project hosts a single app, ``workbench``, which exposes the dilute
random-cluster / Ising computations as management commands and Celery tasks.
There is no web surface; the settings only carry what the ORM, the task
queue and the logging layer need.
"""

import os
from pathlib import Path

from decouple import config

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

SECRET_KEY = config('SECRET_KEY', default='dilutelab-insecure-local-key')

DEBUG = config('DEBUG', default=True, cast=bool)

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    'django.contrib.contenttypes',
    'workbench',
]


# Database
# https://docs.djangoproject.com/en/4.2/ref/settings/#databases

DATABASES = {
    'default': {
        'ENGINE': 'django.db.backends.sqlite3',
        'NAME': config('DILUTELAB_DB_PATH', default=str(BASE_DIR / 'db.sqlite3')),
    }
}

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'

TIME_ZONE = 'UTC'

USE_TZ = True


# Workbench configuration

DILUTELAB_VERSION = '1.0.0'

# Default directory for CSV outputs and run manifests.
DILUTELAB_OUTPUT_DIR = Path(config('DILUTELAB_OUTPUT_DIR', default=str(BASE_DIR / 'runs')))

# Worker pool size hint for replica fan-out.
DILUTELAB_WORKERS = config('DILUTELAB_WORKERS', default=2, cast=int)

# Exact-oracle budget: 2**cap bond configurations.
DILUTELAB_EXACT_EDGE_CAP = config('DILUTELAB_EXACT_EDGE_CAP', default=22, cast=int)

DILUTELAB_LOG_LEVEL = config('DILUTELAB_LOG_LEVEL', default='INFO')


# Logging Configuration
LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '{levelname} {asctime} {module} {process:d} {thread:d} {message}',
            'style': '{',
        },
        'simple': {
            'format': '{levelname} {message}',
            'style': '{',
        },
    },
    'handlers': {
        'file': {
            'level': 'INFO',
            'class': 'logging.FileHandler',
            'filename': BASE_DIR / 'logs' / 'dilutelab.log',
            'formatter': 'verbose',
        },
        'error_file': {
            'level': 'ERROR',
            'class': 'logging.FileHandler',
            'filename': BASE_DIR / 'logs' / 'errors.log',
            'formatter': 'verbose',
        },
        'console': {
            'level': 'WARNING',
            'class': 'logging.StreamHandler',
            'formatter': 'simple',
        },
    },
    'root': {
        'handlers': ['console', 'file'],
        'level': 'INFO',
    },
    'loggers': {
        'django': {
            'handlers': ['console', 'file', 'error_file'],
            'level': 'INFO',
            'propagate': False,
        },
        'workbench': {
            'handlers': ['console', 'file', 'error_file'],
            'level': DILUTELAB_LOG_LEVEL,
            'propagate': False,
        },
        'workbench.services': {
            'handlers': ['console', 'file', 'error_file'],
            'level': DILUTELAB_LOG_LEVEL,
            'propagate': False,
        },
        'celery': {
            'handlers': ['console', 'file', 'error_file'],
            'level': 'INFO',
            'propagate': False,
        },
    },
}

# Create logs directory if it doesn't exist
LOGS_DIR = BASE_DIR / 'logs'
LOGS_DIR.mkdir(exist_ok=True)


# Celery Configuration
# Redis as message broker and result backend when a worker pool is running
CELERY_BROKER_URL = config('CELERY_BROKER_URL', default='redis://localhost:6379/0')
CELERY_RESULT_BACKEND = config('CELERY_RESULT_BACKEND', default='redis://localhost:6379/0')

# Replicas run in-process unless a worker pool is configured
CELERY_TASK_ALWAYS_EAGER = config('CELERY_TASK_ALWAYS_EAGER', default=True, cast=bool)
CELERY_TASK_EAGER_PROPAGATES = True

CELERY_ACCEPT_CONTENT = ['json']
CELERY_TASK_SERIALIZER = 'json'
CELERY_RESULT_SERIALIZER = 'json'
CELERY_TIMEZONE = TIME_ZONE
CELERY_ENABLE_UTC = True

# Task execution settings
CELERY_TASK_TRACK_STARTED = True
CELERY_TASK_TIME_LIMIT = 60 * 60  # 60 minutes hard limit (coexistence chains)
CELERY_TASK_SOFT_TIME_LIMIT = 55 * 60
CELERY_TASK_ACKS_LATE = True
CELERY_WORKER_PREFETCH_MULTIPLIER = 1  # Replicas are long; fetch one at a time
CELERY_WORKER_CONCURRENCY = DILUTELAB_WORKERS

CELERY_RESULT_EXPIRES = 3600

CELERY_WORKER_HIJACK_ROOT_LOGGER = False
