"""Test settings: hypothesis.extra.django imports django.contrib.auth."""

from .settings import *  # noqa: F401,F403
from .settings import INSTALLED_APPS

INSTALLED_APPS = ['django.contrib.auth', *INSTALLED_APPS]
