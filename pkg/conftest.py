"""Configure Django before pytest collects the Django-based test suites.

Mirrors what `manage.py test` does before running SimpleTestCase suites.
"""
import os

import django
from django.test.utils import setup_test_environment

os.environ.setdefault("DJANGO_SETTINGS_MODULE", "cte_gateway.settings")
django.setup()
setup_test_environment()
