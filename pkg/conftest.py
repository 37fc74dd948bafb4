"""Pytest wiring mirroring runtests.py: test settings, Django setup, test DB."""
import os

os.environ['DJANGO_SETTINGS_MODULE'] = 'smb.settings'
os.environ['SMB_TEST_CONFIG'] = '1'

import django  # noqa: E402

django.setup()

_old_config = None


def pytest_configure(config):
    global _old_config
    from django.test.utils import setup_databases, setup_test_environment
    setup_test_environment()
    _old_config = setup_databases(verbosity=0, interactive=False)


def pytest_unconfigure(config):
    from django.test.utils import (teardown_databases,
                                   teardown_test_environment)
    if _old_config is not None:
        teardown_databases(_old_config, verbosity=0)
    teardown_test_environment()
