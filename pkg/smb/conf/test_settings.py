"""
Test settings!
  - Never write to the run ledger unless a test opts in
  - Long regression checks only when explicitly requested
"""
import os

DEBUG = True
ALLOWED_HOSTS = []

SMB_RECORD_RUNS = False

# Full-grid batch regressions, the 120-switch four-zone run, cascade end-to-end
SMB_RUN_SLOW_TESTS = bool(os.getenv('SMB_RUN_SLOW_TESTS'))

INSTALLED_APPS = (
    'smb.apps.SmbConfig',
)
