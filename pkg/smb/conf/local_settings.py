"""
Local development settings!
  - Record every run in the local ledger
"""

DEBUG = True
ALLOWED_HOSTS = []

SMB_RECORD_RUNS = True
SMB_RUN_SLOW_TESTS = False

INSTALLED_APPS = (
    'smb.apps.SmbConfig',
)
