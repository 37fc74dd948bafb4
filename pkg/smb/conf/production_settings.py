"""
Production settings!
  - Runs are recorded unless explicitly disabled
"""
import os

DEBUG = False
ALLOWED_HOSTS = []

SMB_RECORD_RUNS = not os.getenv('SMB_NO_LEDGER')
SMB_RUN_SLOW_TESTS = False

INSTALLED_APPS = (
    'smb.apps.SmbConfig',
)
