"""
Keep a ledger of finished runs.
"""
import hashlib
import logging

from django.conf import settings
from django.db.utils import OperationalError, ProgrammingError
from django.dispatch import receiver

from smb.models import SimulationRun
from smb.signals import run_finished


logger = logging.getLogger(__name__)


@receiver(run_finished)
def record_run(sender, config, status, wall_time, messages=(), **kwargs):
    """ Save the run, unless the ledger is switched off (or not migrated). """
    if not settings.SMB_RECORD_RUNS:
        return None
    resolved = config.resolved_json()
    try:
        return SimulationRun.objects.create(
            mode=config.mode,
            seed=config.seed,
            config_digest=hashlib.sha256(resolved.encode('utf-8')).hexdigest(),
            resolved_config=resolved,
            output_dir=config.output_dir,
            status=status,
            wall_time=wall_time,
            messages='\n'.join(messages),
        )
    except (OperationalError, ProgrammingError):
        logger.warning("Run ledger table missing; run `manage.py migrate` to record runs")
        return None
