from django.dispatch import Signal

# Sent by the runner once a run ends, successfully or not.
# Arguments: config, status, wall_time, messages
run_finished = Signal()

from smb.signals import run_signals  # noqa: E402,F401
