"""
smbforge <mode> --config <path> [--out DIR] [--seed N] [--threads N]
"""
import json
import os

from django.core.exceptions import ValidationError
from django.core.management.base import BaseCommand, CommandError

from smb.exceptions import IntegrationError, SimulationError
from smb.runner import runner_for
from smb.utils.config import MODES, parse_config


def error_report(exc):
    """ Structured description of a failure, for stderr. """
    report = {'error': type(exc).__name__}
    if isinstance(exc, ValidationError):
        report['fields'] = (exc.message_dict if hasattr(exc, 'error_dict')
                            else {'__all__': exc.messages})
    else:
        report['message'] = str(exc)
    if isinstance(exc, IntegrationError):
        report.update(time_reached=exc.time_reached, column=exc.column, switch=exc.switch)
    return report


class Command(BaseCommand):
    help = "Simulate batch and SMB ion-exchange processes, or optimize their design"

    def add_arguments(self, parser):
        parser.add_argument('mode', choices=MODES)
        parser.add_argument('--config', required=True, help="Run configuration (JSON)")
        parser.add_argument('--out', help="Output directory (overrides the config)")
        parser.add_argument('--seed', type=int, help="Random seed (overrides the config)")
        parser.add_argument('--threads', type=int, default=1,
                            help="Worker threads for chains and ensemble members")

    def handle(self, *args, **options):
        try:
            config = parse_config(options['config'], overrides={
                'mode': options['mode'],
                'seed': options['seed'],
                'output.directory': options['out'] and os.path.abspath(options['out']),
            })
            self.stdout.write("Running {} into {}".format(config.mode, config.output_dir))
            directory = runner_for(config, options['threads'])()
        except (ValidationError, SimulationError) as exc:
            self.stderr.write(json.dumps(error_report(exc), indent=2, sort_keys=True,
                                         default=str))
            raise CommandError("{} failed: {}".format(options['mode'], type(exc).__name__))

        self.stdout.write(self.style.SUCCESS("Wrote {} file(s) to {}".format(
            len(directory.files), directory.path)))
