"""
Run whatever subcommand a config names, or replay a manifest.
"""

import json
from pathlib import Path

from django.core.management.base import CommandError

from workbench.services.run_dispatcher import EXIT_INVALID

from ._subcommand import SubcommandCommand


class Command(SubcommandCommand):
    help = "Dispatch a JSON run config by its 'subcommand' key, or replay a run manifest"

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument(
            '--replay',
            type=str,
            default=None,
            help='Path to a manifest.json; re-runs its recorded config'
        )

    def build_config(self, options):
        if options.get('replay'):
            manifest_path = Path(options['replay'])
            if not manifest_path.exists():
                raise CommandError(f'Manifest not found: {manifest_path}', returncode=EXIT_INVALID)
            return json.loads(manifest_path.read_text(encoding='utf-8'))['config']
        if options['config'] is None:
            raise CommandError('Either --config or --replay is required', returncode=EXIT_INVALID)
        return self.load_config(options['config'])
