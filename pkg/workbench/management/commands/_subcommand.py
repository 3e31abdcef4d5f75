"""
Shared plumbing for the workbench subcommands.

Every subcommand reads an optional JSON config file, lets --seed and --out
override it, dispatches it and exits with the dispatcher's status.
"""

import json
from pathlib import Path

from django.core.management.base import BaseCommand, CommandError

from workbench.services.run_dispatcher import EXIT_INVALID, dispatch


class SubcommandCommand(BaseCommand):
    subcommand = None

    def add_arguments(self, parser):
        parser.add_argument(
            '--config',
            type=str,
            default=None,
            help='Path to a JSON run config'
        )
        parser.add_argument(
            '--seed',
            type=int,
            default=None,
            help='Root seed (overrides the config)'
        )
        parser.add_argument(
            '--out',
            type=str,
            default=None,
            help='Output directory (default: DILUTELAB_OUTPUT_DIR)'
        )

    def load_config(self, path):
        if path is None:
            return {}
        config_path = Path(path)
        if not config_path.exists():
            raise CommandError(f'Config file not found: {path}', returncode=EXIT_INVALID)
        try:
            config = json.loads(config_path.read_text(encoding='utf-8'))
        except json.JSONDecodeError as e:
            raise CommandError(f'Config file {path} is not valid JSON: {str(e)}', returncode=EXIT_INVALID)
        if not isinstance(config, dict):
            raise CommandError(f'Config file {path} must hold a JSON object', returncode=EXIT_INVALID)
        return config

    def build_config(self, options):
        config = self.load_config(options['config'])
        if self.subcommand is not None:
            declared = config.setdefault('subcommand', self.subcommand)
            if declared != self.subcommand:
                raise CommandError(
                    f"Config is for '{declared}', not '{self.subcommand}'",
                    returncode=EXIT_INVALID,
                )
        return config

    def handle(self, *args, **options):
        config = self.build_config(options)
        self.stdout.write(f"Running {config.get('subcommand', '?')}...")

        result = dispatch(config, seed=options['seed'], out=options['out'])

        if result.exit_status != 0:
            raise CommandError(result.message, returncode=result.exit_status)

        for output in result.outputs:
            rows = f" ({output['rows']} rows)" if output.get('rows') is not None else ''
            self.stdout.write(f"  {output['kind']:4} {output['path']}{rows}")
        self.stdout.write(self.style.SUCCESS(f'{result.message}; manifest at {result.manifest_path}'))
