from ._subcommand import SubcommandCommand


class Command(SubcommandCommand):
    help = 'Randomized cross-checks of the exact oracles'
    subcommand = 'oracle-suite'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument(
            '--fixtures',
            type=int,
            default=None,
            help='Number of random fixtures (default: 50)'
        )

    def build_config(self, options):
        config = super().build_config(options)
        if options.get('fixtures') is not None:
            config['budgets'] = {**config.get('budgets', {}), 'fixtures': options['fixtures']}
        return config
