from ._subcommand import SubcommandCommand


class Command(SubcommandCommand):
    help = 'Conditioned phase-coexistence chains with block profiles and droplet fits'
    subcommand = 'coexist'
