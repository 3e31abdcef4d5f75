from ._subcommand import SubcommandCommand


class Command(SubcommandCommand):
    help = 'Lower large deviations of the quenched tension and its annealed transform'
    subcommand = 'deviations'
