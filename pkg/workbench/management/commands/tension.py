from ._subcommand import SubcommandCommand


class Command(SubcommandCommand):
    help = 'Surface tension of oriented boxes, exact or by thermodynamic integration'
    subcommand = 'tension'
