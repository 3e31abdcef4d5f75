from ._subcommand import SubcommandCommand


class Command(SubcommandCommand):
    help = 'Maximal flow per direction over disorder replicas'
    subcommand = 'flow'
