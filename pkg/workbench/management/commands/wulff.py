from ._subcommand import SubcommandCommand


class Command(SubcommandCommand):
    help = 'Wulff crystal of a tension table, with vertex CSV and SVG outline'
    subcommand = 'wulff'
