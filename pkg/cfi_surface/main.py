import logging
import sys

import click

from config.settings import get_log_level

# Configure logging
logging.basicConfig(level=get_log_level(), format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')

from commands import analyze, generate, per_callsite, rank  # noqa: E402
from commands.common import EXIT_INVALID_INPUT, EXIT_USAGE  # noqa: E402


class CfiSurfaceGroup(click.Group):
    """Runs click outside standalone mode so every failure maps to our exit codes.

    click reports usage problems with exit 2, which here means an I/O failure;
    they are re-raised as 3.
    """

    def main(self, args=None, prog_name=None, complete_var=None, standalone_mode=True, **extra):
        try:
            rv = super().main(args=args, prog_name=prog_name, complete_var=complete_var,
                              standalone_mode=False, **extra)
        except click.UsageError as e:
            e.exit_code = EXIT_USAGE
            e.show()
            sys.exit(EXIT_USAGE)
        except click.ClickException as e:
            e.show()
            sys.exit(e.exit_code)
        except click.Abort:
            click.echo("Aborted!", err=True)
            sys.exit(EXIT_INVALID_INPUT)
        sys.exit(rv if isinstance(rv, int) else 0)


@click.group(cls=CfiSurfaceGroup)
def cli():
    """Model CFI policies over a program's facts and measure what each one still allows."""


cli.add_command(analyze.analyze)
cli.add_command(per_callsite.per_callsite)
cli.add_command(generate.generate)
cli.add_command(rank.rank)


if __name__ == "__main__":
    cli(prog_name="cfi-surface")
