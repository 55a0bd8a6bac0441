import inspect

import click
import oyaml as yaml

from torus_nf.cli.utils import (
    config_option,
    init_logger,
    raise_error,
    remove_handlers,
)
from torus_nf.config import ConfigParser
from torus_nf.utils import TorusNFError, to_builtin


@click.command("show_config")
@config_option()
@click.argument("sections", nargs=-1)
@click.option(
    "-v", "--verbose", default=False, help="Verbose output.", count=True,
)
def show_config(config_file, sections, verbose):
    """ Show the resolved configuration.

    SECTIONS restricts the output to the given top-level sections, e.g.
    'run' or 'tolerances'.
    """
    logger = init_logger(inspect.stack()[0][3], verbosity=verbose)

    try:
        try:
            parser = ConfigParser(config_file)
        except TorusNFError as e:
            raise_error(str(e), logger, e.exit_code)

        with parser:
            config = parser.resolved()
            # validates the run section
            parser.get_run_config()

        unknown = [s for s in sections if s not in config]
        if unknown:
            raise_error(f"Unknown sections: {', '.join(unknown)}", logger, 2)
        if sections:
            config = {s: config[s] for s in sections}

        click.echo(yaml.dump(to_builtin(config), default_flow_style=False))
    finally:
        remove_handlers()
