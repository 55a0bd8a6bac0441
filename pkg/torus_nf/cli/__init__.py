""" ``torus_nf.cli`` bundles the command line interface. """

import click

from torus_nf import __version__
from torus_nf.cli.config import show_config
from torus_nf.cli.diagnose import diagnose
from torus_nf.cli.expand import expand
from torus_nf.cli.normalize import normalize
from torus_nf.cli.pdnf import pdnf
from torus_nf.cli.simulate import simulate
from torus_nf.cli.verify import verify


@click.group("torusnf")
@click.version_option(version=__version__)
def torusnf():
    """ Normal forms of the Navier-Stokes equations on the torus.

    Command line tool for spectral simulations, asymptotic expansions,
    normalization maps and Poincare-Dulac normal forms of the
    Navier-Stokes equations with periodic boundary conditions.

    \b
    All commands write their results together with the resolved config and
    a manifest to the folder configured in the 'commands' section.
    """


# add subcommands
torusnf.add_command(simulate)
torusnf.add_command(expand)
torusnf.add_command(normalize)
torusnf.add_command(diagnose)
torusnf.add_command(pdnf)
torusnf.add_command(verify)
torusnf.add_command(show_config)
