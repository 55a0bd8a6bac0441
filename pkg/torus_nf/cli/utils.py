""""""
import logging
import shutil
import sys
import tempfile
from pathlib import Path

import click

from torus_nf.config import ConfigParser

logger = logging.getLogger(__name__)

TRACE = 5


def add_file_handler(
    subcommand, folder=None, replace=None, level=TRACE, mode="a"
):
    """ Add a file handler to the root logger. """
    root_logger = logging.getLogger("")
    file_formatter = logging.Formatter(
        "%(asctime)s | %(name)s | %(levelname)s: %(message)s"
    )
    folder = Path(folder or ConfigParser.config_dir())
    folder.mkdir(parents=True, exist_ok=True)
    log_file = folder / ("torusnf." + subcommand + ".log")

    if replace:
        replace.close()
        root_logger.removeHandler(replace)
        shutil.move(replace.baseFilename, log_file)

    file_handler = logging.FileHandler(log_file, mode=mode)
    file_handler.setFormatter(file_formatter)
    file_handler.setLevel(level)
    root_logger.addHandler(file_handler)

    return file_handler


def init_logger(
    subcommand,
    verbosity=0,
    stream=sys.stdout,
    stream_format="%(message)s",
    temp_file_handler=False,
    return_file_handler=False,
):
    """ Initialize logger with file and stream handler for a subcommand. """
    logging.addLevelName(TRACE, "TRACE")
    verbosity_map = {
        0: logging.INFO,
        1: logging.DEBUG,
        2: TRACE,
    }

    # root logger
    root_logger = logging.getLogger()
    root_logger.setLevel(TRACE)

    # stream handler
    stream_formatter = logging.Formatter(stream_format)
    stream_handler = logging.StreamHandler(stream)
    stream_handler.setLevel(verbosity_map[min(int(verbosity), 2)])
    stream_handler.setFormatter(stream_formatter)
    root_logger.addHandler(stream_handler)

    # file handler
    if temp_file_handler:
        file_handler = add_file_handler(
            subcommand, folder=tempfile.mkdtemp(), mode="w"
        )
    else:
        file_handler = add_file_handler(subcommand)

    if return_file_handler:
        return logging.getLogger("torusnf." + subcommand), file_handler
    else:
        return logging.getLogger("torusnf." + subcommand)


def remove_handlers():
    """ Close and remove all handlers of the root logger. """
    root_logger = logging.getLogger()
    for handler in list(root_logger.handlers):
        handler.close()
        root_logger.removeHandler(handler)


def raise_error(msg, logger=None, exit_code=1):
    """ Log error as debug message and raise ClickException. """
    if logger is not None:
        logger.debug(f"ERROR: {msg}")

    exc = click.ClickException(msg)
    exc.exit_code = exit_code
    raise exc


def status_line(term, name, passed, expected=False):
    """ Colored PASS/FAIL line of a check. """
    if passed:
        label = term.bold(term.green("PASS"))
    elif expected:
        label = term.bold(term.goldenrod("FAIL (expected)"))
    else:
        label = term.bold(term.red2("FAIL"))
    return f"{label} {name}"


def config_option(multiple=False):
    return click.option(
        "-c",
        "--config-file",
        default=None,
        multiple=multiple,
        help="Path or name of config file. If the argument ends with "
        "'.yaml', '.yml' or '.json', it is assumed to be a path. Otherwise, "
        "it will look for a file called '<CONFIG_FILE>.yaml' in the app "
        "config folder."
        + (" Can be given several times." if multiple else ""),
    )


def run_options(func):
    """ Options shared by all commands that run computations. """
    options = [
        click.option(
            "-f",
            "--folder",
            default=None,
            help="Output folder. Defaults to the folder configured for the "
            "command.",
        ),
        click.option("--seed", type=int, default=None, help="Random seed."),
        click.option("--dt", type=float, default=None, help="Time step."),
        click.option(
            "--t-end", type=float, default=None, help="Final time T."
        ),
        click.option(
            "--lambda-max",
            type=int,
            default=None,
            help="Truncation |k|^2 <= lambda_max.",
        ),
        click.option(
            "--order", type=int, default=None, help="Expansion order N."
        ),
        click.option(
            "-v",
            "--verbose",
            default=False,
            help="Verbose output.",
            count=True,
        ),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def jobs_option(func):
    return click.option(
        "-j",
        "--jobs",
        type=int,
        default=1,
        help="Number of configs run in parallel.",
    )(func)
