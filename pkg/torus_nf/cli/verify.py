import click

from torus_nf.cli.run import CommandRun, run_configs
from torus_nf.cli.utils import (
    config_option,
    jobs_option,
    raise_error,
    run_options,
)
from torus_nf.verify import CHECKS, Verifier


def run_verification(
    config_file=None,
    folder=None,
    verbose=0,
    tolerance_scale=1.0,
    only=None,
    **overrides,
):
    """ Run the acceptance checks for one config. """
    with CommandRun("verify", verbose, config_file, folder, **overrides) as r:
        settings = {
            k: v for k, v in r.settings.items() if k not in ("folder", "policy")
        }
        verifier = Verifier(
            r.run,
            r.parser.get_tolerances(tolerance_scale),
            settings,
            r.parser.get_weights(),
            tolerance_scale,
        )
        with r.stage("verify"):
            report = verifier.run_checks(only)
        r.write("verify", "report.json", report)

        for name, result in report["checks"].items():
            r.report(
                name, result["passed"], name in report["expected_failures"]
            )
            if result["error"]:
                r.logger.info(f"    {result['error']}")
        r.logger.info(f"Saved results to {r.folder}")
        logger = r.logger

    if not report["passed"]:
        raise_error(
            f"{len(report['failed'])} check(s) failed: "
            f"{', '.join(report['failed'])}",
            logger,
            exit_code=1,
        )


@click.command("verify")
@config_option(multiple=True)
@run_options
@jobs_option
@click.option(
    "-s",
    "--tolerance-scale",
    type=float,
    default=1.0,
    help="Factor applied to all absolute tolerances.",
)
@click.option(
    "--only",
    type=click.Choice(list(CHECKS)),
    multiple=True,
    help="Run only this check. Can be given several times.",
)
def verify(
    config_file,
    folder,
    seed,
    dt,
    t_end,
    lambda_max,
    order,
    verbose,
    jobs,
    tolerance_scale,
    only,
):
    """ Run the acceptance checks.

    Exits with a non-zero code when a check fails. With several config
    files, each run writes to a sub-folder named after its config file.
    """
    run_configs(
        run_verification,
        config_file,
        folder,
        jobs,
        verbose=verbose,
        tolerance_scale=tolerance_scale,
        only=list(only) or None,
        seed=seed,
        dt=dt,
        T=t_end,
        lambda_max=lambda_max,
        order=order,
    )
