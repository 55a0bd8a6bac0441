import inspect

import click

from torus_nf.cli.run import CommandRun
from torus_nf.cli.utils import config_option, raise_error, run_options
from torus_nf.pd_engine import (
    PolySystem,
    flow_check,
    normal_form,
    truncated_nse_as_polysystem,
    verify_conjugacy,
)
from torus_nf.utils import load_json


@click.command("pdnf")
@click.argument("system_file", required=False)
@config_option()
@run_options
@click.option(
    "--nse",
    default=False,
    is_flag=True,
    help="Normalize the truncated Navier-Stokes system given by --lambda-max "
    "and the configured dimension instead of SYSTEM_FILE.",
)
@click.option(
    "-D", "--degree", type=int, default=None, help="Normalization degree."
)
@click.option(
    "--flow/--no-flow",
    default=True,
    help="Compare the flows of the system and its normal form.",
)
def pdnf(
    system_file,
    config_file,
    folder,
    seed,
    dt,
    t_end,
    lambda_max,
    order,
    verbose,
    nse,
    degree,
    flow,
):
    """ Poincare-Dulac normal form of a polynomial system.

    SYSTEM_FILE is a JSON file with the keys 'dimension', 'eigenvalues' and
    'terms' (list of 'exponents', 'target', 'coefficient'), describing
    dx/dt + diag(eigenvalues) x + phi(x) = 0.
    """
    if (system_file is None) == (not nse):
        raise_error("Specify either SYSTEM_FILE or --nse", exit_code=2)

    with CommandRun(
        inspect.stack()[0][3],
        verbose,
        config_file,
        folder,
        seed=seed,
        dt=dt,
        T=t_end,
        lambda_max=lambda_max,
        order=order,
    ) as r:
        D = degree or r.settings.get("degree", 4)

        with r.stage("load"):
            if nse:
                system = truncated_nse_as_polysystem(
                    r.run.lambda_max, r.run.dim
                )
            else:
                system = PolySystem.from_dict(load_json(system_file))
        r.logger.info(f"Normalizing {system!r} up to degree {D}")
        r.write("load", "system.json", system.to_dict())

        with r.stage("normalize"):
            result = normal_form(system, D)
        r.write("normalize", "normal_form.json", result.to_dict())

        report = {
            "D": D,
            "dimension": system.dimension,
            "resonant_terms": len(result.resonant_terms()),
            "removed": result.removed,
            "near_resonances": result.near_resonances,
        }
        with r.stage("conjugacy"):
            residual, per_degree = verify_conjugacy(system, result, D)
        report["conjugacy"] = {
            "residual": residual,
            "per_degree": per_degree,
        }
        r.logger.info(
            f"{report['resonant_terms']} resonant monomials kept, "
            f"{result.removed} removed, conjugacy residual {residual:.2e}"
        )

        if flow:
            with r.stage("flow"):
                report["flow"] = flow_check(
                    system,
                    result,
                    r.settings.get(
                        "flow_amplitudes", [0.02, 0.04, 0.08, 0.16]
                    ),
                    seed=r.run.seed,
                )
            r.report(
                f"flow error slope {report['flow']['slope']:.2f} "
                f"(bound {report['flow']['bound']:.1f})",
                report["flow"]["passed"],
            )

        r.write("pdnf", "report.json", report)
        r.logger.info(f"Saved results to {r.folder}")
