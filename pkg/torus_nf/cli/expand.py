import inspect

import click

from torus_nf.cli.run import CommandRun
from torus_nf.cli.utils import config_option, run_options
from torus_nf.normal_form import (
    ExpansionCache,
    NormalState,
    expansion_report,
    extract_normalization,
)
from torus_nf.utils import load_json


@click.command("expand")
@config_option()
@run_options
@click.option(
    "-t",
    "--trajectory",
    default=None,
    help="Folder of a trajectory saved by 'torusnf simulate'. Defaults to "
    "integrating the configured initial data.",
)
def expand(
    config_file,
    folder,
    seed,
    dt,
    t_end,
    lambda_max,
    order,
    verbose,
    trajectory,
):
    """ Asymptotic expansion of a solution and decay of its remainder.

    For 'from_xi' initial data the normalization state is read from the
    file and the data are u0 = sum of q_n(0) up to the configured order.
    Otherwise the normalization is extracted from the trajectory first.
    """
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
        run = r.run
        cache = ExpansionCache()
        spec = run.initial_data

        if spec["kind"] == "from_xi" and trajectory is None:
            data_order = int(spec.get("order", run.order))
            with r.stage("load"):
                xi = NormalState.from_dict(load_json(spec["path"]))
                u0 = r.initial_data()
            if data_order <= max(run.expand_orders):
                # remainder has to be integrated from the actual data
                data_order = None
        else:
            data_order = None
            traj = r.trajectory(trajectory)
            u0 = traj.initial
            with r.stage("normalize"):
                normalization = extract_normalization(
                    traj,
                    run.order,
                    run.extraction_windows(),
                    run.delta_min,
                    cache=cache,
                )
            r.write("normalize", "normalization.json", normalization.to_dict())
            xi = normalization.xi

        with r.stage("expand"):
            report = expansion_report(
                u0,
                xi,
                orders=run.expand_orders,
                window=run.expand_window,
                dt=run.remainder_dt,
                gevrey=run.gevrey,
                data_order=data_order,
                cache=cache,
            )
        r.write("expand", "xi.json", xi.to_dict())
        r.write("expand", "report.json", report)

        for N, fits in report["orders"].items():
            fit = fits["H"]
            if fit["vanishes"]:
                r.report(f"order {N}: remainder vanishes", True)
            else:
                r.report(
                    f"order {N}: exponent {fit['exponent']:.3f} "
                    f"(bound {fit['bound']:.1f})",
                    fit["passed"],
                )
        r.logger.info(f"Saved results to {r.folder}")
