import inspect

import click

from torus_nf.cli.run import CommandRun
from torus_nf.cli.utils import config_option, run_options
from torus_nf.normal_form import (
    ExpansionCache,
    WeightSchedule,
    extract_normalization,
    s_normal,
    star_norm,
)


def diagram_residuals(traj, normalization, times, run, weights, cache):
    """ W(S(t) u0) against S_normal(t) W(u0) for each t. """
    residuals = {}
    for t in times:
        Wt = extract_normalization(
            traj.shift(t),
            normalization.N,
            run.extraction_windows(),
            run.delta_min,
            cache=cache,
        ).xi
        diff = Wt - s_normal(normalization.xi, t, N=normalization.N,
                             cache=cache)
        residuals[float(t)] = {
            "star_norm": star_norm(diff, weights),
            "components": diff.component_norms(),
        }
    return residuals


@click.command("normalize")
@config_option()
@run_options
@click.option(
    "-t",
    "--trajectory",
    default=None,
    help="Folder of a trajectory saved by 'torusnf simulate'. Defaults to "
    "integrating the configured initial data.",
)
@click.option(
    "--diagram/--no-diagram",
    default=True,
    help="Check the normalization against the normal flow at the "
    "configured diagram times.",
)
def normalize(
    config_file,
    folder,
    seed,
    dt,
    t_end,
    lambda_max,
    order,
    verbose,
    trajectory,
    diagram,
):
    """ Extract the normalization state xi of a solution. """
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
        traj = r.trajectory(trajectory)

        with r.stage("normalize"):
            normalization = extract_normalization(
                traj,
                run.order,
                run.extraction_windows(),
                run.delta_min,
                cache=cache,
            )
        r.write("normalize", "xi.json", normalization.xi.to_dict())

        report = normalization.to_dict()
        report["conditions"] = {
            fit["shell"]: fit["condition"] for fit in normalization.fits
        }
        for fit in normalization.fits:
            r.report(
                f"shell {fit['shell']}: |xi| = {fit['norm']:.6e}, "
                f"fit residual {fit['residual']:.2e}",
                fit["reliable"],
            )

        if diagram:
            weights = WeightSchedule.from_config(
                r.parser.get_weights(), run.lambda_max
            )
            with r.stage("diagram"):
                report["diagram"] = diagram_residuals(
                    traj,
                    normalization,
                    r.settings.get("diagram_times", [0.5, 1.0, 2.0]),
                    run,
                    weights,
                    cache,
                )
            for t, residual in report["diagram"].items():
                r.logger.info(
                    f"Diagram residual at t={t:g}: "
                    f"{residual['star_norm']:.2e}"
                )

        r.write("normalize", "report.json", report)
        r.logger.info(f"Saved results to {r.folder}")
