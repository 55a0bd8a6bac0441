import click

from torus_nf.cli.run import CommandRun, run_configs
from torus_nf.cli.utils import config_option, jobs_option, run_options
from torus_nf.solver import energy_checks, richardson_check


def run_simulation(
    config_file=None, folder=None, verbose=0, richardson=False, **overrides
):
    """ Integrate the configured initial data and save the trajectory. """
    with CommandRun(
        "simulate", verbose, config_file, folder, **overrides
    ) as r:
        traj = r.trajectory()

        with r.stage("save"):
            traj.save(r.folder / "trajectory")
        r.record("save", r.folder / "trajectory")

        with r.stage("energy_checks"):
            report = {"energy_checks": energy_checks(traj)}
            if richardson:
                report["richardson"] = richardson_check(
                    traj.initial, min(r.run.T, 1.0), r.run.dt
                )

        report["lattice"] = {
            "dim": traj.lattice.dim,
            "lambda_max": traj.lattice.lambda_max,
            "size": traj.lattice.size,
        }
        report["final_norm"] = traj.state(-1).norm()
        r.write("energy_checks", "report.json", report)

        checks = report["energy_checks"]
        r.logger.info(
            f"Energy balance residual {checks['energy_residual']:.2e}, "
            f"|u(T)| = {report['final_norm']:.6e}"
        )
        if richardson:
            r.logger.info(
                f"Observed order of convergence "
                f"{report['richardson']['order']:.2f}"
            )
        r.logger.info(f"Saved results to {r.folder}")


@click.command("simulate")
@config_option(multiple=True)
@run_options
@jobs_option
@click.option(
    "--richardson",
    default=False,
    is_flag=True,
    help="Estimate the order of convergence by step halving on [0, 1].",
)
def simulate(
    config_file,
    folder,
    seed,
    dt,
    t_end,
    lambda_max,
    order,
    verbose,
    jobs,
    richardson,
):
    """ Integrate the truncated Navier-Stokes equations.

    Writes the trajectory (snapshots and per-step series.csv), the energy
    balance report and the run manifest. With several config files, each
    run writes to a sub-folder named after its config file.
    """
    run_configs(
        run_simulation,
        config_file,
        folder,
        jobs,
        verbose=verbose,
        richardson=richardson,
        seed=seed,
        dt=dt,
        T=t_end,
        lambda_max=lambda_max,
        order=order,
    )
