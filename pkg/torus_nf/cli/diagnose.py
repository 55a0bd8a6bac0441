import inspect

import click

from torus_nf.asymptotics import (
    dirichlet_limit,
    helicity_report,
    manifold_membership,
    phi_from_trajectory,
)
from torus_nf.cli.run import CommandRun
from torus_nf.cli.utils import config_option, run_options


@click.command("diagnose")
@config_option()
@run_options
@click.option(
    "-t",
    "--trajectory",
    default=None,
    help="Folder of a trajectory saved by 'torusnf simulate'. Defaults to "
    "integrating the configured initial data.",
)
def diagnose(
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
    """ Long-time diagnostics of a solution.

    Computes the limit of the Dirichlet quotient, the invariant manifolds
    the data lie on, the Phi_k functionals of the configured shells and,
    in 3D, the helicity asymptotics.
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
        traj = r.trajectory(trajectory)
        window = tuple(run.fit_window) if run.fit_window else None
        report = {}

        with r.stage("dirichlet"):
            quotient = dirichlet_limit(traj, window)
        report["dirichlet"] = quotient.to_dict()
        r.logger.info(
            f"Dirichlet quotient -> {quotient.limit:.8f} "
            f"(eigenvalue {quotient.matched})"
        )

        with r.stage("membership"):
            report["membership"] = {
                k: manifold_membership(
                    traj, k, window, run.delta_min
                ).to_dict()
                for k in range(2, max(quotient.matched, 2) + 1)
            }

        with r.stage("phi"):
            report["phi"] = {}
            for k in r.settings.get("phi_shells", [1]):
                member = k < 2 or report["membership"].get(
                    k, manifold_membership(traj, k).to_dict()
                )["member"]
                if not member:
                    report["phi"][k] = None
                    r.logger.info(f"Phi_{k} undefined: data not in M_{k - 1}")
                    continue
                phi = phi_from_trajectory(traj, k, check_domain=False)
                report["phi"][k] = phi.to_dict()
                r.logger.info(
                    f"|Phi_{k}(u0)| = {phi.value.norm():.6e} "
                    f"(tail {phi.tail:.1e})"
                )

        if traj.lattice.dim == 3:
            with r.stage("helicity"):
                helicity = helicity_report(traj, window)
            report["helicity"] = helicity.to_dict()
            if helicity.identically_zero:
                r.logger.info("Helicity vanishes identically")
            else:
                r.logger.info(
                    f"Helicity ratio H/|u|^2 -> "
                    f"{helicity.alpha0['value']:.6f}"
                )

        r.write("diagnose", "report.json", report)
        r.logger.info(f"Saved results to {r.folder}")
