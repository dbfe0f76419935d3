"""VMC optimisation subcommand."""

import click

from qavmc.middleware import CliContext
from qavmc.services import experiments


@click.command("vmc")
@click.pass_obj
def vmc(obj: CliContext):
    """
    Optimise the RBM wavefunction with SR-preconditioned Adam.

    Sampled mode runs once per proposal; exact mode weights the whole basis by
    |psi|^2 and runs once. Writes a trajectory CSV and a parameter checkpoint per run.
    """
    obj.run("vmc", experiments.vmc)
