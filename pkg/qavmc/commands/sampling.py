"""Proposal-histogram and chain-sampling subcommands."""

import click

from qavmc.middleware import CliContext
from qavmc.services import experiments


@click.command("histogram")
@click.pass_obj
def histogram(obj: CliContext):
    """(Hamming distance, delta-epsilon) histogram of each proposal row from one state."""
    obj.run("histogram", experiments.histogram)


@click.command("mcmc-observable")
@click.pass_obj
def mcmc_observable(obj: CliContext):
    """
    Sample the exact ground state with independent chains under each proposal.

    Writes observables.csv (pooled mean, cross-chain std, MAE against the exact
    value), chain_means.csv and autocorrelation records.
    """
    obj.run("mcmc-observable", experiments.mcmc_observable)
