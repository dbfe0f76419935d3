"""Spectral-gap and mixing-time subcommands."""

import click

from qavmc.middleware import CliContext
from qavmc.services import experiments


@click.command("gap-scan")
@click.pass_obj
def gap_scan(obj: CliContext):
    """
    Spectral gap of every proposal against U (Hubbard) or the FCIDUMP sweep (molecules).

    Quantum proposals report the largest gap over their tau grid. Writes
    gaps.csv and, for scanned kernels, tau_scan.csv.
    """
    obj.run("gap-scan", experiments.gap_scan)


@click.command("gap-size")
@click.pass_obj
def gap_size(obj: CliContext):
    """
    Spectral gap against system size with delta(N) = a 2^(-k N) fits.

    Writes gaps.csv, fits.csv and one fit_<proposal>.json per proposal.
    """
    obj.run("gap-size", experiments.gap_size)


@click.command("tau-threshold")
@click.pass_obj
def tau_threshold(obj: CliContext):
    """First tau at which the Quantum gap reaches c times the Effective gap."""
    obj.run("tau-threshold", experiments.tau_threshold_scan)


@click.command("mixing-time")
@click.pass_obj
def mixing_time(obj: CliContext):
    """Spectral-gap bounds on the mixing time and the exact value for small sectors."""
    obj.run("mixing-time", experiments.mixing_time)
