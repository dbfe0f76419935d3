"""Command-line entry point."""

import logging
from typing import Optional, Tuple

import click

from qavmc.commands import gaps, sampling, vmc
from qavmc.config import config_hash, load_run_config, settings
from qavmc.exceptions import EXIT_OK, ConfigValidationError, handle_cli_exception
from qavmc.logging_config import setup_logging
from qavmc.middleware import CliContext
from qavmc.services import experiments


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.option("--config", "config_path", type=click.Path(dir_okay=False), help="YAML run configuration")
@click.option("--seed", type=int, default=None, help="Master seed (overrides the config)")
@click.option("--output-dir", default=None, help="Output directory (overrides the config)")
@click.option(
    "--set",
    "overrides",
    multiple=True,
    metavar="KEY=VALUE",
    help="Override a config value by dotted path, e.g. experiment.n_chains=10",
)
@click.option("--log-level", default=None, help="Logging level")
@click.option("--workers", type=int, default=None, help="Worker processes")
@click.option("--progress/--no-progress", default=None, help="Show progress bars")
@click.version_option(settings.app_version, prog_name=settings.app_name)
@click.pass_context
def cli(
    ctx: click.Context,
    config_path: Optional[str],
    seed: Optional[int],
    output_dir: Optional[str],
    overrides: Tuple[str, ...],
    log_level: Optional[str],
    workers: Optional[int],
    progress: Optional[bool],
):
    """Classical simulation of quantum-assisted VMC proposals."""
    setup_logging(log_level or ("DEBUG" if settings.debug else settings.log_level), settings.log_dir)
    logger = logging.getLogger(__name__)
    logger.debug(f"Starting {settings.app_name} v{settings.app_version}")

    if workers is not None and workers < 1:
        raise click.BadParameter("must be at least 1", param_hint="--workers")
    ctx.obj = CliContext(
        config_path=config_path,
        seed=seed,
        output_dir=output_dir,
        overrides=tuple(overrides),
        workers=workers or settings.workers,
        progress=settings.progress if progress is None else progress,
    )


@cli.command("validate")
@click.option(
    "--pauli-check",
    is_flag=True,
    help="Also compare the sector Hamiltonian with its Jordan-Wigner image",
)
@click.pass_obj
def validate(obj: CliContext, pauli_check: bool):
    """Parse and validate the run configuration and print its hash."""
    try:
        if not obj.config_path:
            raise ConfigValidationError("config", "no --config file given")
        config = load_run_config(
            obj.config_path, seed=obj.seed, output_dir=obj.output_dir, overrides=obj.overrides
        )
        check = experiments.pauli_check(config) if pauli_check else None
    except Exception as exc:
        click.echo(f"Error: {str(exc)}", err=True)
        click.get_current_context().exit(handle_cli_exception(exc))

    click.echo(f"config_hash={config_hash(config)} seed={config.seed}")
    if check is not None:
        n_strings, deviation = check
        click.echo(f"pauli_strings={n_strings} max_deviation={deviation:.3e}")
    click.get_current_context().exit(EXIT_OK)


cli.add_command(gaps.gap_scan)
cli.add_command(gaps.gap_size)
cli.add_command(gaps.tau_threshold)
cli.add_command(gaps.mixing_time)
cli.add_command(sampling.histogram)
cli.add_command(sampling.mcmc_observable)
cli.add_command(vmc.vmc)


def main():
    cli(prog_name=settings.app_name)


if __name__ == "__main__":
    main()
