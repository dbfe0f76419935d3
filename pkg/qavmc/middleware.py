"""Run tracking: ids, timing, output writing and cleanup on failure."""

import csv
import logging
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import click
from pydantic import BaseModel

from qavmc.config import config_hash, load_run_config, resolve_output_dir
from qavmc.exceptions import EXIT_OK, ConfigValidationError, handle_cli_exception
from qavmc.schemas import RecordHeader, RunConfig
from qavmc.services.experiments import ExperimentOutput

logger = logging.getLogger(__name__)


class RunTracker:
    """
    Tracks one subcommand run.

    The run id is the config hash. Every file the run writes goes through the
    tracker so that a failing run can remove its partial outputs.
    """

    def __init__(self, command: str, config: RunConfig, output_dir: Optional[Path] = None):
        self.command = command
        self.config = config
        self.run_id = config_hash(config)
        self.output_dir = Path(output_dir) if output_dir else resolve_output_dir(config, command)
        self.written: List[Path] = []
        self._start: Optional[float] = None

    @property
    def seed(self) -> int:
        return self.config.seed

    @property
    def header(self) -> RecordHeader:
        return RecordHeader(config_hash=self.run_id, seed=self.seed)

    def __enter__(self) -> "RunTracker":
        self._start = time.time()
        self.output_dir.mkdir(parents=True, exist_ok=True)
        logger.info(
            f"Run started - {self.command} - output {self.output_dir} - Run ID: {self.run_id}"
        )
        return self

    def __exit__(self, exc_type, exc, tb) -> bool:
        elapsed = time.time() - self._start
        if exc is None:
            logger.info(
                f"Run completed - {self.command} - {len(self.written)} files "
                f"- Time: {elapsed:.3f}s - Run ID: {self.run_id}"
            )
            return False

        logger.error(
            f"Run failed - {self.command} - Error: {str(exc)} "
            f"- Time: {elapsed:.3f}s - Run ID: {self.run_id}"
        )
        self.cleanup()
        # Re-raise so the caller maps the exception to an exit code
        return False

    def cleanup(self) -> None:
        for path in reversed(self.written):
            try:
                path.unlink()
                logger.debug(f"Removed partial output {path}")
            except FileNotFoundError:
                pass
        self.written.clear()

    def _register(self, name: str) -> Path:
        path = self.output_dir / name
        path.parent.mkdir(parents=True, exist_ok=True)
        if path not in self.written:
            self.written.append(path)
        return path

    def write_csv(
        self,
        name: str,
        rows: Iterable[Dict[str, Any]],
        fieldnames: Optional[Sequence[str]] = None,
    ) -> Path:
        """
        Write rows with a header; every row gains config_hash and seed columns.

        Args:
            name: File name relative to the run's output directory
            rows: Row mappings
            fieldnames: Column order; taken from the first row when omitted

        Returns:
            Path of the written file
        """
        rows = list(rows)
        if fieldnames is None:
            fieldnames = list(rows[0].keys()) if rows else []
        columns = list(fieldnames) + ["config_hash", "seed"]
        path = self._register(name)
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.DictWriter(f, fieldnames=columns, restval="", lineterminator="\n")
            writer.writeheader()
            for row in rows:
                writer.writerow(
                    {**{k: _format(v) for k, v in row.items()}, "config_hash": self.run_id, "seed": self.seed}
                )
        logger.info(f"Wrote {len(rows)} rows to {path}")
        return path

    def write_json(self, name: str, record: BaseModel) -> Path:
        """Write a record model; the model carries schema_version, config_hash and seed."""
        path = self._register(name)
        with open(path, "w", encoding="utf-8") as f:
            f.write(record.json(indent=2))
            f.write("\n")
        logger.info(f"Wrote {record.__class__.__name__} to {path}")
        return path

    def write_output(self, output: ExperimentOutput) -> None:
        """Write every table, then every record, in the order the pipeline produced them."""
        for name, rows in output.tables.items():
            self.write_csv(name, rows)
        for name, record in output.records.items():
            self.write_json(name, record)


def _format(value: Any) -> Any:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(float(value))
    return value


def run_pipeline(
    command: str,
    config_path: Optional[str],
    pipeline: Callable[[RunConfig, RunTracker], None],
    seed: Optional[int] = None,
    output_dir: Optional[str] = None,
    overrides: Sequence[str] = (),
) -> int:
    """
    Load the config, run a pipeline under a tracker and map failures to exit codes.

    Returns:
        Process exit code
    """
    run_id = None
    try:
        if not config_path:
            raise ConfigValidationError("config", "no --config file given")
        config = load_run_config(config_path, seed=seed, output_dir=output_dir, overrides=overrides)
        run_id = config_hash(config)
        with RunTracker(command, config) as tracker:
            pipeline(config, tracker)
        click.echo(f"{command}: wrote {len(tracker.written)} files to {tracker.output_dir}")
        return EXIT_OK
    except Exception as exc:
        click.echo(f"Error: {str(exc)}", err=True)
        return handle_cli_exception(exc, run_id)


Experiment = Callable[[RunConfig, RecordHeader, int, bool], ExperimentOutput]


@dataclass
class CliContext:
    """Global command-line options shared by every subcommand."""

    config_path: Optional[str] = None
    seed: Optional[int] = None
    output_dir: Optional[str] = None
    overrides: Tuple[str, ...] = ()
    workers: int = 1
    progress: bool = False

    def run(self, command: str, experiment: Experiment) -> None:
        """Run an experiment pipeline and exit with its status code."""

        def pipeline(config: RunConfig, tracker: RunTracker) -> None:
            output = experiment(config, tracker.header, self.workers, self.progress)
            tracker.write_output(output)

        code = run_pipeline(
            command,
            self.config_path,
            pipeline,
            seed=self.seed,
            output_dir=self.output_dir,
            overrides=self.overrides,
        )
        click.get_current_context().exit(code)
