"""Custom exceptions and error handlers for the simulation suite."""

import logging
from typing import Optional

import numpy as np

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2


class QavmcError(Exception):
    """Base exception for simulation-related errors."""

    pass


class ConfigValidationError(QavmcError):
    """Exception raised when a run configuration is invalid."""

    def __init__(self, field: str, message: str):
        self.field = field
        self.message = message
        super().__init__(f"Invalid configuration ({field}): {message}")


class FcidumpFormatError(QavmcError):
    """Exception raised when an FCIDUMP file cannot be parsed."""

    def __init__(self, path: str, message: str):
        self.path = path
        self.message = message
        super().__init__(f"FCIDUMP error ({path}): {message}")


class SectorError(QavmcError):
    """Exception raised for empty or inconsistent particle-number sectors."""

    pass


class KernelError(QavmcError):
    """Exception raised when a proposal kernel violates its contract."""

    pass


class OutOfSupportError(QavmcError):
    """Exception raised when a chain state has zero target weight."""

    pass


class IntegralError(QavmcError):
    """Exception raised when molecular integrals are inconsistent."""

    pass


class NumericalError(QavmcError):
    """Exception raised when a numerical routine fails or diverges."""

    pass


def handle_cli_exception(exc: Exception, run_id: Optional[str] = None) -> int:
    """
    Map an exception raised by a subcommand to a process exit code.

    Args:
        exc: The exception that escaped the subcommand
        run_id: Identifier of the failing run, when known

    Returns:
        Exit code (1 validation, 2 numerical failure)
    """
    if isinstance(exc, (NumericalError, np.linalg.LinAlgError)):
        logger.error(f"Numerical failure: {str(exc)} - Run ID: {run_id}")
        return EXIT_NUMERICAL

    if isinstance(exc, QavmcError):
        logger.warning(f"{exc.__class__.__name__}: {str(exc)} - Run ID: {run_id}")
        return EXIT_VALIDATION

    logger.error(f"Unhandled exception: {str(exc)} - Run ID: {run_id}", exc_info=True)
    return EXIT_NUMERICAL
