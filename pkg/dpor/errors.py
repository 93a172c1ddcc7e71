"""
Exception hierarchy. Each error knows the exit code the CLI reports for it.
"""

from typing import Optional

EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3


class DporError(Exception):
    """Base class for every error raised by the engine."""

    exit_code = EXIT_DATA


class ConfigError(DporError):
    exit_code = EXIT_USAGE


class LedgerFormatError(DporError):
    """A ledger record that cannot be accepted."""

    def __init__(self, message: str, line_no: Optional[int] = None, field: Optional[str] = None):
        self.line_no = line_no
        self.field = field
        where = []
        if line_no is not None:
            where.append(f"line {line_no}")
        if field:
            where.append(f"field '{field}'")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(f"{prefix}{message}")


class BallotError(DporError):
    pass


class PartitionError(DporError):
    pass


class ScenarioError(DporError):
    pass


class DegenerateRoundError(DporError):
    """The round carries no transfer volume, so no chain can be built."""


class ConvergenceError(DporError):
    exit_code = EXIT_NUMERICAL

    def __init__(self, message: str, iterations: int):
        self.iterations = iterations
        super().__init__(f"{message} (after {iterations} iterations)")
