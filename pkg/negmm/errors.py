"""
Error types for negmm

Every error carries the process exit code the CLI maps it to.
"""

from typing import Any, Dict, Optional


class NegmmError(Exception):
    """Base class for all negmm errors"""

    exit_code: int = 1

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.details = details or {}

    def __reduce__(self):
        return type(self), (self.message, self.details)


class DomainError(NegmmError, ValueError):
    """Numeric argument outside the domain of an operation"""

    exit_code = 2


class ContractError(NegmmError):
    """Shapes or traces that do not belong together"""

    exit_code = 2


class ConfigError(NegmmError):
    """Configuration file or flag could not be resolved"""

    exit_code = 2


class DataError(NegmmError):
    """Input data could not be read or written"""

    exit_code = 3


class ParseError(DataError):
    """Non-numeric cell in a CSV file"""

    def __init__(self, message: str, row: int, column: str):
        super().__init__(message, {"row": row, "column": column})
        self.row = row
        self.column = column

    def __reduce__(self):
        return type(self), (self.message, self.row, self.column)


class SchemaError(DataError):
    """Columns or dimensions do not match what the operation expects"""


class DivergenceError(NegmmError):
    """Training produced a non-finite loss"""

    exit_code = 4

    def __init__(self, epoch: int, batch: int, details: Dict[str, Any]):
        super().__init__(
            f"Non-finite loss at epoch {epoch}, batch {batch}",
            {"epoch": epoch, "batch": batch, **details},
        )
        self.epoch = epoch
        self.batch = batch

    def __reduce__(self):
        extra = {k: v for k, v in self.details.items() if k not in ("epoch", "batch")}
        return type(self), (self.epoch, self.batch, extra)


class VerificationError(NegmmError):
    """A verification suite exceeded its tolerance"""

    exit_code = 5
