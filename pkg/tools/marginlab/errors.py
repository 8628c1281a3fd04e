"""
MarginLab - Exception types
"""
from typing import Optional


class MarginLabError(Exception):
    """Base class for all lab errors"""


class ConfigurationError(MarginLabError, ValueError):
    """Invalid or infeasible configuration (maps to CLI exit code 2)"""

    def __init__(self, message: str, key: Optional[str] = None):
        super().__init__(message)
        self.key = key


class LedgerError(MarginLabError, RuntimeError):
    """Bookkeeping violation: double update in an epoch, unknown example id"""


class TrainingAborted(MarginLabError, RuntimeError):
    """Non-finite loss or gradient; records where it happened"""

    def __init__(self, message: str, epoch: Optional[int] = None, batch: Optional[int] = None):
        where = []
        if epoch is not None:
            where.append(f"epoch={epoch}")
        if batch is not None:
            where.append(f"batch={batch}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch
