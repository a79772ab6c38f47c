# sitslab/errors.py
from __future__ import annotations


class SitslabError(Exception):
    """Base class for every error raised by sitslab."""


class ShapeError(SitslabError, ValueError):
    pass


class ArgumentError(SitslabError, ValueError):
    pass


class StateError(SitslabError, RuntimeError):
    pass


class DataError(SitslabError, ValueError):
    pass


class DatasetFormatError(DataError):
    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        where = []
        if row is not None: where.append(f"row {row}")
        if column is not None: where.append(f"column '{column}'")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.row = row
        self.column = column


class TrainingError(SitslabError, RuntimeError):
    def __init__(self, message: str, parameter: str | None = None):
        super().__init__(message)
        self.parameter = parameter


class ConfigError(SitslabError, ValueError):
    pass


class CheckpointError(SitslabError, ValueError):
    pass
