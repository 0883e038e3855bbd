"""Exception hierarchy shared by every recoproc module.

The CLI reports failures by class name, so names are part of the interface.
"""


class RecoprocError(Exception):
    """Base class for all recoproc errors."""


class NotFound(RecoprocError, FileNotFoundError):
    pass


class InvalidDataset(RecoprocError):
    pass


class DecodeError(RecoprocError):
    pass


class ShapeError(RecoprocError, ValueError):
    pass


class InvalidSplit(RecoprocError, ValueError):
    pass


class InvalidParam(RecoprocError, ValueError):
    pass


class InvalidSpec(RecoprocError, ValueError):
    pass


class CorruptCheckpoint(RecoprocError):
    pass


class LabelError(RecoprocError, ValueError):
    pass


class ConfigError(RecoprocError, ValueError):
    pass


class DivergedError(RecoprocError, ArithmeticError):
    def __init__(self, step, message=None):
        self.step = step
        super().__init__(message or f"non-finite loss at step {step}")
