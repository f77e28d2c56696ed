"""Exception types raised across the package."""


class StochPEError(Exception):
    """Base class for all package errors."""


class ConstraintViolation(StochPEError):
    """A field expected in H violates the vertical-mean divergence constraint."""


class DomainError(StochPEError):
    """An operator was applied outside its domain (e.g. negative power of a field with mean)."""


class GridMismatch(StochPEError):
    """Two objects defined on different grids were combined."""


class NonFinite(StochPEError):
    """A NaN or Inf appeared during time stepping.

    ``time`` is the time of the last finite state and ``member`` the ensemble
    member index (0 for single trajectories).
    """

    def __init__(self, message, time=None, member=None):
        super().__init__(message)
        self.time = time
        self.member = member


class DegenerateInput(StochPEError):
    """A ratio was requested for input on which it is undefined."""


class EmptyEnsemble(StochPEError):
    """Statistics were requested from an empty set of records."""


class CheckpointError(StochPEError):
    """Base class for checkpoint/snapshot file problems."""


class CorruptCheckpoint(CheckpointError):
    """Checkpoint or snapshot file is truncated or fails its integrity hash."""


class VersionMismatch(CheckpointError):
    """File was written with an unsupported format version."""


class ConfigError(StochPEError):
    """Run configuration could not be parsed or validated."""

    def __init__(self, message, line=None, column=None):
        loc = ""
        if line is not None:
            loc = f"line {line}"
            if column is not None:
                loc += f", column {column}"
            loc += ": "
        super().__init__(loc + message)
        self.line = line
        self.column = column
