"""Exception hierarchy shared across the package."""


class GdpError(Exception):
    """Base class for every error raised by gdplace."""


class DimensionError(GdpError, ValueError):
    """Operand shapes are incompatible."""


class DomainError(GdpError, ValueError):
    """Input lies outside an operation's domain (log of 0, empty max, ...)."""


class ContractError(GdpError, ValueError):
    """A caller violated a precondition."""


class CycleError(ContractError):
    """The graph contains a directed cycle."""


class ParameterError(GdpError, ValueError):
    """Invalid generator or placer parameters."""


class ParseError(GdpError, ValueError):
    """Malformed serialized input. ``location`` points at the offending field."""

    def __init__(self, message: str, location: str = ""):
        self.location = location
        super().__init__(f"{location}: {message}" if location else message)


class CheckpointError(GdpError, ValueError):
    """Checkpoint version or shape mismatch."""


class TrainingError(GdpError, RuntimeError):
    """Training produced a non-finite value and was aborted."""
