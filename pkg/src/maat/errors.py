"""Exception hierarchy shared across the engine."""


class MaatError(Exception):
    """Base class for all engine errors."""


class DataFormatError(MaatError):
    """A file could not be parsed; carries the offending location."""

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f" [{path}" + (f":{line}]" if line is not None else "]")
        super().__init__(message + where)


class DataValidationError(MaatError):
    """Input data violates a structural invariant (empty set, bad domain)."""


class TrainingError(MaatError):
    """Model fitting diverged or had nothing to fit."""


class CapabilityError(MaatError):
    """A strategy was paired with a model kind it cannot score."""


class CapacityError(MaatError):
    """The instance is too large for an exact method."""


class ContractViolationError(MaatError, ValueError):
    """A caller broke an operation precondition."""


class PoolExhaustedError(MaatError):
    """No selectable question remains in replay mode."""


class ConfigurationError(MaatError):
    """An experiment or service configuration is inconsistent."""


class UndefinedMetricError(MaatError):
    """The metric is undefined for this input (e.g. single-class AUC)."""


class UnknownQuestionError(MaatError, KeyError):
    """Lookup of a question id outside the pool."""


class UnknownConceptError(MaatError, KeyError):
    """Lookup of a concept id outside the concept set."""
