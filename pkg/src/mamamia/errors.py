"""Exception hierarchy shared across the toolkit."""


class MamamiaError(Exception):
    """Base class for every error raised by this package."""


class ParseError(MamamiaError, ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DomainError(MamamiaError, ValueError):
    """A value or schema falls outside the declared domain."""


class SizeError(MamamiaError, ValueError):
    """A requested sample or partition size cannot be satisfied."""


class DegenerateEstimateError(MamamiaError, ValueError):
    """An estimate was requested from no data and no smoothing."""


class ParameterError(MamamiaError, ValueError):
    pass


class BudgetError(MamamiaError, ValueError):
    """Privacy budget would be overspent."""


class ModeError(MamamiaError, RuntimeError):
    """Operation needs a fitted model but the outcome is focal-point only."""


class MetricError(MamamiaError, ValueError):
    pass


class ThreatModelError(MamamiaError, ValueError):
    """The attack configuration lacks required black-box knowledge."""


class ConfigError(MamamiaError, ValueError):
    pass
