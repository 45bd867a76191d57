"""Exception hierarchy shared across the package."""


class BeliefRiskError(Exception):
    """Base class for all package errors."""


class InvalidInput(BeliefRiskError, ValueError):
    pass


class DegenerateCovariance(BeliefRiskError, ValueError):
    """Raised when a covariance is too close to singular to whiten."""


class OffDrivableArea(BeliefRiskError):
    pass


class SamplingExhausted(BeliefRiskError):
    """Rejection sampling ran out of attempts for one sample index."""

    def __init__(self, sample_index: int, attempts: int):
        super().__init__(f"sample {sample_index}: no drivable pose after {attempts} attempts")
        self.sample_index = sample_index
        self.attempts = attempts


class EstimationFailed(BeliefRiskError):
    pass


class ParseError(BeliefRiskError):
    """Scenario text could not be parsed; carries the offending line or field."""

    def __init__(self, message: str, *, line: int | None = None, field: str | None = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(field)
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)
        self.line = line
        self.field = field


class ValidationError(BeliefRiskError):
    """Scenario parsed but violates one or more semantic rules."""

    def __init__(self, findings: list[str]):
        super().__init__("; ".join(findings))
        self.findings = list(findings)


class OutputError(BeliefRiskError, OSError):
    """Writing a table or figure failed or was refused."""
