from __future__ import annotations

from typing import Optional


class EstimationError(ValueError):
    """Numerical failure raised by the estimation pipeline."""


class DegenerateData(EstimationError):
    pass


class InsufficientSamples(EstimationError):
    pass


class InvalidSample(EstimationError):
    pass


class EmptyComponent(EstimationError):
    pass


class IllConditioned(EstimationError):
    pass


class NonGenericTls(EstimationError):
    pass


class DegenerateSvd(EstimationError):
    pass


class Infeasible(EstimationError):
    pass


class DegenerateVariance(EstimationError):
    pass


class SingularJacobian(EstimationError):
    pass


class DegenerateAdmittance(EstimationError):
    pass


class DegenerateImpedance(EstimationError):
    pass


class ZeroTruth(EstimationError):
    pass


class ConfigError(ValueError):
    pass


class MeasurementParseError(ValueError):
    def __init__(self, message: str, *, row: Optional[int] = None, column: Optional[str] = None):
        location = []
        if row is not None:
            location.append(f"row {row}")
        if column is not None:
            location.append(f"column '{column}'")
        if location:
            message = f"{message} ({', '.join(location)})"
        super().__init__(message)
        self.row = row
        self.column = column
