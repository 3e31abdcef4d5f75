"""
Error types raised by the workbench services.

Precondition failures derive from ``DomainValidationError`` and map to exit
status 2 in the dispatcher; everything else is a runtime failure (exit 3).
"""


class WorkbenchError(Exception):
    """Base class for every workbench failure."""


class DomainValidationError(WorkbenchError, ValueError):
    """An input violates an operation's precondition."""


class ConfigValidationError(DomainValidationError):
    """A run configuration failed form validation."""

    def __init__(self, errors):
        self.errors = errors
        fields = ', '.join(sorted(errors))
        super().__init__(f"Invalid run configuration ({fields}): {errors}")


# geometry

class SizeTooSmall(DomainValidationError):
    pass


class BadFrame(DomainValidationError):
    pass


class RatioViolation(DomainValidationError):
    pass


class TooLarge(DomainValidationError):
    """Exact enumeration requested above its budget."""


# disorder

class InvalidCouplingLaw(DomainValidationError):
    pass


class NegativeBeta(DomainValidationError):
    pass


# rc-core / rc-mc

class InvalidParameter(DomainValidationError):
    pass


class ZeroProbabilityCondition(WorkbenchError):
    pass


class OracleInconsistency(WorkbenchError):
    """Two exact computations that must agree did not."""


class FrustratedBoundary(WorkbenchError):
    pass


class InsufficientSamples(DomainValidationError):
    pass


# tension / flow / deviations

class GridNotFromZero(DomainValidationError):
    pass


class NotPlanar(DomainValidationError):
    pass


class TooFewSamples(DomainValidationError):
    pass


class ProvenanceMismatch(DomainValidationError):
    pass


class InfiniteSupport(DomainValidationError):
    pass


# wulff / coexist

class DegenerateTension(WorkbenchError):
    pass


class NonSimplePolytope(DomainValidationError):
    pass


class EventUnreachable(WorkbenchError):
    pass


class BadK(DomainValidationError):
    pass


class EmptyTranslateSet(WorkbenchError):
    pass
