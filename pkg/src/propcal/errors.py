"""Exception and warning types raised across the package."""


class PropcalError(Exception):
    """Base class for all package errors."""


class ConfigError(PropcalError, ValueError):
    pass


class DomainError(PropcalError, ValueError):
    pass


class ShapeError(PropcalError, ValueError):
    pass


class DegenerateLabelsError(PropcalError, ValueError):
    """Labels contain a single class where two are required."""


class StratificationError(PropcalError, ValueError):
    pass


class InsufficientDataError(PropcalError, ValueError):
    pass


class EstimationError(PropcalError, ValueError):
    pass


class BalanceError(PropcalError, ValueError):
    pass


class PairingError(PropcalError, ValueError):
    pass


class ParseError(PropcalError, ValueError):
    """Malformed input file. Message carries the row/column location."""


class BoundaryWarning(UserWarning):
    """Logistic fit diverged towards the boundary (perfect separation)."""
