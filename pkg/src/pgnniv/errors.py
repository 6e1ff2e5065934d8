"""Exception types shared across the package."""


class PGNNIVError(Exception):
    """Base class for all package errors."""


class ShapeError(PGNNIVError, ValueError):
    pass


class DomainError(PGNNIVError, ValueError):
    """Argument outside the mathematical domain of a formula."""


class ContractError(PGNNIVError, ValueError):
    """Caller violated a documented precondition."""


class ConfigurationError(PGNNIVError, ValueError):
    pass


class SchemaError(PGNNIVError, ValueError):
    pass


class ParseError(PGNNIVError, ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DivergenceError(PGNNIVError, RuntimeError):
    """Training objective became non-finite or exceeded the divergence bound."""

    def __init__(self, iteration: int, value: float):
        self.iteration = iteration
        self.value = value
        super().__init__(f"training diverged at iteration {iteration}: OF={value!r}")
