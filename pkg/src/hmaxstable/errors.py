"""Exception types raised across the package."""


class ParameterError(ValueError):
    """Invalid distribution or model parameter (e.g. non-positive scale)."""


class DomainError(ValueError):
    """Argument outside the domain of a function."""


class DegenerateLocationError(ValueError):
    """A location is too far from every knot for the kernel weights to be defined."""


class NumericalError(ArithmeticError):
    """A numerical routine (factorisation, conditioning) failed."""


class InitializationError(RuntimeError):
    """The sampler could not find a starting state with finite likelihood."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report or {}


class ContractError(RuntimeError):
    """An API was used outside its documented calling protocol."""


class InputError(ValueError):
    """Mismatched or inconsistent inputs (e.g. different site sets)."""


class ParseError(ValueError):
    """A data file violates its schema."""
