"""Exception hierarchy shared by every module of the package."""


class HieraggError(Exception):
    """Base class for all errors raised by hieragg."""


class DomainError(HieraggError, ValueError):
    """An argument lies outside the mathematical domain of a function."""


class ParameterError(HieraggError, ValueError):
    """A model parameter (tree shape, copula parameter, ...) is invalid."""


class NumericError(HieraggError, ArithmeticError):
    """A numerical check failed (non-PSD matrix, degenerate denominator, ...)."""


class ResourceLimitError(HieraggError, RuntimeError):
    """A configured size or memory cap would be exceeded."""


class ConfigError(HieraggError, ValueError):
    """An experiment configuration could not be parsed or validated.

    ``field`` is a dotted path into the JSON document; ``line`` is set for
    syntax errors.
    """

    def __init__(self, message: str, field: str | None = None, line: int | None = None):
        self.field = field
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field '{field}'")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)
