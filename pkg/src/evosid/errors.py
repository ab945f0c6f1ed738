"""Exception hierarchy shared by all evosid modules."""


class EvosidError(Exception):
    """Base class for every error raised by the package."""


class OutOfRangeError(EvosidError, ValueError):
    """A unit exponent left the configured exponent range."""


class MalformedGrammar(EvosidError, ValueError):
    pass


class NoTerminalDerivation(EvosidError):
    """The start symbol cannot be rewritten into a terminal string."""


class BudgetTooSmall(EvosidError, ValueError):
    pass


class NonFiniteError(EvosidError, ArithmeticError):
    """Expression evaluation hit a division by zero or a non-finite value."""


class CflViolation(EvosidError, ValueError):
    pass


class ConfigError(EvosidError, ValueError):
    def __init__(self, message, line=None, key=None):
        self.message = message
        self.line = line
        self.key = key
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key {key!r}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
