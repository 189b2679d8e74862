"""Exception hierarchy.

Every error carries an ``exit_code`` category used by the command line:
2 for configuration problems, 3 for data problems and 4 for numeric or
budget failures.
"""


class AffectError(Exception):
    exit_code = 3


class ConfigError(AffectError):
    exit_code = 2


class DataError(AffectError):
    exit_code = 3


class NumericError(AffectError):
    exit_code = 4


class OutOfRange(DataError, ValueError):
    pass


class UnknownLabel(DataError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class LayoutMismatch(DataError, ValueError):
    pass


class InvalidTransition(DataError, ValueError):
    pass


class DimensionMismatch(DataError, ValueError):
    pass


class TapeMismatch(NumericError, ValueError):
    pass


class BudgetExceeded(NumericError):
    pass


class SingularSystem(NumericError):
    pass


class DegenerateInput(NumericError, ValueError):
    pass


class OutOfDomain(NumericError, ValueError):
    pass


class EmptyData(DataError, ValueError):
    pass


class EmptyInput(DataError, ValueError):
    pass


class EmptyText(DataError, ValueError):
    pass


class InsufficientData(DataError, ValueError):
    pass


class CoverageGap(DataError, ValueError):
    pass


class LexiconSizeMismatch(DataError, ValueError):
    pass


class TooSmall(DataError, ValueError):
    pass


class ParseError(DataError, ValueError):
    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class SchemaViolation(ParseError):
    pass
