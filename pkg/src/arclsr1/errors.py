"""Exception hierarchy shared across the package."""


class ArcError(Exception):
    """Base class for all errors raised by arclsr1."""


class InvalidArgument(ArcError, ValueError):
    pass


class NumericFailure(ArcError, ArithmeticError):
    """Non-finite values or an iterative kernel that failed to converge."""


class SingularSystem(NumericFailure):
    pass


class IllConditionedMetric(NumericFailure):
    """The right-hand matrix of a generalized eigenproblem is not SPD."""


class SingularMemory(NumericFailure):
    """The middle matrix of the compact SR1 form is numerically singular."""


class ParseError(ArcError, ValueError):
    pass


class ConfigError(ArcError, ValueError):
    pass
