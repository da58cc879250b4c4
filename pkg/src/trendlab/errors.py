"""Exception hierarchy shared by the library and the command line."""


class TrendlabError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(TrendlabError):
    """Invalid user configuration (exit code 2 on the command line)."""


class DataError(TrendlabError):
    """Invalid or unusable market data (exit code 3 on the command line)."""


class EmptySeries(DataError):
    pass


class NonFiniteInput(DataError):
    pass


class ParseError(DataError):
    pass


class ValidationError(DataError):
    pass


class EmptySegment(DataError):
    pass


class NonPositiveEquity(DataError):
    pass


class InvalidDimension(ConfigError):
    pass


class InvalidPeriod(ConfigError):
    pass


class InvalidSpec(ConfigError):
    pass


class SchemaMismatch(ConfigError):
    pass


class DecompositionFailure(TrendlabError):
    """Eigendecomposition of the CMA-ES covariance matrix did not converge."""
