"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """A prior or filter configuration is invalid (e.g. non-SPD prior covariance)."""


class NumericalDegeneracyError(RuntimeError):
    """A factorization failed on a matrix that should have been positive definite."""


class FilterDegeneracyError(RuntimeError):
    """All particle weights collapsed to zero; the filter cannot continue."""


class DataFormatError(ValueError):
    """An input file does not match the documented format."""
