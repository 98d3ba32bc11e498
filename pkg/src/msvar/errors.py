"""Exception types shared across the package."""


class MsvarError(Exception):
    """Base class for package errors."""


class ConfigError(MsvarError):
    """Invalid run configuration or input schema (CLI exit code 2)."""


class NumericalError(MsvarError):
    """Numerical failure at run time (CLI exit code 3)."""


class FilterError(NumericalError):
    """Hamilton filter failure: a time step assigns zero density to every regime."""


class NonErgodicChainError(NumericalError):
    """Transition matrix has a unit eigenvalue of multiplicity greater than one."""


class EnumerationLimitError(ValueError):
    """Regime-path enumeration would exceed the configured bound."""
