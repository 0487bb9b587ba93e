"""Exception types raised across the package."""

from .config import InvalidConfig


class DomainError(ValueError):
    """An argument lies outside the domain of a formula or routine."""


class NoSteadyState(ValueError):
    """The arrival rate exceeds the largest rate with a steady-state solution."""


class InsufficientData(ValueError):
    pass


class InsufficientSamples(RuntimeError):
    """A drift-probe region was never visited during the run."""


class MissingColumn(KeyError):
    pass


class IllConditioned(RuntimeWarning):
    """S-OMP stopped early because the selected columns became nearly dependent."""


__all__ = [
    "InvalidConfig",
    "DomainError",
    "NoSteadyState",
    "InsufficientData",
    "InsufficientSamples",
    "MissingColumn",
    "IllConditioned",
]
