"""Exception hierarchy.

Every error carries the CLI exit status it maps to, so the command-line front
end can translate failures without a lookup table.
"""

from __future__ import annotations


class HNMError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(HNMError, ValueError):
    exit_code = 2


class EmptyError(ConfigError):
    """Form factor without coupling points."""


class NormalizationError(ConfigError):
    """Form-factor weights do not satisfy sum |c_n|^2 = 1."""


class SpacingError(ConfigError):
    """Coupling points closer than the delay T."""


class CutoffError(ConfigError):
    """Excitation cutoff below one."""


class GridMismatch(ConfigError):
    """A time or distance is not an integer number of bins."""


class DimensionError(HNMError, ValueError):
    exit_code = 2


class OrderingError(DimensionError):
    """Choi metadata does not match the supplied interventions."""


class DomainError(HNMError, ValueError):
    """Argument outside the domain of a function (negative time, ...)."""

    exit_code = 3


class WindowError(DomainError):
    """Analytic construction requested outside its validity window."""


class SupportError(DomainError):
    """Wavepacket overlaps a region swept by a coupling point."""


class ResourceError(HNMError, MemoryError):
    exit_code = 4


class TruncationOverflow(HNMError, ArithmeticError):
    """Norm lost to the excitation cutoff exceeded the configured bound."""

    exit_code = 4
