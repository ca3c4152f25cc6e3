"""Exception hierarchy shared across the package.

Degenerate* exceptions signal data configurations on which a test statistic
is undefined (zero variance, nothing left after truncation, ...).  They are
deliberately distinct from ValueError, which is reserved for caller mistakes
such as malformed arguments.
"""

from __future__ import annotations


class ZeroRankError(Exception):
    """Base class for all package-specific errors."""


class DegenerateData(ZeroRankError):
    """Base class for data configurations on which a test is undefined."""


class DegenerateAllZeros(DegenerateData):
    """Every observation (or every retained observation of a group) is zero."""


class DegenerateConstant(DegenerateData):
    """All pooled observations are identical, so the rank variance is zero."""


class DegenerateVariance(DegenerateData):
    """A null-variance estimate came out non-positive."""


class UndefinedARE(ZeroRankError):
    """Efficiency ratio has a vanishing denominator (effects cancel exactly)."""


class TableParseError(ZeroRankError):
    """Malformed abundance table or metadata file."""


class MetadataMismatch(ZeroRankError):
    """Samples in the abundance table lack metadata rows (or vice versa)."""


class ConfigError(ZeroRankError):
    """Invalid simulation or CLI configuration."""
