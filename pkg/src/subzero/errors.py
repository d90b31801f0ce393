"""Exception hierarchy shared across the package.

Every error raised on purpose derives from :class:`SubzeroError` and carries a
``category`` string that the CLI maps to a process exit code.
"""


class SubzeroError(Exception):
    category = "error"


class DomainError(SubzeroError, ValueError):
    """Invalid argument, inconsistent shapes, or infeasible configuration."""

    category = "domain"


class DegenerateDataError(SubzeroError, ValueError):
    """Input degenerate for the requested operation (zero norm, empty set)."""

    category = "degenerate"


class NumericsError(SubzeroError, RuntimeError):
    """Non-finite values or numerical breakdown during computation."""

    category = "numerics"
