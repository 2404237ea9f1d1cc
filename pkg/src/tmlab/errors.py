"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes: usage problems exit 2,
violated mathematical preconditions exit 3, and numerical failures
(non-convergence, overflow, singular systems) exit 4.
"""

from __future__ import annotations


class TmlabError(Exception):
    """Base class for all package-specific errors."""


class UsageError(TmlabError):
    """Malformed input: bad arguments, unreadable files, schema violations."""

    exit_code = 2


class PreconditionError(TmlabError):
    """A mathematical precondition does not hold (e.g. coefficient at or
    above the spectral threshold, witness center at a corner)."""

    exit_code = 3


class NumericalError(TmlabError):
    """A solver failed: iteration did not converge, a system was singular,
    or values left the representable range."""

    exit_code = 4
