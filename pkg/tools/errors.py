"""Error taxonomy shared by every layer of the recovery toolkit."""


class RecoveryError(Exception):
    """Base class for all errors raised by the toolkit."""


class DomainError(RecoveryError, ValueError):
    """An input value lies outside the domain of the operation."""


class PreconditionError(RecoveryError, ValueError):
    """An operation was called outside its precondition (e.g. G' at x = 0)."""


class DivergedError(RecoveryError, ArithmeticError):
    """An evaluation produced non-finite values or exceeded the divergence guard."""


class SpecError(RecoveryError, ValueError):
    """A spec file or override could not be read or validated."""
