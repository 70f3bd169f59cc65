"""Exception hierarchy shared by all fapsm modules.

The CLI maps these onto process exit codes: validation problems exit 1,
file/store problems exit 2, numerical failures exit 3.
"""


class FapsmError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(FapsmError):
    """Inputs violate a structural precondition (shapes, labels, config)."""


class IncomparablePairError(ValidationError):
    """No mutually non-occluded patch exists between two signatures."""


class NoCandidatesError(ValidationError):
    """Every patch was rejected and no baseline vote is available."""


class StoreError(FapsmError):
    """A persisted file is missing, malformed, or has a wrong version."""


class NumericalError(FapsmError):
    """A solver failed to converge or produced non-finite values."""
