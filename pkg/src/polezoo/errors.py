"""Exception types shared across the package.

The CLI maps these onto its exit-code contract: usage/contract problems
exit 1, file problems exit 2, numerical failures exit 3.
"""


class ContractViolation(ValueError):
    """A caller broke a documented precondition (bad shape, bad range, ...)."""


class FileFormatError(ValueError):
    """A persisted artifact is corrupt or truncated.

    `offset` is the byte offset at which parsing failed, when known.
    """

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class RecordNotFound(LookupError):
    """A requested record id does not exist in the zoo."""


class NumericalError(RuntimeError):
    """Training or optimization produced non-finite values."""
