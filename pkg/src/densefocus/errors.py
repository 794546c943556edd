"""Exception taxonomy shared by every public entry point."""


class DenseFocusError(Exception):
    """Base class for all library-raised errors."""


class InvalidArgumentError(DenseFocusError, ValueError):
    """A caller-supplied value violates an operation's contract
    (bad shape, non-positive extent, mismatched channels, ...)."""


class FormatError(DenseFocusError, ValueError):
    """A file or byte stream does not match its declared on-disk format."""


class UnsupportedOperationError(DenseFocusError, TypeError):
    """The operation cannot be applied to this input kind, e.g. asking
    for gradients through a non-differentiable stage."""


class NumericError(DenseFocusError, ArithmeticError):
    """A computation produced non-finite values or failed a numeric gate."""
