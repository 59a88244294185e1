"""Exception hierarchy shared by the solvers and the CLI."""


class StochsolError(Exception):
    """Base class for every error raised by this package."""

    exit_code = 1


class ArgumentError(StochsolError, ValueError):
    """A precondition on an input argument was violated."""

    exit_code = 2


class ConstructionError(ArgumentError):
    """An offspring law cannot be built for the requested parameters."""


class NumericalError(StochsolError, ArithmeticError):
    """A deterministic computation produced non-finite values or failed to converge."""

    exit_code = 3


class ExplosionError(StochsolError):
    """The live particle count of a branching tree exceeded its cap."""

    exit_code = 4


class ParseError(ArgumentError):
    """Syntax error in a field expression.

    ``offset`` is the byte offset of the offending token and ``expected``
    the set of tokens that would have been accepted there.
    """

    def __init__(self, message, offset, expected=()):
        self.offset = offset
        self.expected = frozenset(expected)
        detail = f"{message} at offset {offset}"
        if self.expected:
            detail += f" (expected one of: {', '.join(sorted(self.expected))})"
        super().__init__(detail)


class WorkerError(StochsolError):
    """A sampling worker failed; ``partial`` carries the statistics gathered so far."""

    exit_code = 5

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial
