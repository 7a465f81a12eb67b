"""Exception hierarchy shared by every layer of the package."""

from __future__ import annotations


class ArromaticError(Exception):
    """Base class for every error raised by this package."""


# -- index translation ----------------------------------------------------

class SigmaError(ArromaticError):
    pass


class OutOfDomain(SigmaError, IndexError):
    """A composed map points outside the domain of the outer map."""


class InvalidSplit(SigmaError, ValueError):
    """A split request cannot produce a non-empty partition."""


class Overlap(SigmaError, ValueError):
    """Two maps that must be disjoint share a physical index."""


class SigmaSyntaxError(SigmaError, ValueError):
    """Malformed textual index map."""


# -- capability kernel ----------------------------------------------------

class KernelError(ArromaticError):
    pass


class OutOfBounds(KernelError, IndexError):
    pass


class Consumed(KernelError):
    """The capability was moved out, split, merged, aligned or revoked."""


class Buried(KernelError):
    """The capability is hidden by an open borrow scope."""


class ReadOnly(KernelError):
    pass


class DifferentArrays(KernelError):
    pass


class IncompatibleCapabilities(KernelError):
    """Merge inputs disagree on mode, borrowedness or borrow scope."""


class HasSiblings(KernelError):
    pass


class Partial(KernelError):
    pass


class ScopeClosed(KernelError):
    pass


class DimensionMismatch(KernelError, ValueError):
    pass


class DisjointnessViolation(KernelError, AssertionError):
    """Debug-mode check: two live capabilities overlap with a writer among them."""


# -- language front end ---------------------------------------------------

class ParseError(ArromaticError):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{line}:{col}: {message}")
        self.message = message
        self.line = line
        self.col = col


# -- evaluation and metatheory --------------------------------------------

class BudgetExceeded(ArromaticError):
    """The step budget ran out before the configuration became terminal."""

    def __init__(self, message: str, result=None):
        super().__init__(message)
        self.result = result


class GenerationExhausted(ArromaticError):
    pass


class BoundExceeded(ArromaticError):
    """Schedule exploration hit its bound; `partial` holds what was found."""

    def __init__(self, message: str, partial=None):
        super().__init__(message)
        self.partial = partial
