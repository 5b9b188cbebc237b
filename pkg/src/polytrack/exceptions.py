"""Exception types raised across the package."""


class PolytrackError(Exception):
    """Base class for all package errors."""


class DegenerateTopic(PolytrackError, ValueError):
    """A topic coincides with the reference point, so it has no direction."""


class NonInteriorReference(PolytrackError, ValueError):
    """The reference point has a zero (or negative) coordinate."""


class NoNegativeCoordinate(PolytrackError, ValueError):
    """A direction never reaches the simplex boundary."""


class ZeroResultant(PolytrackError, ArithmeticError):
    """A weighted sum of directions cancelled to (numerically) zero."""


class Infeasible(PolytrackError, ValueError):
    """No assignment satisfies the forbidden-pairing constraints."""


class TooLarge(PolytrackError, ValueError):
    """Input exceeds the size an exhaustive routine will enumerate."""


class TooFewDocs(PolytrackError, ValueError):
    """Not enough usable documents to estimate topics."""


class ParseError(PolytrackError, ValueError):
    """Malformed input file; the message carries the location."""

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        loc = []
        if line is not None:
            loc.append(f"line {line}")
        if column is not None:
            loc.append(f"column {column}")
        if loc:
            message = f"{message} ({', '.join(loc)})"
        super().__init__(message)


class ZeroRow(ParseError):
    """A topic row has no mass and cannot be normalized."""


class IdOutOfRange(ParseError):
    """A document or word id falls outside the declared header range."""


class NotConverged(PolytrackError, RuntimeError):
    """An iterative matching hit its sweep limit without a fixed point."""


class InvariantViolation(PolytrackError, AssertionError):
    """An internal consistency check failed."""
