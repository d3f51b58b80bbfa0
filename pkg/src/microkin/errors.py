"""Exception types raised across the package."""


class MicrokinError(Exception):
    """Base class for all package errors."""


class NonSquareSolder(MicrokinError):
    """Full-space interpretation requested while base and fiber dimensions differ."""


class DegenerateSolder(MicrokinError):
    """Solder form coefficients are not injective at some sampled point."""


class NegativeSquare(MicrokinError):
    """A quadratic form evaluated to a clearly negative value."""


class NotInvertible(MicrokinError):
    pass


class Singular(MicrokinError):
    """A placement block needed for an inverse is rank deficient."""


class GridTooSmall(MicrokinError):
    pass


class UnknownFamily(MicrokinError):
    pass


class InadmissibleParams(MicrokinError):
    pass


class KernelDimMismatch(MicrokinError):
    """Pseudo-metric kernel dimension differs from the base dimension."""


class NotMicroLinear(MicrokinError):
    pass


class Inconsistent(MicrokinError):
    """Invariant data cannot come from any valid placement."""


class AffineConnectionNotSupported(MicrokinError):
    pass


class PathOutsideGrid(MicrokinError):
    pass


class ScenarioError(MicrokinError):
    """Malformed scenario file or unresolved reference."""


class ExpressionSyntaxError(MicrokinError, SyntaxError):
    """Parse failure with the byte offset and a description of what was expected."""

    def __init__(self, message=None, *, offset, expected, text=""):
        self.offset = offset
        self.expected = expected
        self.text = text
        self.detail = message or f"expected {expected}"
        Exception.__init__(self, str(self))

    def __str__(self):
        return f"at offset {self.offset}: {self.detail}"


class EvaluationError(MicrokinError):
    """Expression is undefined somewhere on the grid."""
