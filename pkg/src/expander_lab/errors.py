"""Exception types shared across the package.

Every error carries enough context to print a one-line diagnostic; the CLI maps
the classes onto exit codes.
"""


class ExpanderLabError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(ExpanderLabError, ValueError):
    """A parameter violates an operation's precondition."""


class NotAsymptoticError(ExpanderLabError):
    """Curvature has not decayed enough at the curve ends to read off a cone angle."""

    def __init__(self, message, residual):
        super().__init__(message)
        self.residual = residual


class BracketError(ExpanderLabError):
    """Root bracketing failed (target outside the achievable range)."""


class MonotonicityError(ExpanderLabError):
    """A family sweep produced a non-monotone angle sequence."""


class DegenerateImmersionError(ExpanderLabError):
    """dF is (numerically) rank deficient at the evaluation point."""


class StencilError(ExpanderLabError):
    """A finite-difference stencil would leave the chart's parameter box."""


class UndefinedPrincipalNormalError(ExpanderLabError):
    """|H| is below the guard threshold, so H/|H| is undefined."""


class GateRefusal(ExpanderLabError):
    """The candidate is too far from satisfying H = lambda F^perp."""

    def __init__(self, message, expander_residual):
        super().__init__(message)
        self.expander_residual = expander_residual


class EmptyTailError(ExpanderLabError):
    """No grid points lie outside the requested radius."""


class SelfIntersectionError(ExpanderLabError):
    """The evolving polyline folded back on itself."""


class AngleMismatchError(ExpanderLabError):
    """Flow cone angle and expander asymptotic angle disagree."""


class EmptyWindowError(ExpanderLabError):
    """The comparison window contains no usable points."""
