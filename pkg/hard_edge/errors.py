"""
Exception hierarchy for the hard-edge toolkit.
Library code raises these; the CLI maps them to exit codes.
"""


class HardEdgeError(Exception):
    """Base class for all toolkit errors."""
    exit_code = 3


class PrecisionExhaustedError(HardEdgeError):
    """Precision escalation hit the configured cap."""


class PoleError(HardEdgeError):
    """Evaluation at a pole (e.g. gamma at a non-positive integer)."""


class ConvergenceError(HardEdgeError):
    """Quadrature, series or iterative solver failed to converge."""


class BranchPointProximityError(HardEdgeError):
    """Two curve roots are too close to be labeled reliably."""


class CutEvaluationError(HardEdgeError):
    """Evaluation on a branch cut or jump contour without a side."""


class OutOfDomainError(HardEdgeError):
    """Argument outside the domain where an evaluator is defined."""


class ConfluentExponentError(HardEdgeError):
    """Frobenius exponents collide modulo integers."""


class SingularSystemError(HardEdgeError):
    """A linear system or principal minor is numerically singular."""


class ConfigError(HardEdgeError):
    """Invalid run configuration."""
    exit_code = 2
