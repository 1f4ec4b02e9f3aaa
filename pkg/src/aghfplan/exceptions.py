"""Exception types raised across the package."""


class AghfError(Exception):
    """Base class for all package errors."""


class ParseError(AghfError):
    def __init__(self, line, reason):
        self.line = line
        self.reason = reason
        super().__init__(f"line {line}: {reason}")


class ModelError(AghfError):
    """Structurally invalid robot model (bad tree, axis, or inertia)."""


class ScenarioError(AghfError):
    """Scenario inconsistent with its model or with parameter invariants."""


class InvalidDegree(AghfError, ValueError):
    pass


class OutOfDomain(AghfError, ValueError):
    pass


class SingularMass(AghfError, ArithmeticError):
    def __init__(self, message="mass matrix is not positive definite", node=None):
        self.node = node
        if node is not None:
            message = f"{message} (node {node})"
        super().__init__(message)


class BoundaryMismatch(AghfError, ValueError):
    pass


class Diverged(AghfError, ArithmeticError):
    pass


class StepUnderflow(AghfError, ArithmeticError):
    pass
