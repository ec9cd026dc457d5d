"""Exception hierarchy shared by all modules."""


class IntegratorError(Exception):
    """Base class for every error raised by this package."""


class NonConvergence(IntegratorError):
    """Newton iteration hit its iteration cap.

    Attributes
    ----------
    residual_norm : float
        Infinity norm of the residual at the last iterate.
    iterations : int
        Number of Newton updates performed.
    """

    def __init__(self, message, residual_norm=float("nan"), iterations=0):
        super().__init__(message)
        self.residual_norm = residual_norm
        self.iterations = iterations
        # filled in by integrate() when a trajectory aborts
        self.step_index = None
        self.trajectory = None


class SingularJacobian(IntegratorError):
    pass


class RankDeficient(IntegratorError):
    pass


class AxiomViolation(IntegratorError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class OutOfChart(IntegratorError):
    pass


class SingularLift(IntegratorError):
    pass


class InfeasibleState(IntegratorError, ValueError):
    """A state handed to a stepper is not on the constraint manifold."""


class ConfigError(IntegratorError):
    pass


class ParseError(ConfigError):
    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class ValidationError(ConfigError):
    def __init__(self, field, reason):
        super().__init__(f"{field}: {reason}")
        self.field = field
        self.reason = reason
