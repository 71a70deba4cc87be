"""Exception hierarchy shared by all modules."""


class SpeedPlanError(Exception):
    pass


class InvalidParameterError(SpeedPlanError, ValueError):
    """A physical or numerical parameter is outside its admissible range."""


class InvalidArgumentError(SpeedPlanError, ValueError):
    """Array shapes or option values do not match the instance."""


class DomainError(SpeedPlanError, ValueError):
    """A function was evaluated outside of its domain (e.g. ``w <= 0``)."""


class NoSolutionError(SpeedPlanError, ValueError):
    """An equation has no admissible root."""


class AssumptionViolation(SpeedPlanError):
    """A structural assumption required for soundness does not hold."""


class ConvergenceError(SpeedPlanError):
    """Iteration cap reached; carries the last iterates."""

    def __init__(self, message, upper=None, lower=None, iterations=0):
        super().__init__(message)
        self.upper = upper
        self.lower = lower
        self.iterations = iterations


class InconsistentBoundsError(SpeedPlanError, ValueError):
    """Lower envelope exceeds upper envelope somewhere."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class DPFailure(SpeedPlanError):
    """No grid-feasible path; ``stage`` is the 1-based blocking position."""

    def __init__(self, message, stage):
        super().__init__(message)
        self.stage = stage
