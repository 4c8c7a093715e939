"""Exception types shared by every module."""


class ValidationError(ValueError):
    """Input failed a structural or range check."""


class ResolutionError(ValidationError):
    """Grid spacing too coarse for the oscillation scale.

    Attributes
    ----------
    required_n : int
        Smallest number of grid intervals per diameter meeting the guard.
    """

    def __init__(self, message, required_n):
        super().__init__(message)
        self.required_n = int(required_n)


class DegenerateInputError(ValueError):
    """Input is degenerate (zero norm, constant function, ...)."""


class SolverError(RuntimeError):
    """Iterative solver failed to reach its tolerance.

    Attributes
    ----------
    residual_history : list of float
    """

    def __init__(self, message, residual_history=()):
        super().__init__(message)
        self.residual_history = list(residual_history)
