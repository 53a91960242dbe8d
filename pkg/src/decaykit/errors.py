"""Exception types shared across the toolkit."""


class QuadratureError(RuntimeError):
    """Raised when an integral cannot be evaluated to the requested tolerance.

    Carries the tolerance that was actually achieved so callers can decide
    whether the value is still usable.
    """

    def __init__(self, message, achieved_tol=None):
        super().__init__(message)
        self.achieved_tol = achieved_tol


class RankDeficiencyError(RuntimeError):
    """Raised when the normal equations are singular.

    ``null_direction`` holds the offending parameter combination as a
    human-readable string, e.g. ``"0.707*C1 - 0.707*C2"``.
    """

    def __init__(self, message, null_direction=None):
        super().__init__(message)
        self.null_direction = null_direction


class DegenerateDataError(ValueError):
    """Raised when the data carry no usable information (e.g. all-zero counts)."""


class EvaluationError(ValueError):
    """Raised when a model cannot be evaluated where the data require it."""


class SchemaError(ValueError):
    """Raised when a file parses but does not have the expected structure."""
