"""Error hierarchy for the trap toolkit.

Everything derives from ``TrapDesignError`` (itself a ``ValueError``) so
callers can catch the whole family in one place. Management commands map
``ConfigError`` to exit status 2 and every other ``TrapDesignError`` to 1.
"""


class TrapDesignError(ValueError):
    """Base class for all toolkit errors"""


class GeometryError(TrapDesignError):
    """Malformed rectangle, electrode or layout"""


class FieldEvaluationError(TrapDesignError):
    """Field requested at an invalid point or for an unknown electrode"""


class ConvergenceError(TrapDesignError):
    """An iterative search did not converge"""


class EscapeError(ConvergenceError):
    """Minimum search drifted onto the electrode plane"""


class SolverError(TrapDesignError):
    """Voltage solve failed"""


class InfeasibleBoundError(SolverError):
    def __init__(self, message, electrodes=()):
        super().__init__(message)
        self.electrodes = tuple(electrodes)


class RankDeficiencyError(SolverError):
    """Allowed electrodes cannot realise the requested field/curvature"""


class WaypointError(SolverError):
    def __init__(self, message, index, position):
        super().__init__(message)
        self.index = index
        self.position = position


class CircuitError(TrapDesignError):
    """Invalid circuit element values"""


class FitError(TrapDesignError):
    """Degenerate data or a fit that did not converge"""


class TruncationError(TrapDesignError):
    """Thermal basis cannot be truncated within the configured size"""


class ConfigError(TrapDesignError):
    """Malformed or inconsistent run configuration"""


class StageError(TrapDesignError):
    def __init__(self, stage, cause):
        super().__init__(f"Stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
