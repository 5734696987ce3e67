"""Exception hierarchy used across the engine."""


class EpictrlError(Exception):
    """Base class for all engine errors."""


class ParameterError(EpictrlError, ValueError):
    pass


class HorizonError(EpictrlError, ValueError):
    pass


class ShapeError(EpictrlError, ValueError):
    pass


class ConsistencyError(EpictrlError, RuntimeError):
    """Mass balance or accounting identity violated."""


class DynamicsError(EpictrlError, RuntimeError):
    """A compartment left [0, 1] beyond round-off."""


class CapacityError(EpictrlError, RuntimeError):
    """More tests than the eligible pool can absorb (tau >= 1)."""


class StateError(EpictrlError, RuntimeError):
    pass


class NumericError(EpictrlError, ArithmeticError):
    pass


class BoundaryError(EpictrlError, ValueError):
    """Distancing profile on the boundary while the log penalty is active."""


class ConditioningError(EpictrlError, ArithmeticError):
    pass


class BudgetError(EpictrlError, ValueError):
    pass


class DataError(EpictrlError, ValueError):
    pass


class ConvergenceError(EpictrlError, RuntimeError):
    """Iteration cap reached before the sweep settled.

    ``last_distance`` holds the final sup-norm distance and ``history`` the
    per-iteration diagnostics collected so far.
    """

    def __init__(self, message, last_distance=float("nan"), history=None):
        super().__init__(message)
        self.last_distance = last_distance
        self.history = list(history or [])


class CalibrationError(EpictrlError, RuntimeError):
    """No start of the parameter search produced a usable equilibrium."""

    def __init__(self, message, starts=None):
        super().__init__(message)
        self.starts = list(starts or [])
