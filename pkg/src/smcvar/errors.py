"""Exception types raised by the filter, the resamplers and the oracles."""


class SMCError(Exception):
    """Base class for all errors raised by :mod:`smcvar`."""


class InvalidConfigurationError(SMCError, ValueError):
    """A model, filter or experiment was configured with unusable values."""


class DegenerateWeightsError(SMCError):
    """Every incremental weight at a stage is zero.

    Attributes
    ----------
    stage : int
        Stage (1-based) at which the weights collapsed.
    cv2_trace : list
        cv^2 values recorded up to the failing stage, when known.
    """

    def __init__(self, stage, message=None, cv2_trace=None):
        self.stage = stage
        self.cv2_trace = list(cv2_trace) if cv2_trace is not None else []
        super().__init__(message or f"all incremental weights are zero at stage {stage}")


class PopulationExtinctionError(SMCError):
    """Resampling produced zero offspring."""

    def __init__(self, stage, message=None, cv2_trace=None):
        self.stage = stage
        self.cv2_trace = list(cv2_trace) if cv2_trace is not None else []
        super().__init__(message or f"population went extinct when resampling at stage {stage}")


class ContractViolationError(SMCError, ValueError):
    """An input violated a documented precondition (e.g. weights not normalized)."""


class OracleError(SMCError):
    """An exact computation could not be carried out or failed a self-check."""


class EnumerationBudgetError(OracleError):
    """Exhaustive enumeration would exceed the configured atom budget."""


class AmbiguousScheduleError(OracleError):
    """A limiting cv^2 lies within the safety margin of the threshold."""
