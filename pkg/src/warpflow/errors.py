"""Exception hierarchy shared by all modules."""


class WarpflowError(Exception):
    """Base class."""


class ParameterError(WarpflowError, ValueError):
    pass


class ConstructionError(WarpflowError):
    pass


class DomainError(WarpflowError, ValueError):
    pass


class ConfigurationError(WarpflowError, ValueError):
    pass


class UsageError(WarpflowError):
    pass


class FlowSignal(WarpflowError):
    """Raised by the solver when a run cannot continue.

    Carries the time, the grid location and the last valid state so callers
    can dump it.
    """

    cause = "signal"

    def __init__(self, message, t=None, x=None, state=None):
        super().__init__(message)
        self.t = t
        self.x = x
        self.state = state


class ExtinctionSignal(FlowSignal):
    cause = "extinction"


class BlowupSignal(FlowSignal):
    cause = "blowup"


class NotApplicable(UsageError):
    """The requested check is undefined for these parameters."""
