"""Exception hierarchy shared by all modules."""


class VortexFlowError(Exception):
    """Base class for package errors."""


class DomainError(VortexFlowError, ValueError):
    """A point lies outside the domain or two points coincide."""


class ConfigurationError(VortexFlowError, ValueError):
    """A vortex configuration or solver configuration is invalid."""


class ContextError(VortexFlowError, ValueError):
    """A kernel context is inconsistent (bad map, bad boundary data)."""


class ResolutionError(VortexFlowError, ValueError):
    """The grid cannot resolve the requested structure."""


class UsageError(VortexFlowError, ValueError):
    """An operation was called with inputs outside its contract."""


class UnsupportedError(VortexFlowError, NotImplementedError):
    """The requested variant is not implemented."""


class NumericalBlowupError(VortexFlowError, FloatingPointError):
    """A time stepper produced non-finite values.

    The last finite state is kept in ``last_state``.
    """

    def __init__(self, message, last_state=None):
        super().__init__(message)
        self.last_state = last_state
