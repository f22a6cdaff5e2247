"""Exception hierarchy shared by the library and the command line."""


class ProMError(Exception):
    """Base class for all errors raised by :mod:`prommask`."""


class DataValidationError(ProMError, ValueError):
    """Input arrays or files are malformed (wrong shape, non-finite, bad header)."""


class ConfigurationError(ProMError, ValueError):
    """A hyperparameter or option is outside its valid range."""


class UndefinedMetricError(ProMError, ValueError):
    """A metric is undefined for the given inputs (e.g. zero-norm target)."""


class NumericalFailureError(ProMError, FloatingPointError):
    """Optimization produced non-finite values.

    Parameters
    ----------
    message : str
        Human readable description.
    iteration : int, optional
        Iteration index at which the failure was detected.
    trace : TrainTrace, optional
        Records collected before the failure.
    """

    def __init__(self, message, iteration=None, trace=None):
        super().__init__(message)
        self.iteration = iteration
        self.trace = trace
