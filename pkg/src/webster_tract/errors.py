"""Exception and warning types shared across the package."""


class WebsterError(Exception):
    pass


class DomainError(WebsterError, ValueError):
    """An argument lies outside the domain of the operation."""


class StabilityError(WebsterError):
    """Courant number above 1: the explicit scheme would diverge."""


class NumericalBlowup(WebsterError):
    """Field magnitude exceeded the blowup guard during stepping."""


class SilenceError(WebsterError, ValueError):
    pass


class EstimationError(WebsterError):
    pass


class UnvoicedError(WebsterError):
    pass


class SampleRateError(WebsterError, ValueError):
    pass


class ConfigError(WebsterError, ValueError):
    pass


class ConvergenceWarning(UserWarning):
    pass
