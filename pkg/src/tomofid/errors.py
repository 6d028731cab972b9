class InvalidParameterError(ValueError):
    pass


class UnphysicalStateError(ValueError):
    pass


class NonStsFormError(ValueError):
    """Covariance matrix carries a cross term, so it is not of squeezed-thermal form."""


class CoverageError(ValueError):
    """Homodyne phases do not cover the half circle."""


class FitError(RuntimeError):
    pass


class ConvergenceError(RuntimeError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
