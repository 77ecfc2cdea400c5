"""Exception hierarchy shared by the estimation pipeline."""


class ElvolError(Exception):
    """Base class for all package errors."""


class InputError(ElvolError):
    """Malformed or degenerate input data."""


class DegenerateFrameError(InputError):
    """The frame cannot support selection-model fitting (e.g. all units selected)."""


class NonConvergenceError(ElvolError):
    """An iterative solver hit its iteration cap or stalled.

    ``diagnostics`` carries whatever the solver had at the point of failure.
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics


class SingularSystemError(ElvolError):
    """A linear system needed by an estimator is (numerically) singular."""


class SingularNormalEquations(SingularSystemError):
    """Gauss-Newton normal equations are rank deficient."""


class SeparationError(ElvolError):
    """Logistic MLE does not exist (complete/quasi-complete separation)."""


class InfeasibleConstraintsError(ElvolError):
    """EL targets lie outside the convex hull of the sample constraint values."""

    def __init__(self, message, label=None):
        super().__init__(message)
        self.label = label
