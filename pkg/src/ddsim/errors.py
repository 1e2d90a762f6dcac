"""Exception hierarchy shared by all ddsim modules.

Input-contract violations (bad shapes, unmet preconditions, not enough
data) are distinguished from numerical/solver failures so that the CLI
can map them to different exit codes.
"""


class DdsimError(Exception):
    """Base class for all ddsim errors."""


class InputContractError(DdsimError):
    """Arguments violate an operation's precondition or shape contract."""


class InsufficientDataError(InputContractError):
    """The signal is too short for the requested matrix or rank test."""


class UndefinedFitError(InputContractError):
    """Fit metric undefined (constant reference trajectory)."""


class UnobservableModelError(DdsimError):
    """The model has no finite lag (observability matrix never reaches full rank)."""


class InconsistentTrajectoryError(DdsimError):
    """An (input, output) pair is not a trajectory of the model within tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class NoSolutionError(DdsimError):
    """A linear system that should be consistent is not; carries the residual."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class DegenerateProblemError(DdsimError):
    """Singular or rank-deficient optimization problem."""


class EvaluationError(DdsimError):
    """Objective/covariance evaluation failed (e.g. non-PD after regularization)."""


class EstimationError(DdsimError):
    """Baseline model estimation failed."""


class SolverError(DdsimError):
    """Iterative solver failure."""
