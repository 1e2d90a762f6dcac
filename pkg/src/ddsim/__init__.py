"""Data-driven LTI simulation with Hankel/Page signal matrices.

Simulates system responses directly from recorded input-output data,
estimates them from noisy data with a maximum-likelihood signal-matrix
model, and designs the recording experiment's input to maximize
predictive accuracy under an energy budget.
"""

from .bayes import (
    KernelPrior,
    PosteriorSummary,
    PriorKind,
    make_prior,
    monotone_link,
    mutual_information,
    posterior,
)
from .design import (
    BaselineModel,
    DesignProblem,
    DesignResult,
    assemble_kkt,
    design_objective,
    estimate_baseline_fir,
    predicted_Yp,
    solve_design,
)
from .errors import (
    DdsimError,
    DegenerateProblemError,
    EstimationError,
    EvaluationError,
    InconsistentTrajectoryError,
    InputContractError,
    InsufficientDataError,
    NoSolutionError,
    SolverError,
    UndefinedFitError,
    UnobservableModelError,
)
from .exact import (
    DdSolution,
    SimulationTask,
    check_range_condition,
    check_relaxed_conditions,
    simulate_dd,
    solve_g,
)
from .harness import (
    ExperimentConfig,
    FitReport,
    fit_metric,
    run_experiment,
    run_trial,
)
from .lti import (
    StateSpaceModel,
    Trajectory,
    benchmark_system,
    controllability_rev,
    estimate_x0,
    lag,
    observability,
    simulate,
    toeplitz_matrix,
)
from .sigmat import (
    MatrixKind,
    PartitionedData,
    SignalMatrix,
    build_hankel,
    build_page,
    column_gap,
    is_page_exciting,
    is_pe,
    min_data_length,
    partition,
)
from .smm import (
    NoiseModel,
    SmmSolution,
    covariance,
    noise_inject,
    smm_objective,
    solve_smm_relaxed,
)

__version__ = "0.1.0"
