"""Structured elastic net: graph-structured l1 + quadratic penalized GLMs."""

from .adaptive import AdaptiveConfig, adaptive_fit, compute_weights, initial_estimate
from .diagnostics import (
    GroupingCheck,
    IrrepresentableResult,
    SelectionReport,
    constraint_bounds,
    decorrelated_matrices,
    df_heuristic,
    grouping_bound,
    irrepresentable_check,
    kkt_residual,
    selection_metrics,
)
from .errors import (
    DataFormatError,
    DegenerateFeatureError,
    InitialEstimatorError,
    InvalidDimensionError,
    InvalidParameterError,
    InvalidPenaltyError,
    InvalidResponseError,
    NonUniqueSolutionError,
    SenetError,
    SingularSystemError,
    SizeLimitError,
)
from .graph import (
    PenaltyMatrix,
    StructuredGraph,
    build_grid,
    build_knn,
    build_path,
    cartesian_product,
    energy,
    identity_penalty,
    laplacian_of,
    load_graph,
    penalty_from_matrix,
    save_graph,
)
from .model import (
    BINOMIAL,
    GAUSSIAN,
    POISSON,
    Dataset,
    GlmFamily,
    get_family,
    glm_loss,
    read_csv,
    standardize,
)
from .solver import (
    CoefPath,
    FitConfig,
    FitResult,
    augment_data,
    brute_force_oracle,
    fit,
    lambda1_max,
    solve_gaussian,
    solve_glm,
    solve_path,
    solve_ridge,
)
from .tuning import CVResult, cross_validate

__version__ = "0.1.0"
