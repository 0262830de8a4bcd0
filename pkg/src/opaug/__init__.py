"""Operator augmentation for noisy elliptic linear systems.

Shrinkage-style estimators that subtract an auxiliary term from a noisy
inverse operator, bootstrap Monte-Carlo machinery to size the subtraction,
truncated-series accelerations with soft/hard/shifted windows, exact
small-instance oracles, and a benchmark harness.
"""

from .augmentation import (
    HARD,
    SOFT,
    AugmentationEstimate,
    AugmentationSpec,
    Method,
    WindowKind,
    WindowTag,
    augmented_solve,
    estimate_beta_ag,
    estimate_beta_asteag,
    estimate_beta_basic,
    estimate_beta_eag,
    estimate_beta_teag,
    series_terms,
    series_terms_batch,
    shifted,
    window,
    window_denom,
    window_weights,
)
from .errors import OpaugError
from .evaluation import (
    BenchmarkReport,
    BenchmarkRow,
    RunConfig,
    TrialEngine,
    aggregate,
    build_instance,
    run_benchmark,
    run_trial,
)
from .linalg import (
    Factorization,
    ProbeCorrelation,
    SpdOperator,
    factorize,
    generalized_spectral_norm,
    sample_probe,
    solve,
)
from .noise import DiscreteEnsemble, MatrixFamily, NoiseModel, make_discrete
from .problems import (
    IncidenceStructure,
    LaplacianStructure,
    ProblemInstance,
    build_grid_1d,
    build_grid_2d,
    bundled_graph,
    load_edge_list,
    select_boundary,
    shifted_instance,
)

__version__ = "0.1.0"

__all__ = [
    "AugmentationEstimate",
    "AugmentationSpec",
    "BenchmarkReport",
    "BenchmarkRow",
    "DiscreteEnsemble",
    "Factorization",
    "HARD",
    "IncidenceStructure",
    "LaplacianStructure",
    "MatrixFamily",
    "Method",
    "NoiseModel",
    "OpaugError",
    "ProbeCorrelation",
    "ProblemInstance",
    "RunConfig",
    "SOFT",
    "SpdOperator",
    "TrialEngine",
    "WindowKind",
    "WindowTag",
    "aggregate",
    "augmented_solve",
    "build_grid_1d",
    "build_grid_2d",
    "build_instance",
    "bundled_graph",
    "estimate_beta_ag",
    "estimate_beta_asteag",
    "estimate_beta_basic",
    "estimate_beta_eag",
    "estimate_beta_teag",
    "factorize",
    "generalized_spectral_norm",
    "load_edge_list",
    "make_discrete",
    "run_benchmark",
    "run_trial",
    "sample_probe",
    "select_boundary",
    "series_terms",
    "series_terms_batch",
    "shifted",
    "shifted_instance",
    "solve",
    "window",
    "window_denom",
    "window_weights",
]
