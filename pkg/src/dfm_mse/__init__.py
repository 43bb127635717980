"""Finite-sample MSEs of factor estimates in approximate dynamic factor models.

Nine extractors (GLS/WLS/OLS least squares, full/diagonal/spherical linear
projections and Kalman filters), their exact MSE matrices under a possibly
mis-specified idiosyncratic covariance, and a seeded Monte Carlo harness.
"""

from .estimators import (
    TABLE_ORDER,
    FactorEstimate,
    KalmanState,
    Method,
    extract,
    extract_lp,
    extract_ls,
    gain_schedule,
    kalman_filter,
)
from .exceptions import (
    ConfigError,
    DfmError,
    NoConvergence,
    NonPsdPropagation,
    NonStationary,
    NotIdentified,
    NotPositiveDefinite,
    SingularNormalEquations,
)
from .model import (
    CovarianceSpec,
    CovMode,
    DfmParameters,
    FactorPath,
    Panel,
    ScenarioConfig,
    build_state_noise_cov,
    scenario_parameters,
    simulate,
    validate_identification,
)
from .montecarlo import (
    BandSeries,
    ExperimentResult,
    band_series,
    coverage_check,
    run_experiment,
    scaling_study,
)
from .mse_engine import (
    MseReport,
    SteadyStateSolve,
    asymptotic_variance,
    equivalence_gap,
    mse_kf_riccati,
    mse_lp,
    mse_ls,
    theoretical_mse,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
