"""Hierarchical forecasting with multi-stage reconciliation."""
from .bo import BOConfig, EnsembleWeights, acquisition, combine, fit_surrogate, gp_posterior, optimize_weights
from .forecasters import ForecasterSpec, FitState, StepInfo, fit, predict, select_hyperparams
from .hierarchy import (
    CoherenceReport,
    Hierarchy,
    HierarchyError,
    aggregate_bottom_up,
    build_hierarchy,
    check_coherence,
    load_hierarchy_csv,
    summing_matrix,
)
from .ingestion import BacktestFold, SeriesFrame, build_series_frame, load_long_csv, make_folds
from .kernels import BACKEND
from .metrics import ape, level_summary
from .reconcile import (
    ForecastSet,
    ProportionTable,
    hhafa_adjust,
    mintrace_wls,
    run_multistage,
    ssw_fs,
    topdown_forecast,
    topdown_proportions,
)
from .spectral import SeasonalitySet, dominant_periods, jaccard, periodogram

__version__ = "0.1.0"
