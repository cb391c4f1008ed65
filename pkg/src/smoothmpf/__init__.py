"""Smooth multi-period forecasting: point and quantile forecasts for many
horizons at once, with coefficients constrained to vary smoothly across
horizons."""

from .basis import BasisMatrix, BasisSpec, basis_for, build_basis
from .calibration import CalibrationMargins, apply_margins, compute_margins, interval_errors
from .lsq import (
    CoefficientSet,
    ForecastFrame,
    fit_baseline,
    fit_smooth,
    fit_smooth_auto,
    fit_smooth_weighted,
    predict,
    predict_design,
)
from .metrics import MetricReport, compute_metrics, per_ahead_metrics
from .panel import DesignSet, PanelDataset, TaskSpec, build_design, load_panel, split_by_time
from .quantile import (
    QuantileCoefficientSet,
    fit_baseline_q,
    fit_quantiles,
    fit_smooth_q,
    pinball,
    solve_weighted_qr,
)
from .simulation import SimConfig, cv_select_df, simulate

__version__ = "0.1.0"
