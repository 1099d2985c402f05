"""1-D filtering, spectral heart-rate estimation, metrics and colour baselines."""

from ..types import PpgSignal
from .baselines import chrom_baseline, pos_baseline
from .filters import butterworth_bandpass, steady_state_gain
from .hr import HR_BAND_HZ, HrSeries, estimate_hr, heart_rate
from .metrics import (
    BlandAltman,
    MetricReport,
    bland_altman,
    grouped_metrics,
    mae,
    metrics,
    nmse,
    pearson,
    psnr,
    psnr_from_mse,
    rmse,
    write_plot_tables,
    write_report,
)

__all__ = [
    "HR_BAND_HZ",
    "BlandAltman",
    "HrSeries",
    "MetricReport",
    "PpgSignal",
    "bland_altman",
    "butterworth_bandpass",
    "chrom_baseline",
    "estimate_hr",
    "grouped_metrics",
    "heart_rate",
    "mae",
    "metrics",
    "nmse",
    "pearson",
    "pos_baseline",
    "psnr",
    "psnr_from_mse",
    "rmse",
    "steady_state_gain",
    "write_plot_tables",
    "write_report",
]
