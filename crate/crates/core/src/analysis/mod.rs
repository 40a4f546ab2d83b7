//! Metrics and experiment drivers.

mod eval;
mod experiments;
mod metrics;
mod range;
mod sweep;

pub use eval::{evaluate, evaluate_reference, evaluate_simulated, predict, prediction_mask, score, Executor};
pub use experiments::{
    abfp_ablation, layer_sensitivity_scan, quantization_ablation, AbfpComparison, AblationRow,
    AblationSetting, AblationTable, SensitivityRow,
};
pub use metrics::{mean_iou, pixel_accuracy, Confusion, MetricReport, PercentOfFp32};
pub use range::{range_stats, range_utilization, RangeUtilization};
pub use sweep::{sweep, SweepGrid, SweepRow};
