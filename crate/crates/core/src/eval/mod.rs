//! Metrics, dev-set calibration, and the experiment protocols built on them.

mod calibration;
mod harness;
mod metrics;
mod report;

pub use calibration::{apply_calibration, fit_calibration, CalibrationParams, CalibrationSet};
pub use harness::{
    aggregate, cross_part_matrix, cross_task_eval, evaluate, fit_part_calibration, join_predictions,
    predict_joined, train_decode_comparison, train_per_part, CrossPartMatrix, JoinedPredictions, PartData,
    ScoredResponse, SystemRow,
};
pub use metrics::{average_ranks, pcc, rmse, src};
pub use report::{format_fixed3, render_report, render_report_tsv, Granularity, MetricReport};
