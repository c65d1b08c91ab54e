//! Metrics, evaluation protocols and reports.

mod metrics;
mod pipeline;
mod report;

pub use metrics::{aligned_pcc, compute_errors, error_stats, percent_change, ErrorStats, PointErrors, MAX_LAG_S};
pub use pipeline::{
    baseline_series, checker_input, cross_raw, fit_reference_m2, loso_raw, predict_session, prepare_dataset,
    prepare_session, run_cross, run_loso, session_sample, subjects, train_on, EvalConfig, Method, PreparedSession,
    RawRun, RawSeries,
};
pub use report::{
    aggregate_table, delta, evaluate, subgroup_report, Aggregate, Delta, MeanSe, Report, SubgroupField, SubgroupRow,
    SubgroupTable, VideoResult,
};
