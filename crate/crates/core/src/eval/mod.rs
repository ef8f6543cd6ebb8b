//! Evaluation protocol: threshold-free metrics, corruptions, and the
//! evaluate / robustness / sweep / benchmark drivers.

pub mod corrupt;
pub mod harness;
pub mod metrics;
pub mod report;

pub use corrupt::{apply_corruption, CorruptionKind, CorruptionSpec};
pub use harness::{
    bench_runtime, evaluate, robustness_grid, sweep, BenchReport, EvalOptions, EvalReport,
    SweepAxis, SweepRow,
};
pub use metrics::{auc, roc_curve, RocCurve};
